//! Foot-structure constraint policy.
//!
//! A [`FootSpec`] describes the adhesive foot; [`build_policy`] turns it and the leg's
//! [`MotionBounds`] into a box over the twelve free control-point coordinates plus the shape
//! rules that cannot be expressed as a box. [`validate`] reports every violated rule with its
//! worst margin and [`sample_climbable`] draws uniformly from the feasible set by rejection.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    free_index, CompositeTrajectory, ControlPolygon, Durations, Point, FREE_COORD_NAMES, N_FREE,
};
use crate::kinematics::MotionBounds;
use crate::strategies::bending;

/// Margin above which a rule counts as violated.
pub const TOLERANCE: f64 = 1e-12;

/// Bending measures at or below this value count as zero.
pub const BENDING_TOLERANCE: f64 = 1e-9;

/// Draws after which a sampler below [`MIN_ACCEPTANCE`] gives up.
pub const STARVATION_DRAWS: usize = 10_000_000;

/// Smallest tolerated acceptance rate of the climbable sampler.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

/// Trajectory samples used when checking sampled positions and velocities.
pub const DEFAULT_GRID: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetachmentMode {
    /// The film peels off progressively while the foot moves forward.
    PeelForward,
    /// The foot lifts straight off and lands straight down.
    Vertical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootSpec {
    /// Adhesive film length `l_f` in meters.
    pub adhesive_length: f64,
    /// Minimum bend radius `f_c` of the film in meters.
    pub min_bend_radius: f64,
    /// Droop height `h_s` of the film in meters.
    pub droop_height: f64,
    pub landing_point: Point,
    pub detachment_mode: DetachmentMode,
    /// Overrides the minimum detachment length `l_d`.
    #[serde(default)]
    pub detachment_length: Option<f64>,
    /// Overrides the minimum detachment height `h_d` (default `1.5 f_c`).
    #[serde(default)]
    pub detachment_height: Option<f64>,
}

impl Default for FootSpec {
    fn default() -> Self {
        FootSpec {
            adhesive_length: 0.050,
            min_bend_radius: 0.006,
            droop_height: 0.005,
            landing_point: Point::new(0.12, 0.0, 0.0),
            detachment_mode: DetachmentMode::PeelForward,
            detachment_length: None,
            detachment_height: None,
        }
    }
}

impl FootSpec {
    /// A vertically detaching foot with the given minimum lift height.
    pub fn vertical(detachment_height: f64) -> Self {
        FootSpec {
            detachment_mode: DetachmentMode::Vertical,
            detachment_height: Some(detachment_height),
            ..FootSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.adhesive_length.is_finite() && self.adhesive_length > 0.0) {
            return Err(Error::Validation("adhesive length must be positive".into()));
        }
        if !(self.min_bend_radius.is_finite() && self.min_bend_radius >= 0.0) {
            return Err(Error::Validation("minimum bend radius must be non-negative".into()));
        }
        if !(self.droop_height.is_finite() && self.droop_height >= 0.0) {
            return Err(Error::Validation("droop height must be non-negative".into()));
        }
        if !self.landing_point.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("landing point must be finite".into()));
        }
        Ok(())
    }

    /// Minimum detachment point as `(l_d, h_d)`.
    pub fn min_detachment(&self) -> (f64, f64) {
        let h = self.detachment_height.unwrap_or(1.5 * self.min_bend_radius);
        let l = match self.detachment_mode {
            DetachmentMode::PeelForward => self.detachment_length.unwrap_or(0.0045),
            DetachmentMode::Vertical => self.detachment_length.unwrap_or(0.0),
        };
        (l, h)
    }
}

/// One side of a comparison between control-point coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Coord { point: usize, axis: usize },
    Const(f64),
}

impl Term {
    fn value(&self, poly: &ControlPolygon) -> f64 {
        match *self {
            Term::Coord { point, axis } => poly.point(point)[axis],
            Term::Const(v) => v,
        }
    }
}

fn coord(point: usize, axis: usize) -> Term {
    Term::Coord { point, axis }
}

/// A rule on the control polygon that is not a plain box bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShapeRule {
    /// `lhs < rhs`.
    Less { lhs: Term, rhs: Term },
    /// The point lies above the chord from P0 to P5.
    AboveChord { point: usize },
    /// P10 clears the circle of radius `l_f` centred at `(P0x + l_f, P0z)`.
    ArcClearance { adhesive_length: f64 },
    /// The point lies within `[P0, P_pl]` in x and z.
    InsideBounds { point: usize, upper: [f64; 2] },
}

impl ShapeRule {
    pub fn name(&self) -> String {
        let term = |t: &Term| match t {
            Term::Coord { point, axis } => format!("P{point}{}", if *axis == 0 { "x" } else { "z" }),
            Term::Const(v) => format!("{v}"),
        };
        match self {
            ShapeRule::Less { lhs, rhs } => format!("{} < {}", term(lhs), term(rhs)),
            ShapeRule::AboveChord { point } => format!("P{point} above chord P0-P5"),
            ShapeRule::ArcClearance { .. } => "P10 arc clearance".into(),
            ShapeRule::InsideBounds { point, .. } => format!("P{point} inside swing bounds"),
        }
    }

    /// Positive when violated.
    pub fn margin(&self, poly: &ControlPolygon) -> f64 {
        let p0 = poly.point(0);
        match self {
            ShapeRule::Less { lhs, rhs } => lhs.value(poly) - rhs.value(poly),
            ShapeRule::AboveChord { point } => {
                let p5 = poly.point(5);
                let p = poly.point(*point);
                let run = p5.x - p0.x;
                if run <= 0.0 {
                    return p0.x - p5.x + TOLERANCE * 2.0;
                }
                let slope = (p5.z - p0.z) / run;
                slope * (p.x - p0.x) - (p.z - p0.z)
            }
            ShapeRule::ArcClearance { adhesive_length: lf } => {
                let p10 = poly.point(10);
                let dx = p10.x - p0.x - lf;
                if dx.abs() >= *lf {
                    return f64::NEG_INFINITY;
                }
                (lf * lf - dx * dx).sqrt() - (p10.z - p0.z)
            }
            ShapeRule::InsideBounds { point, upper } => {
                let p = poly.point(*point);
                let rel = p - p0;
                [-rel.x, -rel.z, rel.x - upper[0], rel.z - upper[1]]
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }
}

/// Equality between free coordinates, indexed into the decision vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Equality {
    Pinned { index: usize, value: f64 },
    Same { source: usize, target: usize },
}

impl Equality {
    pub fn name(&self) -> String {
        match self {
            Equality::Pinned { index, value } => format!("{} = {value}", FREE_COORD_NAMES[*index]),
            Equality::Same { source, target } => {
                format!("{} = {}", FREE_COORD_NAMES[*target], FREE_COORD_NAMES[*source])
            }
        }
    }

    fn margin(&self, free: &[f64; N_FREE]) -> f64 {
        match *self {
            Equality::Pinned { index, value } => (free[index] - value).abs(),
            Equality::Same { source, target } => (free[target] - free[source]).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintPolicy {
    pub foot: FootSpec,
    pub bounds: MotionBounds,
    pub durations: Durations,
    /// Stance contact point P0; bounds are measured from here.
    pub start: Point,
    /// `(l_d, h_d)`.
    pub min_detachment: (f64, f64),
    /// `(x, z)` of the complete detachment point.
    pub complete_detachment: (f64, f64),
    pub var_box: [(f64, f64); N_FREE],
    pub shape_rules: Vec<ShapeRule>,
    pub equalities: Vec<Equality>,
    /// Number of trajectory samples checked by the validator.
    pub grid: usize,
}

/// Builds the constraint policy for a foot and its motion bounds.
pub fn build_policy(foot: &FootSpec, bounds: &MotionBounds, durations: Durations) -> Result<ConstraintPolicy> {
    foot.validate()?;
    bounds.validate()?;
    durations.validate()?;
    let start = Point::zeros();
    let [pxl, pzl] = bounds.position();
    let (ld, hd) = foot.min_detachment();
    let lf = foot.adhesive_length;
    let land = foot.landing_point - start;

    if !(land.x >= 0.0 && land.x < pxl && land.z >= 0.0 && land.z < pzl) {
        return Err(Error::Policy(format!(
            "landing point ({}, {}) lies outside the position bound ({pxl}, {pzl})",
            land.x, land.z
        )));
    }
    if foot.droop_height >= pzl {
        return Err(Error::Policy(format!(
            "droop height {} cannot be cleared below the position bound {pzl}",
            foot.droop_height
        )));
    }
    if hd >= pzl || ld >= pxl {
        return Err(Error::Policy(format!(
            "minimum detachment point ({ld}, {hd}) lies outside the position bound ({pxl}, {pzl})"
        )));
    }

    let x = 0;
    let z = 2;
    let lx = |p: usize| coord(p, x);
    let lz = |p: usize| coord(p, z);
    // Swing-point bounds reject most box draws, so they are checked first.
    let mut rules: Vec<ShapeRule> = (6..=9)
        .map(|p| ShapeRule::InsideBounds {
            point: p,
            upper: [pxl, pzl],
        })
        .collect();
    rules.extend([
        ShapeRule::Less { lhs: lx(3), rhs: lx(4) },
        ShapeRule::Less { lhs: lx(3), rhs: lx(5) },
        ShapeRule::Less { lhs: lx(4), rhs: lx(5) },
        ShapeRule::AboveChord { point: 3 },
        ShapeRule::AboveChord { point: 4 },
        ShapeRule::Less { lhs: lz(3), rhs: lz(5) },
        ShapeRule::Less { lhs: lz(4), rhs: lz(5) },
        ShapeRule::Less { lhs: lx(5), rhs: lx(10) },
    ]);

    let mut var_box = [(0.0, 0.0); N_FREE];
    let set = |b: &mut [(f64, f64); N_FREE], name: &str, lo: f64, hi: f64| {
        b[free_index(name).expect("known coordinate")] = (lo, hi);
    };
    set(&mut var_box, "P3x", start.x, start.x + pxl);
    set(&mut var_box, "P4x", start.x, start.x + pxl);
    set(&mut var_box, "P5x", start.x + ld, start.x + pxl);
    set(&mut var_box, "P3z", start.z, start.z + pzl);
    set(&mut var_box, "P4z", start.z, start.z + pzl);
    set(&mut var_box, "P5z", start.z + hd, start.z + pzl);

    let mut equalities = Vec::new();
    let complete_detachment;
    match foot.detachment_mode {
        DetachmentMode::PeelForward => {
            complete_detachment = (lf, hd);
            let z_lo = foot.droop_height.max(hd);
            set(&mut var_box, "P10x", start.x + lf.max(ld), start.x + pxl);
            set(&mut var_box, "P10z", start.z + z_lo, start.z + pzl);
            set(&mut var_box, "P11x", start.x + land.x, start.x + pxl);
            set(&mut var_box, "P12x", start.x + land.x, start.x + pxl);
            set(&mut var_box, "P11z", start.z + land.z, start.z + pzl);
            set(&mut var_box, "P12z", start.z + land.z, start.z + pzl);
            rules.push(ShapeRule::ArcClearance { adhesive_length: lf });
        }
        DetachmentMode::Vertical => {
            complete_detachment = (ld, hd);
            let z_lo = foot.droop_height.max(hd).max(land.z);
            let pin = foot.landing_point.x;
            for name in ["P10x", "P11x", "P12x"] {
                set(&mut var_box, name, pin, pin);
            }
            for name in ["P10z", "P11z", "P12z"] {
                set(&mut var_box, name, start.z + z_lo, start.z + pzl);
            }
            let idx = |n: &str| free_index(n).expect("known coordinate");
            equalities.push(Equality::Pinned {
                index: idx("P10x"),
                value: pin,
            });
            for (src, dst) in [("P10x", "P11x"), ("P10x", "P12x"), ("P10z", "P11z"), ("P10z", "P12z")] {
                equalities.push(Equality::Same {
                    source: idx(src),
                    target: idx(dst),
                });
            }
        }
    }

    let policy = ConstraintPolicy {
        foot: foot.clone(),
        bounds: *bounds,
        durations,
        start,
        min_detachment: (ld, hd),
        complete_detachment,
        var_box,
        shape_rules: rules,
        equalities,
        grid: DEFAULT_GRID,
    };
    variable_box(&policy)?;
    Ok(policy)
}

/// The decision-variable box, checked for empty intervals.
pub fn variable_box(policy: &ConstraintPolicy) -> Result<[(f64, f64); N_FREE]> {
    for (i, (lo, hi)) in policy.var_box.iter().enumerate() {
        let pinned = policy.equalities.iter().any(|e| match e {
            Equality::Pinned { index, .. } => *index == i,
            Equality::Same { target, .. } => *target == i,
        });
        let empty = if pinned { lo > hi } else { lo >= hi };
        if empty || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Infeasible(format!(
                "empty interval for {}: ({lo}, {hi})",
                FREE_COORD_NAMES[i]
            )));
        }
    }
    Ok(policy.var_box)
}

impl ConstraintPolicy {
    /// Replaces the box interval of a named free coordinate.
    pub fn with_box_override(mut self, name: &str, lo: f64, hi: f64) -> Result<Self> {
        let i = free_index(name).ok_or_else(|| Error::Validation(format!("unknown coordinate {name}")))?;
        self.var_box[i] = (lo, hi);
        Ok(self)
    }

    /// Forces the decision vector onto the policy's equalities.
    pub fn apply_equalities(&self, free: &mut [f64; N_FREE]) {
        for e in &self.equalities {
            if let Equality::Pinned { index, value } = *e {
                free[index] = value;
            }
        }
        for e in &self.equalities {
            if let Equality::Same { source, target } = *e {
                free[target] = free[source];
            }
        }
    }

    pub fn landing(&self) -> Point {
        self.foot.landing_point
    }

    /// Completes a polygon from a decision vector, applying the equalities first.
    pub fn polygon(&self, free: &[f64; N_FREE]) -> Result<ControlPolygon> {
        let mut free = *free;
        self.apply_equalities(&mut free);
        ControlPolygon::complete(&free, self.start, self.landing(), self.durations)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    /// Worst amount by which the rule is exceeded, in the rule's units.
    pub margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.violations.iter().map(|v| v.margin).sum()
    }

    pub fn contains(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn check(&mut self, margin: f64, rule: impl FnOnce() -> String) -> bool {
        if margin > TOLERANCE || margin.is_nan() {
            self.violations.push(Violation {
                rule: rule(),
                margin: if margin.is_nan() { f64::INFINITY } else { margin },
            });
            false
        } else {
            true
        }
    }
}

fn check_polygon(poly: &ControlPolygon, policy: &ConstraintPolicy, report: &mut ViolationReport, stop: bool) -> bool {
    let free = poly.free_coords();
    let mut ok = true;
    for (i, (lo, hi)) in policy.var_box.iter().enumerate() {
        ok &= report.check((lo - free[i]).max(free[i] - hi), || format!("box {}", FREE_COORD_NAMES[i]));
        if stop && !ok {
            return false;
        }
    }
    for e in &policy.equalities {
        ok &= report.check(e.margin(&free), || format!("equality {}", e.name()));
        if stop && !ok {
            return false;
        }
    }
    let p0 = policy.start;
    let p5 = poly.point(5) - p0;
    let (ld, hd) = policy.min_detachment;
    ok &= report.check((ld - p5.x).max(hd - p5.z), || "minimum detachment".into());
    let p10 = poly.point(10) - p0;
    let (cx, cz) = policy.complete_detachment;
    ok &= report.check((cx - p10.x).max(cz - p10.z), || "complete detachment".into());
    if stop && !ok {
        return false;
    }
    for rule in &policy.shape_rules {
        ok &= report.check(rule.margin(poly), || rule.name());
        if stop && !ok {
            return false;
        }
    }
    ok
}

fn check_trajectory(
    traj: &CompositeTrajectory,
    policy: &ConstraintPolicy,
    report: &mut ViolationReport,
    stop: bool,
) -> bool {
    let [pxl, pzl] = policy.bounds.position();
    let [vxl, vzl] = policy.bounds.velocity();
    let p0 = policy.start;
    let mut pos = f64::NEG_INFINITY;
    for p in &traj.position {
        let r = p - p0;
        pos = pos.max(r.x - pxl).max(r.z - pzl).max(-r.x).max(-r.z);
    }
    let ok_pos = report.check(pos, || "position bound".into());
    if stop && !ok_pos {
        return false;
    }
    let vel = traj
        .velocity
        .iter()
        .map(|v| (v.x.abs() - vxl).max(v.z.abs() - vzl))
        .fold(f64::NEG_INFINITY, f64::max);
    let ok_vel = report.check(vel, || "velocity bound".into());
    ok_pos && ok_vel
}

/// Reports every violated rule with its worst margin; an empty report means feasible.
pub fn validate(poly: &ControlPolygon, traj: &CompositeTrajectory, policy: &ConstraintPolicy) -> ViolationReport {
    let mut report = ViolationReport::default();
    check_polygon(poly, policy, &mut report, false);
    check_trajectory(traj, policy, &mut report, false);
    report
}

/// Short-circuiting feasibility test: validator rules plus zero bending.
pub fn is_climbable(poly: &ControlPolygon, policy: &ConstraintPolicy) -> bool {
    let mut scratch = ViolationReport::default();
    if !check_polygon(poly, policy, &mut scratch, true) {
        return false;
    }
    let Ok(traj) = poly.sample(policy.grid) else {
        return false;
    };
    check_trajectory(&traj, policy, &mut scratch, true) && bending(&traj.position, std::f64::consts::FRAC_PI_2) <= BENDING_TOLERANCE
}

/// Draws a uniform decision vector from the box and applies the equalities.
pub fn draw_free(policy: &ConstraintPolicy, rng: &mut impl Rng) -> [f64; N_FREE] {
    let mut free = [0.0; N_FREE];
    for (f, (lo, hi)) in free.iter_mut().zip(policy.var_box.iter()) {
        *f = if hi > lo { rng.gen_range(*lo..*hi) } else { *lo };
    }
    policy.apply_equalities(&mut free);
    free
}

/// Rejection-samples `count` climbable polygons; deterministic for a given seed.
pub fn sample_climbable(policy: &ConstraintPolicy, count: usize, seed: u64) -> Result<Vec<ControlPolygon>> {
    if count == 0 {
        return Err(Error::Validation("sample count must be at least 1".into()));
    }
    variable_box(policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0usize;
    while out.len() < count {
        let free = draw_free(policy, &mut rng);
        draws += 1;
        let poly = policy.polygon(&free)?;
        if is_climbable(&poly, policy) {
            out.push(poly);
        }
        if draws >= STARVATION_DRAWS && (out.len() as f64) < draws as f64 * MIN_ACCEPTANCE {
            return Err(Error::SamplerStarvation {
                accepted: out.len(),
                draws,
            });
        }
    }
    Ok(out)
}

pub fn write_polygons_jsonl<W: Write>(polys: &[ControlPolygon], mut w: W) -> Result<()> {
    for p in polys {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_polygons_jsonl<R: BufRead>(r: R) -> Result<Vec<ControlPolygon>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}
