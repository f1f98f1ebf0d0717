//! Three-segment quintic Bezier foot trajectories.
//!
//! The first segment (P0..P5) is the detachment phase, the second (P5..P10) the swing phase and
//! the third (P10..P15) the adhesion phase. Twelve coordinates (x and z of P3, P4, P5, P10, P11,
//! P12) are free; the remaining points follow from C² stitching at the junctions and from zero
//! velocity and acceleration at both ends.

use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Number of free scalar coordinates in a planar polygon.
pub const N_FREE: usize = 12;

pub const FREE_COORD_NAMES: [&str; N_FREE] = [
    "P3x", "P4x", "P5x", "P10x", "P11x", "P12x", "P3z", "P4z", "P5z", "P10z", "P11z", "P12z",
];

/// `(control point index, axis)` for every free coordinate, axis 0 = x and 2 = z.
pub const FREE_COORDS: [(usize, usize); N_FREE] = [
    (3, 0),
    (4, 0),
    (5, 0),
    (10, 0),
    (11, 0),
    (12, 0),
    (3, 2),
    (4, 2),
    (5, 2),
    (10, 2),
    (11, 2),
    (12, 2),
];

/// Index of a named free coordinate (`"P5x"` etc.) in the decision vector.
pub fn free_index(name: &str) -> Option<usize> {
    FREE_COORD_NAMES.iter().position(|n| *n == name)
}

const BINOM5: [f64; 6] = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
const BINOM4: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
const BINOM3: [f64; 4] = [1.0, 3.0, 3.0, 1.0];

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein basis polynomial `C(n,i) t^i (1-t)^(n-i)`.
pub fn bernstein(i: usize, n: usize, t: f64) -> Result<f64> {
    if i > n {
        return Err(Error::Domain(format!("basis index {i} exceeds degree {n}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("parameter {t} outside [0, 1]")));
    }
    Ok(binomial(n, i) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32))
}

#[inline]
fn basis<const N: usize>(coef: &[f64; N], t: f64) -> [f64; N] {
    let s = 1.0 - t;
    let n = N - 1;
    let mut out = [0.0; N];
    for (i, o) in out.iter_mut().enumerate() {
        *o = coef[i] * t.powi(i as i32) * s.powi((n - i) as i32);
    }
    out
}

/// Segment end times `T1 < T2 < T3` in seconds, the trajectory starting at 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Durations {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl Default for Durations {
    fn default() -> Self {
        Durations {
            t1: 0.3,
            t2: 0.6,
            t3: 0.9,
        }
    }
}

impl Durations {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        let d = Durations { t1, t2, t3 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.t1, self.t2, self.t3].iter().all(|v| v.is_finite())
            && 0.0 < self.t1
            && self.t1 < self.t2
            && self.t2 < self.t3;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "segment end times must satisfy 0 < T1 < T2 < T3, got ({}, {}, {})",
                self.t1, self.t2, self.t3
            )))
        }
    }

    /// Lengths of the three segments.
    pub fn lengths(&self) -> [f64; 3] {
        [self.t1, self.t2 - self.t1, self.t3 - self.t2]
    }

    /// Start time and length of segment `seg` (1-based).
    pub fn segment_span(&self, seg: usize) -> (f64, f64) {
        match seg {
            1 => (0.0, self.t1),
            2 => (self.t1, self.t2 - self.t1),
            _ => (self.t2, self.t3 - self.t2),
        }
    }

    pub fn is_uniform(&self) -> bool {
        let [a, b, c] = self.lengths();
        let tol = 1e-9 * self.t3;
        (a - b).abs() <= tol && (b - c).abs() <= tol
    }

    /// Segment (1-based) that owns world time `t`; junctions belong to the earlier segment.
    pub fn segment_of(&self, t: f64) -> usize {
        if t <= self.t1 {
            1
        } else if t <= self.t2 {
            2
        } else {
            3
        }
    }
}

/// Position, velocity and acceleration at one instant (world-time derivatives).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State {
    pub position: Point,
    pub velocity: Point,
    pub acceleration: Point,
}

/// The sixteen control points P0..P15 of the composite curve.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPolygon {
    points: [Point; 16],
    durations: Durations,
}

impl ControlPolygon {
    /// Completes a polygon from the twelve free coordinates and the fixed endpoints.
    ///
    /// P0..P2 collapse onto `start` and P13..P15 onto `end`. With equal segment lengths the
    /// stitched points are `P6 = 2P5 - P4`, `P7 = 4(P5 - P4) + P3`, `P9 = 2P10 - P11` and
    /// `P8 = 4(P10 - P11) + P12`; unequal lengths use the duration-weighted generalisation so
    /// that world-time velocity and acceleration stay continuous.
    pub fn complete(free: &[f64; N_FREE], start: Point, end: Point, durations: Durations) -> Result<Self> {
        durations.validate()?;
        if free.iter().any(|v| !v.is_finite()) || !start.iter().chain(end.iter()).all(|v| v.is_finite()) {
            return Err(Error::Validation("non-finite control point coordinate".into()));
        }
        let mut p = [Point::zeros(); 16];
        p[0] = start;
        p[1] = start;
        p[2] = start;
        p[13] = end;
        p[14] = end;
        p[15] = end;
        for idx in [3, 4, 5] {
            p[idx].y = start.y;
        }
        for idx in [10, 11, 12] {
            p[idx].y = end.y;
        }
        for (value, &(idx, axis)) in free.iter().zip(FREE_COORDS.iter()) {
            p[idx][axis] = *value;
        }

        if durations.is_uniform() {
            p[6] = 2.0 * p[5] - p[4];
            p[9] = 2.0 * p[10] - p[11];
            p[7] = 4.0 * (p[5] - p[4]) + p[3];
            p[8] = 4.0 * (p[10] - p[11]) + p[12];
        } else {
            let [h1, h2, h3] = durations.lengths();
            let r1 = h2 / h1;
            let r3 = h2 / h3;
            p[6] = p[5] + r1 * (p[5] - p[4]);
            p[7] = 2.0 * p[6] - p[5] + r1 * r1 * (p[5] - 2.0 * p[4] + p[3]);
            p[9] = p[10] + r3 * (p[10] - p[11]);
            p[8] = 2.0 * p[9] - p[10] + r3 * r3 * (p[12] - 2.0 * p[11] + p[10]);
        }
        Ok(ControlPolygon { points: p, durations })
    }

    /// A degenerate polygon with all sixteen points at `p`.
    pub fn constant(p: Point, durations: Durations) -> Result<Self> {
        durations.validate()?;
        Ok(ControlPolygon {
            points: [p; 16],
            durations,
        })
    }

    /// Rebuilds a polygon from a full point list, checking that it is a completed polygon.
    pub fn from_points(points: &[Point], durations: Durations) -> Result<Self> {
        if points.len() != 16 {
            return Err(Error::Validation(format!("expected 16 control points, got {}", points.len())));
        }
        let mut free = [0.0; N_FREE];
        for (f, &(idx, axis)) in free.iter_mut().zip(FREE_COORDS.iter()) {
            *f = points[idx][axis];
        }
        let rebuilt = Self::complete(&free, points[0], points[15], durations)?;
        let scale = points.iter().map(|p| p.amax()).fold(1.0, f64::max);
        for (i, (a, b)) in rebuilt.points.iter().zip(points).enumerate() {
            if (a - b).amax() > 1e-9 * scale {
                return Err(Error::Validation(format!(
                    "control point P{i} is inconsistent with the stitching constraints"
                )));
            }
        }
        Ok(rebuilt)
    }

    pub fn points(&self) -> &[Point; 16] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn durations(&self) -> Durations {
        self.durations
    }

    pub fn free_coords(&self) -> [f64; N_FREE] {
        let mut free = [0.0; N_FREE];
        for (f, &(idx, axis)) in free.iter_mut().zip(FREE_COORDS.iter()) {
            *f = self.points[idx][axis];
        }
        free
    }

    /// The six control points of segment `seg` (1-based).
    pub fn segment_points(&self, seg: usize) -> &[Point] {
        let first = 5 * (seg.clamp(1, 3) - 1);
        &self.points[first..first + 6]
    }

    /// Evaluates segment `seg` at local parameter `u` in `[0, 1]`.
    pub fn evaluate_segment(&self, seg: usize, u: f64) -> State {
        let cp = self.segment_points(seg);
        let (_, len) = self.durations.segment_span(seg);

        let b5 = basis(&BINOM5, u);
        let base = cp[0];
        let position = base + cp.iter().zip(b5.iter()).skip(1).fold(Point::zeros(), |acc, (p, b)| acc + (p - base) * *b);

        let b4 = basis(&BINOM4, u);
        let mut d1 = Point::zeros();
        for i in 0..5 {
            d1 += (cp[i + 1] - cp[i]) * b4[i];
        }
        let b3 = basis(&BINOM3, u);
        let mut d2 = Point::zeros();
        for i in 0..4 {
            d2 += (cp[i + 2] - 2.0 * cp[i + 1] + cp[i]) * b3[i];
        }
        State {
            position,
            velocity: d1 * (5.0 / len),
            acceleration: d2 * (20.0 / (len * len)),
        }
    }

    /// Evaluates the composite curve at world time `t` in `[0, T3]`.
    pub fn evaluate(&self, t: f64) -> Result<State> {
        let end = self.durations.t3;
        if !(0.0..=end).contains(&t) {
            return Err(Error::OutOfRange { t, end });
        }
        let seg = self.durations.segment_of(t);
        let (start, len) = self.durations.segment_span(seg);
        let u = ((t - start) / len).clamp(0.0, 1.0);
        Ok(self.evaluate_segment(seg, u))
    }

    /// Samples `n` points on a uniform time grid over `[0, T3]`.
    pub fn sample(&self, n: usize) -> Result<CompositeTrajectory> {
        if n < 3 {
            return Err(Error::Validation(format!("need at least 3 samples, got {n}")));
        }
        let t3 = self.durations.t3;
        let mut traj = CompositeTrajectory::with_capacity(n, self.durations);
        for i in 0..n {
            let t = if i == n - 1 { t3 } else { t3 * i as f64 / (n - 1) as f64 };
            let state = self.evaluate(t)?;
            traj.times.push(t);
            traj.position.push(state.position);
            traj.velocity.push(state.velocity);
            traj.acceleration.push(state.acceleration);
            traj.segment_of.push(self.durations.segment_of(t) as u8);
        }
        Ok(traj)
    }
}

#[derive(Serialize, Deserialize)]
struct PolygonRecord {
    points: Vec<[f64; 3]>,
    free: Vec<f64>,
    durations: Durations,
}

impl Serialize for ControlPolygon {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PolygonRecord {
            points: self.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            free: self.free_coords().to_vec(),
            durations: self.durations,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ControlPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rec = PolygonRecord::deserialize(deserializer)?;
        let points: Vec<Point> = rec.points.iter().map(|p| Point::new(p[0], p[1], p[2])).collect();
        ControlPolygon::from_points(&points, rec.durations).map_err(serde::de::Error::custom)
    }
}

/// A time-sampled foot trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeTrajectory {
    pub times: Vec<f64>,
    pub position: Vec<Point>,
    pub velocity: Vec<Point>,
    pub acceleration: Vec<Point>,
    /// Owning segment (1, 2 or 3) of each sample.
    pub segment_of: Vec<u8>,
    pub durations: Durations,
}

impl CompositeTrajectory {
    fn with_capacity(n: usize, durations: Durations) -> Self {
        CompositeTrajectory {
            times: Vec::with_capacity(n),
            position: Vec::with_capacity(n),
            velocity: Vec::with_capacity(n),
            acceleration: Vec::with_capacity(n),
            segment_of: Vec::with_capacity(n),
            durations,
        }
    }

    /// Builds a trajectory from externally generated samples; segments are assigned by time.
    pub fn from_samples(
        times: Vec<f64>,
        position: Vec<Point>,
        velocity: Vec<Point>,
        acceleration: Vec<Point>,
        durations: Durations,
    ) -> Result<Self> {
        durations.validate()?;
        let n = times.len();
        if n < 3 {
            return Err(Error::Validation(format!("need at least 3 samples, got {n}")));
        }
        if position.len() != n || velocity.len() != n || acceleration.len() != n {
            return Err(Error::Shape("sample arrays differ in length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("sample times must be strictly increasing".into()));
        }
        let segment_of = times.iter().map(|&t| durations.segment_of(t) as u8).collect();
        Ok(CompositeTrajectory {
            times,
            position,
            velocity,
            acceleration,
            segment_of,
            durations,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Length of the position polyline.
    pub fn arc_length(&self) -> f64 {
        self.position.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Per-step `(position, velocity)` feature rows.
    pub fn features(&self) -> Vec<[f64; 6]> {
        self.position
            .iter()
            .zip(&self.velocity)
            .map(|(p, v)| [p.x, p.y, p.z, v.x, v.y, v.z])
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,px,py,pz,vx,vy,vz,ax,ay,az,segment")?;
        for i in 0..self.len() {
            let (p, v, a) = (self.position[i], self.velocity[i], self.acceleration[i]);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.times[i], p.x, p.y, p.z, v.x, v.y, v.z, a.x, a.y, a.z, self.segment_of[i]
            )?;
        }
        Ok(())
    }
}
