//! 3-DOF serial leg: forward and inverse kinematics, the foot Jacobian, and the foot
//! position/velocity bounds that feed the constraint policy.
//!
//! The chain is a yaw joint about the wall normal (z) at the hip, followed by two pitch joints.
//! With all angles zero the leg is fully extended along +x. Positions are expressed in the foot
//! displacement frame whose origin is the stance contact point, so `hip_offset` places the hip
//! relative to the foot's starting position.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegModel {
    /// Coxa, femur and tibia lengths in meters.
    pub link_lengths: [f64; 3],
    /// `(min, max)` joint angles in radians.
    pub joint_limits: [(f64, f64); 3],
    /// `(min, max)` joint rates in rad/s.
    pub joint_velocity_limits: [(f64, f64); 3],
    pub hip_offset: Vector3<f64>,
    #[serde(default = "default_position_safety")]
    pub position_safety: f64,
    #[serde(default = "default_velocity_safety")]
    pub velocity_safety: f64,
}

fn default_position_safety() -> f64 {
    0.85
}

fn default_velocity_safety() -> f64 {
    0.80
}

impl Default for LegModel {
    fn default() -> Self {
        LegModel {
            link_lengths: [0.06, 0.12, 0.14],
            joint_limits: [(-1.2, 1.2), (-1.2, 2.4), (-2.6, 0.0)],
            joint_velocity_limits: [(-7.3, 7.3), (-6.8, 6.8), (-6.8, 6.8)],
            hip_offset: Vector3::new(-0.13, 0.0, 0.06),
            position_safety: default_position_safety(),
            velocity_safety: default_velocity_safety(),
        }
    }
}

impl LegModel {
    pub fn validate(&self) -> Result<()> {
        if self.link_lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Validation("link lengths must be positive".into()));
        }
        for (i, (lo, hi)) in self.joint_limits.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Validation(format!("joint {} limits must satisfy min <= max", i + 1)));
            }
        }
        for (i, (lo, hi)) in self.joint_velocity_limits.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Validation(format!(
                    "joint {} velocity limits must satisfy min <= max",
                    i + 1
                )));
            }
        }
        if !self.hip_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("hip offset must be finite".into()));
        }
        for (name, s) in [("position", self.position_safety), ("velocity", self.velocity_safety)] {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Validation(format!("{name} safety factor must lie in (0, 1]")));
            }
        }
        Ok(())
    }

    /// Foot position for joint angles `theta`.
    pub fn forward_kinematics(&self, theta: &[f64; 3]) -> Vector3<f64> {
        let [l1, l2, l3] = self.link_lengths;
        let (s1, c1) = theta[0].sin_cos();
        let (s2, c2) = theta[1].sin_cos();
        let (s23, c23) = (theta[1] + theta[2]).sin_cos();
        let r = l1 + l2 * c2 + l3 * c23;
        let z = -(l2 * s2 + l3 * s23);
        self.hip_offset + Vector3::new(r * c1, r * s1, z)
    }

    /// Knee-down (third joint <= 0) inverse kinematics.
    pub fn inverse_kinematics(&self, p: &Vector3<f64>) -> Result<[f64; 3]> {
        let [l1, l2, l3] = self.link_lengths;
        let d = p - self.hip_offset;
        if !d.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("target must be finite".into()));
        }
        let rho = d.x.hypot(d.y);
        let yaw = if rho < 1e-15 { 0.0 } else { d.y.atan2(d.x) };
        let r = rho - l1;
        let h = -d.z;
        let dist = r.hypot(h);
        let cos_knee = (dist * dist - l2 * l2 - l3 * l3) / (2.0 * l2 * l3);
        let tol = 1e-12;
        if cos_knee > 1.0 + tol {
            return Err(Error::Unreachable {
                distance: dist - (l2 + l3),
            });
        }
        if cos_knee < -1.0 - tol {
            return Err(Error::Unreachable {
                distance: (l2 - l3).abs() - dist,
            });
        }
        let knee = -cos_knee.clamp(-1.0, 1.0).acos();
        let (sk, ck) = knee.sin_cos();
        let hip = h.atan2(r) - (l3 * sk).atan2(l2 + l3 * ck);
        Ok([yaw, hip, knee])
    }

    /// Foot Jacobian `d p / d theta`.
    pub fn jacobian(&self, theta: &[f64; 3]) -> Matrix3<f64> {
        let [l1, l2, l3] = self.link_lengths;
        let (s1, c1) = theta[0].sin_cos();
        let (s2, c2) = theta[1].sin_cos();
        let (s23, c23) = (theta[1] + theta[2]).sin_cos();
        let r = l1 + l2 * c2 + l3 * c23;
        let dr2 = -l2 * s2 - l3 * s23;
        let dr3 = -l3 * s23;
        let dz2 = -(l2 * c2 + l3 * c23);
        let dz3 = -l3 * c23;
        Matrix3::new(
            -r * s1,
            dr2 * c1,
            dr3 * c1,
            r * c1,
            dr2 * s1,
            dr3 * s1,
            0.0,
            dz2,
            dz3,
        )
    }

    /// Violation of the reach-versus-lift inequality `z - x <= 0` at `theta`.
    pub fn lift_violation(&self, theta: &[f64; 3]) -> f64 {
        let p = self.forward_kinematics(theta);
        (p.z - p.x).max(0.0)
    }
}

/// Foot position and velocity limits in the displacement frame, with safety factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionBounds {
    /// Unscaled `(x, z)` reach in meters.
    pub position_raw: [f64; 2],
    /// Unscaled `(x, z)` speed in m/s.
    pub velocity_raw: [f64; 2],
    pub position_safety: f64,
    pub velocity_safety: f64,
}

impl MotionBounds {
    pub fn new(position_raw: [f64; 2], velocity_raw: [f64; 2], position_safety: f64, velocity_safety: f64) -> Self {
        MotionBounds {
            position_raw,
            velocity_raw,
            position_safety,
            velocity_safety,
        }
    }

    /// Bounds that are already safety-scaled.
    pub fn scaled(position: [f64; 2], velocity: [f64; 2]) -> Self {
        Self::new(position, velocity, 1.0, 1.0)
    }

    /// Safety-scaled position bound `(P_plx, P_plz)`.
    pub fn position(&self) -> [f64; 2] {
        [
            self.position_raw[0] * self.position_safety,
            self.position_raw[1] * self.position_safety,
        ]
    }

    /// Safety-scaled velocity bound `(V_plx, V_plz)`.
    pub fn velocity(&self) -> [f64; 2] {
        [
            self.velocity_raw[0] * self.velocity_safety,
            self.velocity_raw[1] * self.velocity_safety,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.position().into_iter().chain(self.velocity());
        for v in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation("motion bounds must be positive".into()));
            }
        }
        Ok(())
    }
}

impl Default for MotionBounds {
    /// Final bounds of the reference peel-film leg: `P_pl = (0.160, 0.064)`, `V_pl = (0.80, 0.77)`.
    fn default() -> Self {
        Self::scaled([0.160, 0.064], [0.80, 0.77])
    }
}

#[derive(Serialize, Deserialize)]
struct BoundsRecord {
    #[serde(default)]
    position_raw: Option<[f64; 2]>,
    #[serde(default)]
    velocity_raw: Option<[f64; 2]>,
    #[serde(default)]
    position_safety: Option<f64>,
    #[serde(default)]
    velocity_safety: Option<f64>,
    #[serde(default)]
    position: Option<[f64; 2]>,
    #[serde(default)]
    velocity: Option<[f64; 2]>,
}

impl Serialize for MotionBounds {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BoundsRecord {
            position_raw: Some(self.position_raw),
            velocity_raw: Some(self.velocity_raw),
            position_safety: Some(self.position_safety),
            velocity_safety: Some(self.velocity_safety),
            position: Some(self.position()),
            velocity: Some(self.velocity()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MotionBounds {
    /// Accepts either raw bounds with safety factors or final `position`/`velocity` bounds.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = BoundsRecord::deserialize(d)?;
        let part = |raw: Option<[f64; 2]>, factor: Option<f64>, fin: Option<[f64; 2]>, name: &str| match (raw, fin) {
            (Some(r), _) => Ok((r, factor.unwrap_or(1.0))),
            (None, Some(f)) => Ok((f, 1.0)),
            (None, None) => Err(D::Error::custom(format!("missing field `{name}`"))),
        };
        let (p, ps) = part(rec.position_raw, rec.position_safety, rec.position, "position")?;
        let (v, vs) = part(rec.velocity_raw, rec.velocity_safety, rec.velocity, "velocity")?;
        Ok(MotionBounds::new(p, v, ps, vs))
    }
}

/// Differential-evolution settings for the bound solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSolverConfig {
    pub population: usize,
    pub iterations: usize,
    pub seed: u64,
    pub differential_weight: f64,
    pub crossover_rate: f64,
}

impl Default for BoundSolverConfig {
    fn default() -> Self {
        BoundSolverConfig {
            population: 64,
            iterations: 500,
            seed: 0,
            differential_weight: 0.5,
            crossover_rate: 0.9,
        }
    }
}

/// Raw reach per axis together with the joint configuration attaining it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionBound {
    pub raw: [f64; 2],
    pub scaled: [f64; 2],
    pub theta_x: [f64; 3],
    pub theta_z: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityBound {
    pub raw: [f64; 2],
    pub scaled: [f64; 2],
    pub theta_x: [f64; 3],
    pub rate_x: [f64; 3],
    pub theta_z: [f64; 3],
    pub rate_z: [f64; 3],
}

#[derive(Clone, Copy)]
struct Candidate {
    x: [f64; 3],
    value: f64,
    violation: f64,
}

impl Candidate {
    /// Feasibility first, then larger objective, then smaller violation.
    fn beats(&self, other: &Candidate) -> bool {
        match (self.violation <= 0.0, other.violation <= 0.0) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.value > other.value,
            (false, false) => self.violation < other.violation,
        }
    }
}

/// Maximizes `f` over a box under a single inequality; `f` returns `(value, violation)`.
fn maximize_in_box<F>(bounds: &[(f64, f64); 3], f: F, cfg: &BoundSolverConfig) -> Option<Candidate>
where
    F: Fn(&[f64; 3]) -> (f64, f64),
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let np = cfg.population.max(4);
    let eval = |x: [f64; 3]| {
        let (value, violation) = f(&x);
        Candidate { x, value, violation }
    };
    let draw = |rng: &mut ChaCha8Rng| {
        let mut x = [0.0; 3];
        for (xi, (lo, hi)) in x.iter_mut().zip(bounds) {
            *xi = if hi > lo { rng.gen_range(*lo..=*hi) } else { *lo };
        }
        x
    };
    let mut pop: Vec<Candidate> = (0..np).map(|_| eval(draw(&mut rng))).collect();

    for _ in 0..cfg.iterations {
        for i in 0..np {
            let mut pick = || loop {
                let k = rng.gen_range(0..np);
                if k != i {
                    break k;
                }
            };
            let (a, mut b, mut c) = (pick(), pick(), pick());
            while b == a {
                b = pick();
            }
            while c == a || c == b {
                c = pick();
            }
            let jrand = rng.gen_range(0..3);
            let mut trial = pop[i].x;
            for j in 0..3 {
                if j == jrand || rng.gen::<f64>() < cfg.crossover_rate {
                    let v = pop[a].x[j] + cfg.differential_weight * (pop[b].x[j] - pop[c].x[j]);
                    trial[j] = v.clamp(bounds[j].0, bounds[j].1);
                }
            }
            let cand = eval(trial);
            if !pop[i].beats(&cand) {
                pop[i] = cand;
            }
        }
    }

    let mut best = pop[0];
    for c in &pop[1..] {
        if c.beats(&best) {
            best = *c;
        }
    }
    if best.violation > 0.0 {
        return None;
    }

    // Compass search polish around the best feasible point.
    let mut step: [f64; 3] = std::array::from_fn(|j| 0.05 * (bounds[j].1 - bounds[j].0));
    while step.iter().any(|s| *s > 1e-13) {
        let mut improved = false;
        for j in 0..3 {
            if step[j] <= 1e-13 {
                continue;
            }
            for dir in [1.0, -1.0] {
                let mut x = best.x;
                x[j] = (x[j] + dir * step[j]).clamp(bounds[j].0, bounds[j].1);
                let cand = eval(x);
                if cand.violation <= 0.0 && cand.value > best.value {
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            for s in step.iter_mut() {
                *s *= 0.5;
            }
        }
    }
    Some(best)
}

/// Largest reachable foot displacement along x and along z under `z - x <= 0`.
pub fn solve_position_bound(model: &LegModel, s_p: f64, cfg: &BoundSolverConfig) -> Result<PositionBound> {
    model.validate()?;
    let solve = |axis: usize, seed_offset: u64| {
        let cfg = BoundSolverConfig {
            seed: cfg.seed.wrapping_add(seed_offset),
            ..*cfg
        };
        maximize_in_box(
            &model.joint_limits,
            |th| {
                let p = model.forward_kinematics(th);
                (p[axis], (p.z - p.x).max(0.0))
            },
            &cfg,
        )
        .ok_or_else(|| Error::Infeasible("no joint configuration satisfies z <= x".into()))
    };
    let bx = solve(0, 0)?;
    let bz = solve(2, 1)?;
    let raw = [bx.value, bz.value];
    Ok(PositionBound {
        raw,
        scaled: [raw[0] * s_p, raw[1] * s_p],
        theta_x: bx.x,
        theta_z: bz.x,
    })
}

/// Best `|row . rate|` over the joint-rate box, and the rate vector attaining it.
fn best_rate(row: [f64; 3], limits: &[(f64, f64); 3]) -> (f64, [f64; 3]) {
    let mut pos = (0.0, [0.0; 3]);
    let mut neg = (0.0, [0.0; 3]);
    for i in 0..3 {
        let (lo, hi) = limits[i];
        let (a, b) = (row[i] * lo, row[i] * hi);
        if a >= b {
            pos.0 += a;
            pos.1[i] = lo;
            neg.0 += b;
            neg.1[i] = hi;
        } else {
            pos.0 += b;
            pos.1[i] = hi;
            neg.0 += a;
            neg.1[i] = lo;
        }
    }
    if pos.0 >= -neg.0 {
        (pos.0, pos.1)
    } else {
        (-neg.0, neg.1)
    }
}

/// Largest foot speed along x and along z over the joint and joint-rate boxes under `z - x <= 0`.
pub fn solve_velocity_bound(model: &LegModel, s_v: f64, cfg: &BoundSolverConfig) -> Result<VelocityBound> {
    model.validate()?;
    let rates = model.joint_velocity_limits;
    let solve = |axis: usize, seed_offset: u64| {
        let cfg = BoundSolverConfig {
            seed: cfg.seed.wrapping_add(seed_offset),
            ..*cfg
        };
        maximize_in_box(
            &model.joint_limits,
            |th| {
                let j = model.jacobian(th);
                let row = [j[(axis, 0)], j[(axis, 1)], j[(axis, 2)]];
                (best_rate(row, &rates).0, model.lift_violation(th))
            },
            &cfg,
        )
        .ok_or_else(|| Error::Infeasible("no joint configuration satisfies z <= x".into()))
    };
    let bx = solve(0, 2)?;
    let bz = solve(2, 3)?;
    let row = |th: &[f64; 3], axis: usize| {
        let j = model.jacobian(th);
        [j[(axis, 0)], j[(axis, 1)], j[(axis, 2)]]
    };
    let raw = [bx.value, bz.value];
    Ok(VelocityBound {
        raw,
        scaled: [raw[0] * s_v, raw[1] * s_v],
        theta_x: bx.x,
        rate_x: best_rate(row(&bx.x, 0), &rates).1,
        theta_z: bz.x,
        rate_z: best_rate(row(&bz.x, 2), &rates).1,
    })
}

/// Solves both bounds with the model's own safety factors.
pub fn solve_motion_bounds(model: &LegModel, cfg: &BoundSolverConfig) -> Result<(MotionBounds, PositionBound, VelocityBound)> {
    let pos = solve_position_bound(model, model.position_safety, cfg)?;
    let vel = solve_velocity_bound(model, model.velocity_safety, cfg)?;
    let bounds = MotionBounds::new(pos.raw, vel.raw, model.position_safety, model.velocity_safety);
    Ok((bounds, pos, vel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn straight_chain_reach() {
        let model = LegModel {
            link_lengths: [0.1, 0.2, 0.2],
            ..LegModel::default()
        };
        let p = model.forward_kinematics(&[0.0, 0.0, 0.0]);
        assert!(((p - model.hip_offset).norm() - 0.5).abs() < 1e-12);
        let a = model.forward_kinematics(&[PI, 0.3, -0.2]);
        let b = model.forward_kinematics(&[-PI, 0.3, -0.2]);
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn ik_at_full_extension() {
        let model = LegModel::default();
        let p = model.forward_kinematics(&[0.2, 0.4, 0.0]);
        let th = model.inverse_kinematics(&p).unwrap();
        assert!(th[2].abs() < 1e-6);
        assert!((model.forward_kinematics(&th) - p).norm() < 1e-9);
    }

    #[test]
    fn ik_rejects_far_targets() {
        let model = LegModel::default();
        let far = model.hip_offset + Vector3::new(0.4, 0.0, 0.0);
        match model.inverse_kinematics(&far) {
            Err(Error::Unreachable { distance }) => assert!(distance > 0.0),
            other => panic!("expected unreachable, got {other:?}"),
        }
    }

    #[test]
    fn default_workspace_contains_stance_and_landing() {
        let model = LegModel::default();
        for target in [Vector3::zeros(), Vector3::new(0.12, 0.0, 0.0)] {
            let th = model.inverse_kinematics(&target).unwrap();
            for (a, (lo, hi)) in th.iter().zip(&model.joint_limits) {
                assert!(a >= lo && a <= hi, "{th:?}");
            }
        }
    }

    #[test]
    fn straight_leg_is_singular() {
        let model = LegModel::default();
        let j = model.jacobian(&[0.3, 0.5, 0.0]);
        assert!(j.determinant().abs() < 1e-9);
        let v = j * Vector3::zeros();
        assert_eq!(v, Vector3::zeros());
    }

    #[test]
    fn collapsed_box_returns_that_pose() {
        let th = [0.1, 0.2, -1.0];
        let model = LegModel {
            joint_limits: [(th[0], th[0]), (th[1], th[1]), (th[2], th[2])],
            ..LegModel::default()
        };
        let p = model.forward_kinematics(&th);
        assert!(p.z <= p.x);
        let cfg = BoundSolverConfig {
            iterations: 20,
            ..Default::default()
        };
        let b = solve_position_bound(&model, 1.0, &cfg).unwrap();
        assert_eq!(b.raw, [p.x, p.z]);
    }

    #[test]
    fn zero_rate_limits_give_zero_velocity_bound() {
        let model = LegModel {
            joint_velocity_limits: [(0.0, 0.0); 3],
            ..LegModel::default()
        };
        let cfg = BoundSolverConfig {
            iterations: 20,
            ..Default::default()
        };
        let b = solve_velocity_bound(&model, 0.8, &cfg).unwrap();
        assert_eq!(b.raw, [0.0, 0.0]);
    }

    #[test]
    fn infeasible_joint_box_is_reported() {
        // Foot always far above and behind the hip: z > x everywhere.
        let model = LegModel {
            hip_offset: Vector3::new(-1.0, 0.0, 1.0),
            joint_limits: [(0.0, 0.1), (0.0, 0.1), (-0.1, 0.0)],
            ..LegModel::default()
        };
        let cfg = BoundSolverConfig {
            iterations: 10,
            ..Default::default()
        };
        assert!(matches!(solve_position_bound(&model, 1.0, &cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn bounds_deserialize_from_final_or_raw() {
        let b: MotionBounds = serde_json::from_str(r#"{"position":[0.16,0.064],"velocity":[0.8,0.77]}"#).unwrap();
        assert_eq!(b.position(), [0.16, 0.064]);
        let json = serde_json::to_string(&MotionBounds::new([0.2, 0.1], [1.0, 1.0], 0.5, 0.5)).unwrap();
        let back: MotionBounds = serde_json::from_str(&json).unwrap();
        assert_eq!(back.position(), [0.1, 0.05]);
        assert!(serde_json::from_str::<MotionBounds>(r#"{"position":[0.16,0.064]}"#).is_err());
    }

    #[test]
    fn safety_scaling_is_linear() {
        let b = MotionBounds::new([0.189, 0.074], [1.012, 0.961], 0.85, 0.80);
        assert_eq!(b.position(), [0.189 * 0.85, 0.074 * 0.85]);
        assert_eq!(b.velocity(), [1.012 * 0.80, 0.961 * 0.80]);
    }
}
