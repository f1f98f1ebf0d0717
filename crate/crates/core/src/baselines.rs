//! Reference swing trajectories: cycloid, degree-6 polynomial and a random climbable Bezier.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constraints::{sample_climbable, ConstraintPolicy};
use crate::error::{Error, Result};
use crate::geometry::{CompositeTrajectory, Durations, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Polynomial,
    Cycloidal,
    RandomBezier,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Polynomial, Baseline::Cycloidal, Baseline::RandomBezier];

    pub fn label(&self) -> &'static str {
        match self {
            Baseline::Polynomial => "Polynomial",
            Baseline::Cycloidal => "Cycloidal",
            Baseline::RandomBezier => "Random bezier",
        }
    }
}

/// Stride and lift height shared by the analytic baselines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gait {
    pub start: Point,
    pub stride: f64,
    pub height: f64,
    pub durations: Durations,
}

fn build(gait: &Gait, n: usize, f: impl Fn(f64) -> ([f64; 2], [f64; 2], [f64; 2])) -> Result<CompositeTrajectory> {
    if n < 3 {
        return Err(Error::Validation("need at least 3 samples".into()));
    }
    if !(gait.stride.is_finite() && gait.height.is_finite() && gait.stride >= 0.0 && gait.height >= 0.0) {
        return Err(Error::Validation("stride and height must be non-negative".into()));
    }
    let t3 = gait.durations.t3;
    let mut times = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    let mut vel = Vec::with_capacity(n);
    let mut acc = Vec::with_capacity(n);
    for i in 0..n {
        let t = if i + 1 == n { t3 } else { t3 * i as f64 / (n - 1) as f64 };
        let s = t / t3;
        let ([x, z], [dx, dz], [ddx, ddz]) = f(s);
        times.push(t);
        pos.push(gait.start + Point::new(x, 0.0, z));
        vel.push(Point::new(dx / t3, 0.0, dz / t3));
        acc.push(Point::new(ddx / (t3 * t3), 0.0, ddz / (t3 * t3)));
    }
    CompositeTrajectory::from_samples(times, pos, vel, acc, gait.durations)
}

/// Cycloidal swing: `x = S(φ - sin φ)/2π`, `z = H(1 - cos φ)/2` with `φ = 2πs`.
pub fn cycloid(gait: &Gait, n: usize) -> Result<CompositeTrajectory> {
    let (sx, h) = (gait.stride, gait.height);
    build(gait, n, |s| {
        let phi = 2.0 * PI * s;
        let (sp, cp) = phi.sin_cos();
        (
            [sx * (phi - sp) / (2.0 * PI), h * (1.0 - cp) / 2.0],
            [sx * (1.0 - cp), h * PI * sp],
            [sx * 2.0 * PI * sp, h * 2.0 * PI * PI * cp],
        )
    })
}

/// Degree-6 polynomial swing with zero velocity and acceleration at both ends:
/// quintic smoothstep in x and `64H s³(1 - s)³` in z.
pub fn polynomial(gait: &Gait, n: usize) -> Result<CompositeTrajectory> {
    let (sx, h) = (gait.stride, gait.height);
    build(gait, n, |s| {
        let x = sx * s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
        let dx = sx * 30.0 * s * s * (1.0 - s) * (1.0 - s);
        let ddx = sx * 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        let u = 1.0 - s;
        let z = 64.0 * h * s.powi(3) * u.powi(3);
        let dz = 64.0 * h * 3.0 * s * s * u * u * (u - s);
        let ddz = 64.0 * h * 6.0 * s * u * (u * u - 3.0 * s * u + s * s);
        ([x, z], [dx, dz], [ddx, ddz])
    })
}

/// A seeded member of the climbable set.
pub fn random_bezier(policy: &ConstraintPolicy, n: usize, seed: u64) -> Result<CompositeTrajectory> {
    sample_climbable(policy, 1, seed)?.remove(0).sample(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gait() -> Gait {
        Gait {
            start: Point::zeros(),
            stride: 0.12,
            height: 0.03,
            durations: Durations::default(),
        }
    }

    #[test]
    fn endpoints_and_apex() {
        for traj in [cycloid(&gait(), 201).unwrap(), polynomial(&gait(), 201).unwrap()] {
            let last = traj.len() - 1;
            assert!((traj.position[0] - Point::zeros()).norm() < 1e-15);
            assert!((traj.position[last] - Point::new(0.12, 0.0, 0.0)).norm() < 1e-12);
            assert!(traj.velocity[0].norm() < 1e-12 && traj.velocity[last].norm() < 1e-12);
            assert!((traj.position[100].z - 0.03).abs() < 1e-12);
        }
        let p = polynomial(&gait(), 201).unwrap();
        assert!(p.acceleration[0].norm() < 1e-12 && p.acceleration[200].norm() < 1e-9);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for traj in [cycloid(&gait(), 4001).unwrap(), polynomial(&gait(), 4001).unwrap()] {
            let dt = traj.times[1] - traj.times[0];
            for i in (1..traj.len() - 1).step_by(97) {
                let v = (traj.position[i + 1] - traj.position[i - 1]) / (2.0 * dt);
                let a = (traj.position[i + 1] - 2.0 * traj.position[i] + traj.position[i - 1]) / (dt * dt);
                assert!((v - traj.velocity[i]).norm() < 1e-5);
                assert!((a - traj.acceleration[i]).norm() < 1e-3);
            }
        }
    }
}
