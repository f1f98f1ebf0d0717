//! Synthetic force oracle standing in for a measurement rig.
//!
//! Detachment force follows a Kendall-style peel law scaled by the still-attached film length;
//! pre-pressure is a half-sine impact pulse at touchdown on top of a baseline.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CompositeTrajectory;

/// Height above the start plane below which a segment-3 sample counts as touched down.
pub const TOUCHDOWN_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    /// Peel energy `R` in J/m².
    pub peel_energy: f64,
    /// Pad width `w` in meters.
    pub pad_width: f64,
    /// Adhesive film length `l_f` in meters.
    pub adhesive_length: f64,
    /// Regularizer `ε_k` keeping the peel force finite at zero peel angle.
    pub peel_regularizer: f64,
    /// Contact stiffness `k_p` in N/m.
    pub contact_stiffness: f64,
    /// Impact pulse duration `τ` in seconds.
    pub impact_duration: f64,
    /// Pre-pressure baseline `a` in newtons.
    pub baseline: f64,
    /// Standard deviation of the additive Gaussian noise in newtons.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            peel_energy: 30.0,
            pad_width: 0.05,
            adhesive_length: 0.05,
            peel_regularizer: 0.1,
            contact_stiffness: 800.0,
            impact_duration: 0.05,
            baseline: 5.85,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("peel energy", self.peel_energy),
            ("pad width", self.pad_width),
            ("adhesive length", self.adhesive_length),
            ("peel regularizer", self.peel_regularizer),
            ("contact stiffness", self.contact_stiffness),
            ("impact duration", self.impact_duration),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("baseline", self.baseline), ("noise sigma", self.noise_sigma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Force series aligned with a trajectory's sample grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSeries {
    pub times: Vec<f64>,
    pub detachment_force: Vec<f64>,
    pub pre_pressure: Vec<f64>,
}

impl ForceSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Peel angle at sample `i`; falls back to the neighbouring displacement when the foot is at rest.
fn peel_angle(traj: &CompositeTrajectory, i: usize) -> f64 {
    let mut d = traj.velocity[i];
    if d.norm() < 1e-9 {
        d = if i + 1 < traj.len() {
            traj.position[i + 1] - traj.position[i]
        } else {
            traj.position[i] - traj.position[i - 1]
        };
    }
    d.z.atan2(d.x.max(1e-9))
}

/// Noise-free detachment force at every sample.
pub fn peel_force(traj: &CompositeTrajectory, params: &OracleParams) -> Vec<f64> {
    let x0 = traj.position[0].x;
    let t1 = traj.durations.t1;
    let wr = params.pad_width * params.peel_energy;
    let mut attached = true;
    let mut out = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let remaining = (params.adhesive_length - (traj.position[i].x - x0)).max(0.0);
        attached = attached && remaining > 0.0 && traj.times[i] <= t1 * (1.0 + 1e-12);
        if attached {
            let theta = peel_angle(traj, i);
            out.push(wr / (1.0 - theta.cos() + params.peel_regularizer) * remaining / params.adhesive_length);
        } else {
            out.push(0.0);
        }
    }
    out
}

/// Touchdown sample index: the first segment-3 sample back within tolerance of the start height.
pub fn touchdown_index(traj: &CompositeTrajectory) -> Result<usize> {
    let z0 = traj.position[0].z;
    (0..traj.len())
        .find(|&i| traj.segment_of[i] == 3 && traj.position[i].z - z0 <= TOUCHDOWN_TOLERANCE)
        .ok_or_else(|| Error::Oracle("trajectory never touches down".into()))
}

/// Noise-free pre-pressure at every sample.
pub fn impact_pressure(traj: &CompositeTrajectory, params: &OracleParams) -> Result<Vec<f64>> {
    let k = touchdown_index(traj)?;
    let tc = traj.times[k];
    let tau = params.impact_duration;
    let peak = params.contact_stiffness * traj.velocity[k].z.abs() * tau + params.baseline;
    Ok(traj
        .times
        .iter()
        .map(|&t| {
            let s = (t - tc) / tau;
            if s.abs() <= 0.5 {
                peak * (PI * s).cos()
            } else {
                0.0
            }
        })
        .collect())
}

/// Evaluates both force channels on the trajectory grid; deterministic for a given seed.
pub fn oracle_forces(traj: &CompositeTrajectory, params: &OracleParams) -> Result<ForceSeries> {
    params.validate()?;
    if traj.len() < 2 {
        return Err(Error::Oracle("trajectory needs at least two samples".into()));
    }
    let mut detachment = peel_force(traj, params);
    let mut pre = impact_pressure(traj, params)?;
    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, params.noise_sigma).map_err(|e| Error::Oracle(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for f in detachment.iter_mut() {
            if *f > 0.0 {
                *f = (*f + normal.sample(&mut rng)).max(0.0);
            }
        }
        for f in pre.iter_mut() {
            *f = (*f + normal.sample(&mut rng)).max(0.0);
        }
    }
    Ok(ForceSeries {
        times: traj.times.clone(),
        detachment_force: detachment,
        pre_pressure: pre,
    })
}
