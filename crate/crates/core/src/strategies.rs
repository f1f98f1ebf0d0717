//! The seven strategy functionals scored on a trajectory and its predicted forces.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CompositeTrajectory, Point};
use crate::surrogate::ForcePredictor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    /// Target peak pre-pressure `a` in newtons.
    pub optimal_prepressure: f64,
    /// Jitter threshold `m` in standard deviations.
    pub jitter_threshold: f64,
    /// Turn angle above which bending is penalised, in radians.
    pub bend_threshold: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            optimal_prepressure: 5.85,
            jitter_threshold: 3.0,
            bend_threshold: FRAC_PI_2,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.optimal_prepressure > 0.0 && self.optimal_prepressure.is_finite()) {
            return Err(Error::Validation("optimal pre-pressure must be positive".into()));
        }
        if !(self.jitter_threshold > 0.0 && self.jitter_threshold.is_finite()) {
            return Err(Error::Validation("jitter threshold must be positive".into()));
        }
        if !(self.bend_threshold >= 0.0 && self.bend_threshold.is_finite()) {
            return Err(Error::Validation("bend threshold must be non-negative".into()));
        }
        Ok(())
    }
}

/// A trajectory with its predicted detachment-force and pre-pressure series.
#[derive(Clone, Debug)]
pub struct StrategyContext<'a> {
    pub trajectory: &'a CompositeTrajectory,
    pub detachment: Vec<f64>,
    pub prepressure: Vec<f64>,
    pub config: StrategyConfig,
}

impl<'a> StrategyContext<'a> {
    pub fn new(
        trajectory: &'a CompositeTrajectory,
        detachment_model: &dyn ForcePredictor,
        prepressure_model: &dyn ForcePredictor,
        config: StrategyConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(StrategyContext {
            trajectory,
            detachment: detachment_model.predict_series(trajectory)?,
            prepressure: prepressure_model.predict_series(trajectory)?,
            config,
        })
    }

    pub fn from_series(
        trajectory: &'a CompositeTrajectory,
        detachment: Vec<f64>,
        prepressure: Vec<f64>,
        config: StrategyConfig,
    ) -> Self {
        StrategyContext {
            trajectory,
            detachment,
            prepressure,
            config,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "f_s1")]
    MaxDetachment,
    #[serde(rename = "f_s2")]
    MeanDetachment,
    #[serde(rename = "f_s3")]
    AdhesionPerformance,
    #[serde(rename = "f_s4")]
    LiftHeight,
    #[serde(rename = "f_s5")]
    AdhesionPathLength,
    #[serde(rename = "f_s6")]
    Bending,
    #[serde(rename = "f_s7")]
    Jitter,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::MaxDetachment,
        Strategy::MeanDetachment,
        Strategy::AdhesionPerformance,
        Strategy::LiftHeight,
        Strategy::AdhesionPathLength,
        Strategy::Bending,
        Strategy::Jitter,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Strategy::MaxDetachment => "f_s1",
            Strategy::MeanDetachment => "f_s2",
            Strategy::AdhesionPerformance => "f_s3",
            Strategy::LiftHeight => "f_s4",
            Strategy::AdhesionPathLength => "f_s5",
            Strategy::Bending => "f_s6",
            Strategy::Jitter => "f_s7",
        }
    }

    /// Whether the functional reads the predicted forces.
    pub fn needs_forces(&self) -> bool {
        matches!(
            self,
            Strategy::MaxDetachment | Strategy::MeanDetachment | Strategy::AdhesionPerformance | Strategy::Jitter
        )
    }

    pub fn evaluate(&self, ctx: &StrategyContext<'_>) -> Result<f64> {
        match self {
            Strategy::MaxDetachment => max_detachment(ctx),
            Strategy::MeanDetachment => mean_detachment(ctx),
            Strategy::AdhesionPerformance => adhesion_performance(ctx),
            Strategy::LiftHeight => lift_height(ctx),
            Strategy::AdhesionPathLength => adhesion_path_length(ctx),
            Strategy::Bending => Ok(bending(&ctx.trajectory.position, ctx.config.bend_threshold)),
            Strategy::Jitter => jitter(&ctx.detachment, ctx.config.jitter_threshold),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.id() == s)
            .ok_or_else(|| Error::Validation(format!("unknown strategy {s}")))
    }
}

fn nonempty<'s>(series: &'s [f64], what: &str) -> Result<&'s [f64]> {
    if series.is_empty() {
        Err(Error::Domain(format!("empty {what} series")))
    } else {
        Ok(series)
    }
}

/// f_s1: peak predicted detachment force.
pub fn max_detachment(ctx: &StrategyContext<'_>) -> Result<f64> {
    Ok(nonempty(&ctx.detachment, "detachment force")?
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// f_s2: mean predicted detachment force.
pub fn mean_detachment(ctx: &StrategyContext<'_>) -> Result<f64> {
    let s = nonempty(&ctx.detachment, "detachment force")?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// f_s3: distance of the peak predicted pre-pressure from the target `a`.
pub fn adhesion_performance(ctx: &StrategyContext<'_>) -> Result<f64> {
    let peak = nonempty(&ctx.prepressure, "pre-pressure")?
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((peak - ctx.config.optimal_prepressure).abs())
}

/// f_s4: mean height over the trajectory samples.
pub fn lift_height(ctx: &StrategyContext<'_>) -> Result<f64> {
    let p = &ctx.trajectory.position;
    if p.is_empty() {
        return Err(Error::Domain("empty trajectory".into()));
    }
    Ok(p.iter().map(|q| q.z).sum::<f64>() / p.len() as f64)
}

/// f_s5: trapezoidal integral of speed over the adhesion segment `[T2, T3]`.
///
/// An interval straddling `T2` is clipped there, with the speed interpolated linearly.
pub fn adhesion_path_length(ctx: &StrategyContext<'_>) -> Result<f64> {
    let traj = ctx.trajectory;
    let t2 = traj.durations.t2;
    let speed: Vec<f64> = traj.velocity.iter().map(|v| v.norm()).collect();
    let mut total = 0.0;
    let mut covered = false;
    for i in 1..traj.len() {
        let (ta, tb) = (traj.times[i - 1], traj.times[i]);
        if tb <= t2 || tb <= ta {
            continue;
        }
        covered = true;
        let (lo, s_lo) = if ta < t2 {
            (t2, speed[i - 1] + (speed[i] - speed[i - 1]) * (t2 - ta) / (tb - ta))
        } else {
            (ta, speed[i - 1])
        };
        total += 0.5 * (tb - lo) * (s_lo + speed[i]);
    }
    if !covered {
        return Err(Error::Domain("no adhesion-segment samples".into()));
    }
    Ok(total)
}

/// f_s6: summed excess of turn angles between consecutive displacement vectors over `threshold`.
pub fn bending(positions: &[Point], threshold: f64) -> f64 {
    let steps: Vec<Point> = positions
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.norm() > 0.0)
        .collect();
    steps
        .windows(2)
        .map(|w| {
            let c = (w[0].dot(&w[1]) / (w[0].norm() * w[1].norm())).clamp(-1.0, 1.0);
            (c.acos() - threshold).max(0.0)
        })
        .sum()
}

/// f_s7: summed z-score excess of the series' second differences over `m`.
pub fn jitter(series: &[f64], m: f64) -> Result<f64> {
    if series.len() < 5 {
        return Err(Error::Domain(format!("jitter needs at least 5 samples, got {}", series.len())));
    }
    let d2: Vec<f64> = series.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
    let n = d2.len() as f64;
    let mu = d2.iter().sum::<f64>() / n;
    let sigma = (d2.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    let scale = series.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // Rounding residue of an exactly linear series is not jitter.
    if sigma <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Ok(0.0);
    }
    Ok(d2.iter().map(|d| ((d - mu).abs() / sigma - m).max(0.0)).sum())
}
