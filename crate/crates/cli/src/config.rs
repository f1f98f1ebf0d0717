use std::collections::BTreeMap;
use std::path::Path;

use ftfof::constraints::{build_policy, ConstraintPolicy, FootSpec, DEFAULT_GRID};
use ftfof::geometry::Durations;
use ftfof::kinematics::{BoundSolverConfig, LegModel, MotionBounds};
use ftfof::optimizer::{Nsga2Config, RhsConfig};
use ftfof::strategies::{Strategy, StrategyConfig};
use ftfof::surrogate::{OracleParams, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Pipeline configuration; every section falls back to the reference setup when absent.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub leg: LegModel,
    pub bound_solver: BoundSolverConfig,
    /// Motion bounds used by the constraint policy when no bounds file is given.
    pub bounds: MotionBounds,
    pub foot: FootSpec,
    pub durations: Durations,
    /// Replacement intervals for named free coordinates, e.g. `"P5x": [0.01, 0.1]`.
    pub box_overrides: BTreeMap<String, [f64; 2]>,
    pub sample_count: usize,
    pub grid: usize,
    pub oracle: OracleParams,
    pub train: TrainConfig,
    pub optimize: OptimizeConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub objectives: Vec<Strategy>,
    /// Selection priority; must list every objective once.
    pub priority: Vec<Strategy>,
    pub alpha: f64,
    pub beta: f64,
    pub nsga2: Nsga2Config,
    pub strategy: StrategyConfig,
    /// Objectives on the axes of the front plot.
    pub plot_axes: [Strategy; 2],
    /// Score candidates with the oracle itself instead of trained models.
    pub use_oracle: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            leg: LegModel::default(),
            bound_solver: BoundSolverConfig::default(),
            bounds: MotionBounds::default(),
            foot: FootSpec::default(),
            durations: Durations::default(),
            box_overrides: BTreeMap::new(),
            sample_count: 1000,
            grid: DEFAULT_GRID,
            oracle: OracleParams::default(),
            train: TrainConfig::default(),
            optimize: OptimizeConfig::default(),
        }
    }
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let order = vec![
            Strategy::MaxDetachment,
            Strategy::AdhesionPerformance,
            Strategy::Jitter,
            Strategy::MeanDetachment,
            Strategy::AdhesionPathLength,
        ];
        OptimizeConfig {
            objectives: order.clone(),
            priority: order,
            alpha: 0.9,
            beta: 0.9,
            nsga2: Nsga2Config::default(),
            strategy: StrategyConfig::default(),
            plot_axes: [Strategy::MaxDetachment, Strategy::AdhesionPerformance],
            use_oracle: false,
        }
    }
}

impl OptimizeConfig {
    pub fn rhs(&self) -> Result<RhsConfig, CliError> {
        let priority = self
            .priority
            .iter()
            .map(|s| {
                self.objectives
                    .iter()
                    .position(|o| o == s)
                    .ok_or_else(|| CliError::usage(format!("priority entry {s} is not an objective")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = RhsConfig {
            priority,
            alpha: self.alpha,
            beta: self.beta,
        };
        cfg.validate(self.objectives.len()).map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let cfg: Config = match path {
            None => Config::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("invalid config {}: {e}", p.display())))?
            }
        };
        if cfg.grid < 5 {
            return Err(CliError::usage("grid must have at least 5 samples"));
        }
        Ok(cfg)
    }

    pub fn policy(&self, bounds: &MotionBounds) -> Result<ConstraintPolicy, CliError> {
        let mut policy = build_policy(&self.foot, bounds, self.durations)?;
        for (name, [lo, hi]) in &self.box_overrides {
            policy = policy
                .with_box_override(name, *lo, *hi)
                .map_err(|e| CliError::usage(e.to_string()))?;
        }
        ftfof::constraints::variable_box(&policy)?;
        Ok(policy)
    }
}
