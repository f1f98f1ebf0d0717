use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Evaluation, Problem};
use crate::constraints::{sample_climbable, validate, ConstraintPolicy, BENDING_TOLERANCE};
use crate::error::{Error, Result};
use crate::geometry::{ControlPolygon, N_FREE};
use crate::strategies::{bending, Strategy, StrategyConfig, StrategyContext};
use crate::surrogate::ForcePredictor;

/// Foot-trajectory search over the twelve free control-point coordinates.
///
/// Infeasible candidates are scored only by their constraint violation; the force models run
/// for feasible ones.
pub struct TrajectoryProblem<'a> {
    pub policy: &'a ConstraintPolicy,
    pub objectives: Vec<Strategy>,
    pub detachment: &'a dyn ForcePredictor,
    pub prepressure: &'a dyn ForcePredictor,
    pub strategy: StrategyConfig,
    pub grid: usize,
}

impl<'a> TrajectoryProblem<'a> {
    pub fn new(
        policy: &'a ConstraintPolicy,
        objectives: Vec<Strategy>,
        detachment: &'a dyn ForcePredictor,
        prepressure: &'a dyn ForcePredictor,
        strategy: StrategyConfig,
        grid: usize,
    ) -> Result<Self> {
        strategy.validate()?;
        if objectives.len() < 2 {
            return Err(Error::Validation("at least two objectives are required".into()));
        }
        if grid < 5 {
            return Err(Error::Validation("trajectory grid needs at least 5 samples".into()));
        }
        Ok(TrajectoryProblem {
            policy,
            objectives,
            detachment,
            prepressure,
            strategy,
            grid,
        })
    }

    fn free(x: &[f64]) -> [f64; N_FREE] {
        let mut f = [0.0; N_FREE];
        f.copy_from_slice(x);
        f
    }

    /// Scores a polygon with every configured objective.
    pub fn score(&self, poly: &ControlPolygon) -> Result<Vec<f64>> {
        let traj = poly.sample(self.grid)?;
        let ctx = StrategyContext::new(&traj, self.detachment, self.prepressure, self.strategy)?;
        self.objectives.iter().map(|s| s.evaluate(&ctx)).collect()
    }
}

impl Problem for TrajectoryProblem<'_> {
    fn objective_names(&self) -> Vec<String> {
        self.objectives.iter().map(|s| s.id().to_string()).collect()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.policy.var_box.to_vec()
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let poly = self.policy.polygon(&Self::free(x))?;
        let traj = poly.sample(self.grid)?;
        let report = validate(&poly, &traj, self.policy);
        let bend = bending(&traj.position, self.strategy.bend_threshold);
        let violation = report.total() + if bend > BENDING_TOLERANCE { bend } else { 0.0 };
        if violation > 0.0 {
            return Ok(Evaluation {
                objectives: vec![f64::INFINITY; self.objectives.len()],
                violation,
            });
        }
        let ctx = StrategyContext::new(&traj, self.detachment, self.prepressure, self.strategy)?;
        let objectives = self.objectives.iter().map(|s| s.evaluate(&ctx)).collect::<Result<Vec<_>>>()?;
        Ok(Evaluation { objectives, violation })
    }

    fn repair(&self, x: &mut [f64]) {
        let mut f = Self::free(x);
        self.policy.apply_equalities(&mut f);
        x.copy_from_slice(&f);
    }

    fn initial_population(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        let polys = sample_climbable(self.policy, n, rng.gen())?;
        Ok(polys.iter().map(|p| p.free_coords().to_vec()).collect())
    }

    fn polygon(&self, x: &[f64]) -> Option<ControlPolygon> {
        self.policy.polygon(&Self::free(x)).ok()
    }

    fn describe(&self) -> String {
        format!(
            "{:?}|{:?}|{:?}|{:?}|{}|{:?}",
            self.objective_names(),
            self.policy.var_box,
            self.policy.foot,
            self.policy.bounds,
            self.grid,
            self.strategy
        )
    }
}

