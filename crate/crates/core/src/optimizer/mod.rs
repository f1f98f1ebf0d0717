//! NSGA-II over a boxed decision space and selection of one front member.

mod front;
mod rhs;
mod trajectory;

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use front::{FrontRow, ParetoFront};
pub use rhs::{rhs_select, RhsConfig};
pub use trajectory::TrajectoryProblem;

use crate::error::{Error, Result};
use crate::geometry::ControlPolygon;

/// Objectives (minimized) and total constraint violation of one decision vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    /// Zero when feasible.
    pub violation: f64,
}

pub trait Problem: Sync {
    fn objective_names(&self) -> Vec<String>;

    fn bounds(&self) -> Vec<(f64, f64)>;

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation>;

    /// Projects a decision vector onto any equality constraints.
    fn repair(&self, _x: &mut [f64]) {}

    /// Initial population; uniform in the box unless overridden.
    fn initial_population(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        let b = self.bounds();
        Ok((0..n)
            .map(|_| {
                let mut x: Vec<f64> = b
                    .iter()
                    .map(|(lo, hi)| if hi > lo { rng.gen_range(*lo..*hi) } else { *lo })
                    .collect();
                self.repair(&mut x);
                x
            })
            .collect())
    }

    fn polygon(&self, _x: &[f64]) -> Option<ControlPolygon> {
        None
    }

    /// Text identifying the problem, hashed into the front's `problem_hash`.
    fn describe(&self) -> String {
        format!("{:?}|{:?}", self.objective_names(), self.bounds())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nsga2Config {
    pub pop_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub eta_c: f64,
    pub eta_m: f64,
    /// Per-variable mutation probability; `None` means one over the number of variables.
    pub mutation_rate: Option<f64>,
    pub seed: u64,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Nsga2Config {
            pop_size: 200,
            generations: 2000,
            crossover_prob: 0.9,
            eta_c: 15.0,
            eta_m: 20.0,
            mutation_rate: None,
            seed: 0,
        }
    }
}

impl Nsga2Config {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 4 || !self.pop_size.is_multiple_of(2) {
            return Err(Error::Validation("population size must be even and at least 4".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) || self.eta_c <= 0.0 || self.eta_m <= 0.0 {
            return Err(Error::Validation("invalid variation operator parameters".into()));
        }
        if let Some(r) = self.mutation_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Validation("mutation rate must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub x: Vec<f64>,
    pub objectives: Vec<f64>,
    pub violation: f64,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn is_feasible(&self) -> bool {
        self.violation <= 0.0
    }
}

/// Per-generation summary of the population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub feasible: usize,
    /// Best value of each objective over feasible individuals.
    pub best: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub front: ParetoFront,
    pub population: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    /// Distinct decision vectors evaluated.
    pub evaluations: usize,
}

/// `a` Pareto-dominates `b` under minimization.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Feasibility first, then lower violation, then Pareto dominance.
pub fn constrained_dominates(a: &Individual, b: &Individual) -> bool {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.violation < b.violation,
        (true, true) => dominates(&a.objectives, &b.objectives),
    }
}

fn sort_by_relation(n: usize, dom: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dom(i, j) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dom(j, i) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Fast non-dominated sort; each front lists indices in increasing order.
pub fn fast_nondominated_sort(f: &[Vec<f64>]) -> Vec<Vec<usize>> {
    sort_by_relation(f.len(), |i, j| dominates(&f[i], &f[j]))
}

/// Crowding distance of each member of one front.
pub fn crowding_distance(front: &[Vec<f64>]) -> Vec<f64> {
    let n = front.len();
    let mut d = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].len();
    for k in 0..m {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| front[a][k].total_cmp(&front[b][k]));
        let lo = front[idx[0]][k];
        let hi = front[idx[n - 1]][k];
        d[idx[0]] = f64::INFINITY;
        d[idx[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if !(range.is_finite() && range > 0.0) {
            continue;
        }
        for w in 1..n - 1 {
            d[idx[w]] += (front[idx[w + 1]][k] - front[idx[w - 1]][k]) / range;
        }
    }
    d
}

/// Ranks a population in place and returns its fronts.
fn rank_population(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let fronts = sort_by_relation(pop.len(), |i, j| constrained_dominates(&pop[i], &pop[j]));
    for (r, front) in fronts.iter().enumerate() {
        let objs: Vec<Vec<f64>> = front.iter().map(|&i| pop[i].objectives.clone()).collect();
        let cd = crowding_distance(&objs);
        for (&i, c) in front.iter().zip(cd) {
            pop[i].rank = r;
            pop[i].crowding = c;
        }
    }
    fronts
}

/// Binary tournament on (violation, rank, crowding); earlier index wins full ties.
fn tournament<'a>(pop: &'a [Individual], rng: &mut ChaCha8Rng) -> &'a Individual {
    let i = rng.gen_range(0..pop.len());
    let j = rng.gen_range(0..pop.len());
    let (a, b) = (&pop[i.min(j)], &pop[i.max(j)]);
    let order = a
        .violation
        .total_cmp(&b.violation)
        .then(a.rank.cmp(&b.rank))
        .then(b.crowding.total_cmp(&a.crowding));
    if order == Ordering::Greater {
        b
    } else {
        a
    }
}

/// Simulated binary crossover with bounds.
fn sbx(p1: &[f64], p2: &[f64], bounds: &[(f64, f64)], eta: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for k in 0..p1.len() {
        let (lo, hi) = bounds[k];
        if rng.gen::<f64>() > 0.5 || (p1[k] - p2[k]).abs() <= 1e-14 || hi <= lo {
            continue;
        }
        let y1 = p1[k].min(p2[k]);
        let y2 = p1[k].max(p2[k]);
        let u: f64 = rng.gen();
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let bq1 = spread(1.0 + 2.0 * (y1 - lo) / (y2 - y1));
        let bq2 = spread(1.0 + 2.0 * (hi - y2) / (y2 - y1));
        let a = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(lo, hi);
        let b = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(lo, hi);
        if rng.gen::<f64>() < 0.5 {
            c1[k] = b;
            c2[k] = a;
        } else {
            c1[k] = a;
            c2[k] = b;
        }
    }
    (c1, c2)
}

/// Bounded polynomial mutation.
fn polynomial_mutation(x: &mut [f64], bounds: &[(f64, f64)], eta: f64, rate: f64, rng: &mut ChaCha8Rng) {
    for k in 0..x.len() {
        let (lo, hi) = bounds[k];
        if rng.gen::<f64>() >= rate || hi <= lo {
            continue;
        }
        let span = hi - lo;
        let y = x[k];
        let d1 = (y - lo) / span;
        let d2 = (hi - y) / span;
        let r: f64 = rng.gen();
        let pow = 1.0 / (eta + 1.0);
        let dq = if r < 0.5 {
            let v = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1).powf(eta + 1.0);
            v.powf(pow) - 1.0
        } else {
            let v = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - v.powf(pow)
        };
        x[k] = (y + dq * span).clamp(lo, hi);
    }
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Evaluates a batch, reusing cached results for decision vectors seen before.
fn evaluate_batch<P: Problem + ?Sized>(
    problem: &P,
    xs: Vec<Vec<f64>>,
    cache: &mut HashMap<Vec<u64>, Evaluation>,
) -> Result<Vec<Individual>> {
    let mut fresh: Vec<Vec<f64>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for x in &xs {
        let k = key(x);
        if !cache.contains_key(&k) && seen.insert(k) {
            fresh.push(x.clone());
        }
    }
    let evals = fresh
        .par_iter()
        .map(|x| problem.evaluate(x))
        .collect::<Result<Vec<_>>>()?;
    for (x, e) in fresh.iter().zip(evals) {
        cache.insert(key(x), e);
    }
    Ok(xs
        .into_iter()
        .map(|x| {
            let e = &cache[&key(&x)];
            Individual {
                objectives: e.objectives.clone(),
                violation: e.violation,
                x,
                rank: 0,
                crowding: 0.0,
            }
        })
        .collect())
}

fn stats(generation: usize, pop: &[Individual], m: usize) -> GenerationStats {
    let mut best = vec![f64::INFINITY; m];
    let mut feasible = 0;
    for ind in pop.iter().filter(|i| i.is_feasible()) {
        feasible += 1;
        for (b, v) in best.iter_mut().zip(&ind.objectives) {
            *b = b.min(*v);
        }
    }
    GenerationStats {
        generation,
        feasible,
        best,
    }
}

/// FNV-1a, used only to fingerprint a problem description.
fn fingerprint(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

const INIT_ATTEMPTS: usize = 10;

/// Runs NSGA-II and returns the feasible first front of the final population.
pub fn nsga2<P: Problem + ?Sized>(problem: &P, cfg: &Nsga2Config) -> Result<RunResult> {
    cfg.validate()?;
    let names = problem.objective_names();
    let m = names.len();
    if m < 2 {
        return Err(Error::Validation("at least two objectives are required".into()));
    }
    let bounds = problem.bounds();
    if let Some((i, _)) = bounds.iter().enumerate().find(|(_, (lo, hi))| !(lo <= hi)) {
        return Err(Error::Infeasible(format!("empty interval for variable {i}")));
    }
    let rate = cfg.mutation_rate.unwrap_or(1.0 / bounds.len() as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cache = HashMap::new();

    let mut pop = Vec::new();
    for _ in 0..INIT_ATTEMPTS {
        let xs = problem.initial_population(cfg.pop_size, &mut rng)?;
        pop = evaluate_batch(problem, xs, &mut cache)?;
        if pop.iter().any(Individual::is_feasible) {
            break;
        }
    }
    if !pop.iter().any(Individual::is_feasible) {
        return Err(Error::Infeasible("no feasible individual in the initial population".into()));
    }
    rank_population(&mut pop);
    let mut history = vec![stats(0, &pop, m)];

    for generation in 1..=cfg.generations {
        let mut children = Vec::with_capacity(cfg.pop_size);
        while children.len() < cfg.pop_size {
            let a = tournament(&pop, &mut rng).x.clone();
            let b = tournament(&pop, &mut rng).x.clone();
            let (mut c1, mut c2) = if rng.gen::<f64>() < cfg.crossover_prob {
                sbx(&a, &b, &bounds, cfg.eta_c, &mut rng)
            } else {
                (a, b)
            };
            polynomial_mutation(&mut c1, &bounds, cfg.eta_m, rate, &mut rng);
            polynomial_mutation(&mut c2, &bounds, cfg.eta_m, rate, &mut rng);
            problem.repair(&mut c1);
            problem.repair(&mut c2);
            children.push(c1);
            children.push(c2);
        }
        let offspring = evaluate_batch(problem, children, &mut cache)?;
        let mut merged = pop;
        merged.extend(offspring);
        let fronts = rank_population(&mut merged);
        let mut next = Vec::with_capacity(cfg.pop_size);
        for front in fronts {
            if next.len() + front.len() <= cfg.pop_size {
                next.extend(front);
            } else {
                let mut rest = front;
                rest.sort_by(|&i, &j| merged[j].crowding.total_cmp(&merged[i].crowding).then(i.cmp(&j)));
                rest.truncate(cfg.pop_size - next.len());
                next.extend(rest);
            }
            if next.len() == cfg.pop_size {
                break;
            }
        }
        next.sort_unstable();
        pop = next.into_iter().map(|i| merged[i].clone()).collect();
        rank_population(&mut pop);
        history.push(stats(generation, &pop, m));
    }

    let mut rows: Vec<FrontRow> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for ind in pop.iter().filter(|i| i.rank == 0 && i.is_feasible()) {
        if seen.insert(key(&ind.x)) {
            rows.push(FrontRow {
                objectives: ind.objectives.clone(),
                decision: ind.x.clone(),
                polygon: problem.polygon(&ind.x),
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::Infeasible("final population has no feasible member".into()));
    }
    Ok(RunResult {
        front: ParetoFront {
            objective_names: names,
            rows,
            problem_hash: fingerprint(&problem.describe()),
            seed: cfg.seed,
        },
        population: pop,
        history,
        evaluations: cache.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Toy;

    impl Problem for Toy {
        fn objective_names(&self) -> Vec<String> {
            vec!["x^2".into(), "(x-2)^2".into()]
        }

        fn bounds(&self) -> Vec<(f64, f64)> {
            vec![(-5.0, 5.0)]
        }

        fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
            Ok(Evaluation {
                objectives: vec![x[0] * x[0], (x[0] - 2.0).powi(2)],
                violation: 0.0,
            })
        }
    }

    #[test]
    fn sort_examples() {
        let f = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 3.0]];
        assert_eq!(fast_nondominated_sort(&f), vec![vec![0, 1], vec![2]]);
        let same = vec![vec![1.0, 1.0]; 4];
        assert_eq!(fast_nondominated_sort(&same), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn crowding_examples() {
        assert_eq!(crowding_distance(&[vec![0.0, 1.0], vec![1.0, 0.0]]), vec![f64::INFINITY; 2]);
        let line: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let d = crowding_distance(&line);
        assert!(d[0].is_infinite() && d[4].is_infinite());
        assert_eq!(d[1], d[2]);
        assert_eq!(d[2], d[3]);
        assert_eq!(d[1], 0.5);
    }

    #[test]
    fn feasible_beats_infeasible() {
        let ind = |v: f64, o: f64| Individual {
            x: vec![],
            objectives: vec![o, o],
            violation: v,
            rank: 0,
            crowding: 0.0,
        };
        assert!(constrained_dominates(&ind(0.0, 100.0), &ind(0.1, 0.0)));
        assert!(constrained_dominates(&ind(0.1, 5.0), &ind(0.2, 0.0)));
        assert!(!constrained_dominates(&ind(0.2, 0.0), &ind(0.1, 5.0)));
    }

    #[test]
    fn toy_front_spans_the_pareto_set() {
        let cfg = Nsga2Config {
            pop_size: 40,
            generations: 60,
            seed: 3,
            ..Nsga2Config::default()
        };
        let run = nsga2(&Toy, &cfg).unwrap();
        for r in &run.front.rows {
            assert!(r.decision[0] >= -1e-3 && r.decision[0] <= 2.0 + 1e-3, "{:?}", r.decision);
        }
        let again = nsga2(&Toy, &cfg).unwrap();
        assert_eq!(run.front, again.front);
    }

    #[test]
    fn operators_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = vec![(0.0, 1.0), (2.0, 2.0), (-1.0, 1.0)];
        for _ in 0..1000 {
            let p1: Vec<f64> = b.iter().map(|(l, h)| if h > l { rng.gen_range(*l..*h) } else { *l }).collect();
            let p2: Vec<f64> = b.iter().map(|(l, h)| if h > l { rng.gen_range(*l..*h) } else { *l }).collect();
            let (mut c1, c2) = sbx(&p1, &p2, &b, 15.0, &mut rng);
            polynomial_mutation(&mut c1, &b, 20.0, 1.0, &mut rng);
            for c in [&c1, &c2] {
                for (v, (l, h)) in c.iter().zip(&b) {
                    assert!(v >= l && v <= h);
                }
            }
        }
    }
}
