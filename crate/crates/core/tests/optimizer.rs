use ftfof::optimizer::{
    constrained_dominates, crowding_distance, dominates, fast_nondominated_sort, nsga2, rhs_select, Evaluation,
    Individual, Nsga2Config, ParetoFront, Problem, RhsConfig,
};
use ftfof::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(rng: &mut ChaCha8Rng, n: usize, m: usize, levels: u32) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..m).map(|_| rng.gen_range(0..levels) as f64).collect()).collect()
}

/// Peels fronts by repeatedly taking every point no remaining point dominates.
fn brute_force_fronts(f: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let beats = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y);
    let mut left: Vec<usize> = (0..f.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| beats(&f[j], &f[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

#[test]
fn nondominated_sort_matches_brute_force() {
    assert_eq!(
        fast_nondominated_sort(&[vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 3.0]]),
        vec![vec![0, 1], vec![2]]
    );
    assert_eq!(fast_nondominated_sort(&vec![vec![1.0, 1.0]; 4]), vec![vec![0, 1, 2, 3]]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..50 {
        let levels = if trial % 2 == 0 { 5 } else { 1000 };
        let f = random_points(&mut rng, 50, 3, levels);
        let mut got = fast_nondominated_sort(&f);
        for front in &mut got {
            front.sort_unstable();
        }
        assert_eq!(got, brute_force_fronts(&f));
    }
}

/// Per objective: sort, mark ends infinite, add normalized neighbor gaps to interior points.
fn crowding_oracle(front: &[Vec<f64>]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut out = vec![0.0f64; n];
    for k in 0..front[0].len() {
        let mut order: Vec<(f64, usize)> = front.iter().enumerate().map(|(i, p)| (p[k], i)).collect();
        order.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let span = order[n - 1].0 - order[0].0;
        out[order[0].1] = f64::INFINITY;
        out[order[n - 1].1] = f64::INFINITY;
        if span == 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = (order[w + 1].0 - order[w - 1].0) / span;
            out[order[w].1] += gap;
        }
    }
    out
}

#[test]
fn crowding_matches_oracle() {
    assert!(crowding_distance(&[vec![0.0, 1.0], vec![1.0, 0.0]]).iter().all(|d| d.is_infinite()));
    let line: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
    let d = crowding_distance(&line);
    assert!(d[0].is_infinite() && d[5].is_infinite());
    for w in d[1..5].windows(2) {
        assert_eq!(w[0], w[1]);
    }
    assert!((d[1] - 0.4).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let n = rng.gen_range(1..30);
        let f: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        for (a, b) in crowding_distance(&f).iter().zip(crowding_oracle(&f)) {
            assert!(a == &b || (a - b).abs() < 1e-12);
        }
    }
}

/// min (x², (x−2)²) on x ∈ [−2, 4]; optional violation when x > cap.
struct Schaffer {
    cap: Option<f64>,
}

impl Problem for Schaffer {
    fn objective_names(&self) -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-2.0, 4.0)]
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let v = x[0];
        Ok(Evaluation {
            objectives: vec![v * v, (v - 2.0) * (v - 2.0)],
            violation: self.cap.map_or(0.0, |c| (v - c).max(0.0)),
        })
    }
}

/// Dominated area against the reference point `r`.
fn hypervolume_2d(points: &[Vec<f64>], r: [f64; 2]) -> f64 {
    let mut p: Vec<(f64, f64)> = points
        .iter()
        .filter(|q| q[0] < r[0] && q[1] < r[1])
        .map(|q| (q[0], q[1]))
        .collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut area = 0.0;
    let mut ceiling = r[1];
    for (x, y) in p {
        if y < ceiling {
            area += (r[0] - x) * (ceiling - y);
            ceiling = y;
        }
    }
    area
}

#[test]
fn toy_front_matches_analytic_hypervolume() {
    let cfg = Nsga2Config {
        pop_size: 200,
        generations: 150,
        seed: 3,
        ..Nsga2Config::default()
    };
    let run = nsga2(&Schaffer { cap: None }, &cfg).unwrap();
    for row in &run.front.rows {
        assert!((-1e-3..=2.0 + 1e-3).contains(&row.decision[0]), "x = {}", row.decision[0]);
    }
    // Area under (√u − 2)² for u in [0, 4], subtracted from the 4×4 box.
    let analytic = 40.0 / 3.0;
    let hv = hypervolume_2d(&run.front.objective_matrix(), [4.0, 4.0]);
    assert!((hv - analytic).abs() <= 0.05, "hypervolume {hv} vs {analytic}");
}

#[test]
fn fronts_are_mutually_nondominated_and_deterministic() {
    let cfg = Nsga2Config {
        pop_size: 40,
        generations: 30,
        seed: 11,
        ..Nsga2Config::default()
    };
    let a = nsga2(&Schaffer { cap: Some(1.0) }, &cfg).unwrap();
    let b = nsga2(&Schaffer { cap: Some(1.0) }, &cfg).unwrap();
    let f = a.front.objective_matrix();
    for (i, p) in f.iter().enumerate() {
        for (j, q) in f.iter().enumerate() {
            assert!(i == j || !dominates(p, q));
        }
    }
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    a.front.write_csv(&mut ca, &["x"]).unwrap();
    b.front.write_csv(&mut cb, &["x"]).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(a.front, b.front);
}

#[test]
fn best_objectives_never_regress() {
    let cfg = Nsga2Config {
        pop_size: 30,
        generations: 60,
        seed: 5,
        ..Nsga2Config::default()
    };
    let run = nsga2(&Schaffer { cap: Some(1.5) }, &cfg).unwrap();
    assert_eq!(run.history.len(), 61);
    for w in run.history.windows(2) {
        for k in 0..2 {
            assert!(w[1].best[k] <= w[0].best[k], "generation {}: objective {k} regressed", w[1].generation);
        }
    }
}

#[test]
fn one_generation_keeps_the_initial_elite() {
    let base = Nsga2Config {
        pop_size: 20,
        generations: 0,
        seed: 21,
        ..Nsga2Config::default()
    };
    let zero = nsga2(&Schaffer { cap: None }, &base).unwrap();
    let initial = zero.population.iter().map(|i| i.objectives.clone()).collect::<Vec<_>>();
    let initial_front: Vec<Vec<f64>> = brute_force_fronts(&initial)[0].iter().map(|&i| initial[i].clone()).collect();
    for row in &zero.front.rows {
        assert!(initial_front.contains(&row.objectives));
    }
    let one = nsga2(&Schaffer { cap: None }, &Nsga2Config { generations: 1, ..base }).unwrap();
    for row in &one.front.rows {
        assert!(initial.iter().all(|p| !dominates(p, &row.objectives)));
    }
}

#[test]
fn feasible_individuals_outrank_infeasible_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let pop: Vec<Individual> = (0..40)
        .map(|i| Individual {
            x: vec![i as f64],
            objectives: vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
            violation: if i % 3 == 0 { rng.gen_range(0.01..2.0) } else { 0.0 },
            rank: 0,
            crowding: 0.0,
        })
        .collect();
    for a in &pop {
        for b in &pop {
            if a.is_feasible() && !b.is_feasible() {
                assert!(constrained_dominates(a, b));
                assert!(!constrained_dominates(b, a));
            }
            if !a.is_feasible() && !b.is_feasible() {
                assert_eq!(constrained_dominates(a, b), a.violation < b.violation);
            }
        }
    }
    let run = nsga2(
        &Schaffer { cap: Some(-1.0) },
        &Nsga2Config {
            pop_size: 40,
            generations: 3,
            seed: 2,
            ..Nsga2Config::default()
        },
    )
    .unwrap();
    let worst_feasible = run.population.iter().filter(|i| i.is_feasible()).map(|i| i.rank).max();
    let best_infeasible = run.population.iter().filter(|i| !i.is_feasible()).map(|i| i.rank).min();
    if let (Some(f), Some(i)) = (worst_feasible, best_infeasible) {
        assert!(f < i);
    }
    assert!(run.front.rows.iter().all(|r| r.decision[0] <= -1.0));
}

#[test]
fn no_feasible_start_is_an_error() {
    let r = nsga2(
        &Schaffer { cap: Some(-5.0) },
        &Nsga2Config {
            pop_size: 8,
            generations: 1,
            ..Nsga2Config::default()
        },
    );
    assert!(matches!(r, Err(ftfof::Error::Infeasible(_))));
}

#[test]
fn front_csv_round_trip() {
    let run = nsga2(
        &Schaffer { cap: None },
        &Nsga2Config {
            pop_size: 12,
            generations: 5,
            seed: 1,
            ..Nsga2Config::default()
        },
    )
    .unwrap();
    let mut buf = Vec::new();
    run.front.write_csv(&mut buf, &["x"]).unwrap();
    let lines = buf.iter().filter(|b| **b == b'\n').count();
    assert_eq!(lines, run.front.len() + 1);
    let back = ParetoFront::read_csv(&buf[..], 2).unwrap();
    assert_eq!(back.objective_names, run.front.objective_names);
    for (a, b) in back.rows.iter().zip(&run.front.rows) {
        assert_eq!(a.objectives, b.objectives);
        assert_eq!(a.decision, b.decision);
    }
}

/// Filters columns in priority order with α shrinking by β^i after each pass.
fn rhs_oracle(rows: &[Vec<f64>], priority: &[usize], alpha: f64, beta: f64) -> usize {
    let mut alive: Vec<usize> = (0..rows.len()).collect();
    let mut a = alpha;
    let mut i = 0;
    loop {
        if alive.len() == 1 {
            return alive[0];
        }
        let distinct = alive.iter().any(|&r| priority.iter().any(|&c| rows[r][c] != rows[alive[0]][c]));
        if !distinct {
            return alive[0];
        }
        let c = priority[i % priority.len()];
        let lo = alive.iter().map(|&r| rows[r][c]).fold(f64::INFINITY, f64::min);
        let hi = alive.iter().map(|&r| rows[r][c]).fold(f64::NEG_INFINITY, f64::max);
        let vr = lo + (hi - lo) * a;
        alive.retain(|&r| rows[r][c] <= vr);
        a *= beta.powi(i as i32);
        i += 1;
    }
}

#[test]
fn rhs_hand_trace_and_properties() {
    let rows = vec![vec![1.0, 9.0], vec![5.0, 5.0], vec![9.0, 1.0]];
    let cfg = RhsConfig {
        priority: vec![0, 1],
        alpha: 0.9,
        beta: 0.9,
    };
    assert_eq!(rhs_select(&rows, &cfg).unwrap(), 1);
    assert_eq!(rhs_select(&[vec![4.0, 2.0]], &cfg).unwrap(), 0);

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let m = rng.gen_range(2..5);
        let n = rng.gen_range(1..40);
        let mut front = random_points(&mut rng, n, m, 20);
        let mut priority: Vec<usize> = (0..m).collect();
        for k in (1..m).rev() {
            priority.swap(k, rng.gen_range(0..=k));
        }
        let cfg = RhsConfig {
            priority: priority.clone(),
            alpha: rng.gen_range(0.05..0.95),
            beta: rng.gen_range(0.05..0.95),
        };
        let pick = rhs_select(&front, &cfg).unwrap();
        assert!(pick < n);
        assert_eq!(pick, rhs_oracle(&front, &priority, cfg.alpha, cfg.beta));
        assert_eq!(pick, rhs_select(&front, &cfg).unwrap());

        // A row at or below every column's minimum can never be filtered out.
        let floor: Vec<f64> = (0..m)
            .map(|c| front.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min) - 1.0)
            .collect();
        let slot = rng.gen_range(0..=n);
        front.insert(slot, floor.clone());
        assert_eq!(front[rhs_select(&front, &cfg).unwrap()], floor);
    }
}
