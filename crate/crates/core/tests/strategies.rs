use ftfof::constraints::{build_policy, sample_climbable, FootSpec};
use ftfof::geometry::{CompositeTrajectory, Durations, Point};
use ftfof::kinematics::MotionBounds;
use ftfof::strategies::{
    adhesion_path_length, bending, jitter, lift_height, max_detachment, mean_detachment, Strategy, StrategyConfig,
    StrategyContext,
};
use ftfof::surrogate::{ForceChannel, OracleParams, OraclePredictor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

/// Rest until `t2`, then a smoothstep glide along a straight line from `a` to `b`.
fn straight_glide(n: usize, a: Point, b: Point) -> CompositeTrajectory {
    let d = Durations::default();
    let span = d.t3 - d.t2;
    let mut traj = CompositeTrajectory {
        times: Vec::new(),
        position: Vec::new(),
        velocity: Vec::new(),
        acceleration: Vec::new(),
        segment_of: Vec::new(),
        durations: d,
    };
    for k in 0..n {
        let t = d.t3 * k as f64 / (n - 1) as f64;
        let tau = ((t - d.t2) / span).clamp(0.0, 1.0);
        let s = tau * tau * (3.0 - 2.0 * tau);
        let ds = 6.0 * tau * (1.0 - tau) / span;
        let dds = (6.0 - 12.0 * tau) / (span * span);
        traj.times.push(t);
        traj.position.push(a + (b - a) * s);
        traj.velocity.push((b - a) * ds);
        traj.acceleration.push((b - a) * dds);
        traj.segment_of.push(if t <= d.t1 { 1 } else if t <= d.t2 { 2 } else { 3 });
    }
    traj
}

fn ctx(traj: &CompositeTrajectory, det: Vec<f64>) -> StrategyContext<'_> {
    StrategyContext::from_series(traj, det, vec![1.0], StrategyConfig::default())
}

#[test]
fn detachment_statistics_match_summation() {
    let traj = straight_glide(10, Point::zeros(), Point::new(0.1, 0.0, 0.0));
    assert_eq!(max_detachment(&ctx(&traj, vec![1.0, 5.0, 3.0])).unwrap(), 5.0);
    assert_eq!(mean_detachment(&ctx(&traj, vec![1.0, 5.0, 3.0])).unwrap(), 3.0);
    assert!(max_detachment(&ctx(&traj, vec![])).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let s: Vec<f64> = (0..rng.gen_range(1..300)).map(|_| rng.gen_range(0.0..10.0)).collect();
        let mut acc = 0.0;
        for v in &s {
            acc += v;
        }
        let got = mean_detachment(&ctx(&traj, s.clone())).unwrap();
        assert!((got - acc / s.len() as f64).abs() < 1e-12);
    }
}

#[test]
fn adhesion_performance_is_symmetric_about_target() {
    let traj = straight_glide(10, Point::zeros(), Point::new(0.1, 0.0, 0.0));
    let cfg = StrategyConfig::default();
    assert_eq!(cfg.optimal_prepressure, 5.85);
    let at = |peak: f64| {
        let c = StrategyContext::from_series(&traj, vec![0.0], vec![0.5, peak, 1.0], cfg);
        Strategy::AdhesionPerformance.evaluate(&c).unwrap()
    };
    assert_eq!(at(5.85), 0.0);
    assert!((at(6.85) - 1.0).abs() < 1e-12);
    assert!((at(4.85) - 1.0).abs() < 1e-12);
}

#[test]
fn lift_height_means() {
    let flat = straight_glide(50, Point::zeros(), Point::new(0.1, 0.0, 0.0));
    assert_eq!(lift_height(&ctx(&flat, vec![0.0])).unwrap(), 0.0);
    let n = 101;
    let h = 0.04;
    let mut ramp = flat.clone();
    ramp.position = (0..n).map(|k| Point::new(0.0, 0.0, h * k as f64 / n as f64)).collect();
    let got = lift_height(&ctx(&ramp, vec![0.0])).unwrap();
    assert!((got - h / 2.0).abs() <= h / n as f64);
}

#[test]
fn path_length_of_straight_glide() {
    let a = Point::new(0.01, 0.0, 0.02);
    let b = Point::new(0.13, 0.0, -0.01);
    let traj = straight_glide(200, a, b);
    let got = adhesion_path_length(&ctx(&traj, vec![0.0])).unwrap();
    assert!((got - (b - a).norm()).abs() < 1e-3);
    let still = straight_glide(200, a, a);
    assert_eq!(adhesion_path_length(&ctx(&still, vec![0.0])).unwrap(), 0.0);
}

#[test]
fn path_length_converges_under_refinement() {
    let policy = build_policy(&FootSpec::default(), &MotionBounds::default(), Durations::default()).unwrap();
    for poly in sample_climbable(&policy, 10, 4).unwrap() {
        let coarse = poly.sample(200).unwrap();
        let fine = poly.sample(2000).unwrap();
        let lc = adhesion_path_length(&ctx(&coarse, vec![0.0])).unwrap();
        let lf = adhesion_path_length(&ctx(&fine, vec![0.0])).unwrap();
        assert!((lc - lf).abs() <= 0.005 * lf, "{lc} vs {lf}");
    }
}

#[test]
fn bending_examples() {
    let line: Vec<Point> = (0..20).map(|k| Point::new(k as f64, 0.0, 0.5 * k as f64)).collect();
    assert_eq!(bending(&line, FRAC_PI_2), 0.0);
    let reversal = [Point::zeros(), Point::new(1.0, 0.0, 0.0), Point::zeros()];
    assert!((bending(&reversal, FRAC_PI_2) - FRAC_PI_2).abs() < 1e-12);
    let arc: Vec<Point> = (0..100)
        .map(|k| {
            let th = FRAC_PI_2 * k as f64 / 99.0;
            Point::new(th.cos(), 0.0, th.sin())
        })
        .collect();
    assert_eq!(bending(&arc, FRAC_PI_2), 0.0);
    let stutter = [Point::zeros(), Point::zeros(), Point::new(1.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(2.0, 0.0, 0.0)];
    assert_eq!(bending(&stutter, FRAC_PI_2), 0.0);
    let hairpin = [Point::zeros(), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0)];
    assert!((bending(&hairpin, FRAC_PI_2) - PI).abs() < 1e-12);
}

/// z-score excess computed with population statistics, written out longhand.
fn jitter_by_hand(series: &[f64], m: f64) -> f64 {
    let mut d2 = Vec::new();
    for i in 1..series.len() - 1 {
        d2.push(series[i + 1] - 2.0 * series[i] + series[i - 1]);
    }
    let mean = d2.iter().sum::<f64>() / d2.len() as f64;
    let var = d2.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / d2.len() as f64;
    let sd = var.sqrt();
    let mut total = 0.0;
    for d in &d2 {
        let z = ((d - mean) / sd).abs();
        if z > m {
            total += z - m;
        }
    }
    total
}

#[test]
fn jitter_flags_an_isolated_spike() {
    let ramp: Vec<f64> = (0..100).map(|k| 0.3 * k as f64 + 1.0).collect();
    assert_eq!(jitter(&ramp, 3.0).unwrap(), 0.0);
    let mut spiky = vec![2.0; 100];
    assert_eq!(jitter(&spiky, 3.0).unwrap(), 0.0);
    spiky[50] = 7.0;
    let got = jitter(&spiky, 3.0).unwrap();
    assert!(got > 0.0);
    assert!((got - jitter_by_hand(&spiky, 3.0)).abs() < 1e-9);
    assert!(jitter(&[1.0, 2.0, 3.0, 4.0], 3.0).is_err());
}

#[test]
fn all_strategies_finite_and_deterministic_on_climbable_samples() {
    let policy = build_policy(&FootSpec::default(), &MotionBounds::default(), Durations::default()).unwrap();
    let det = OraclePredictor { params: OracleParams::default(), channel: ForceChannel::Detachment };
    let pre = OraclePredictor { params: OracleParams::default(), channel: ForceChannel::PrePressure };
    for poly in sample_climbable(&policy, 40, 6).unwrap() {
        let traj = poly.sample(policy.grid).unwrap();
        let a = StrategyContext::new(&traj, &det, &pre, StrategyConfig::default()).unwrap();
        let b = StrategyContext::new(&traj, &det, &pre, StrategyConfig::default()).unwrap();
        for s in Strategy::ALL {
            let va = s.evaluate(&a).unwrap();
            assert!(va.is_finite(), "{s} not finite");
            assert_eq!(va.to_bits(), s.evaluate(&b).unwrap().to_bits());
        }
        assert_eq!(Strategy::Bending.evaluate(&a).unwrap(), 0.0);
        assert!(max_detachment(&a).unwrap() >= mean_detachment(&a).unwrap());
    }
}

proptest! {
    #[test]
    fn max_is_at_least_mean(s in prop::collection::vec(-50.0f64..50.0, 1..200)) {
        let traj = straight_glide(5, Point::zeros(), Point::new(0.1, 0.0, 0.0));
        let c = ctx(&traj, s);
        prop_assert!(max_detachment(&c).unwrap() >= mean_detachment(&c).unwrap() - 1e-12);
    }

    #[test]
    fn jitter_is_affine_invariant(
        s in prop::collection::vec(-10.0f64..10.0, 5..120),
        k in 0.01f64..100.0,
        c in -100.0f64..100.0,
    ) {
        let base = jitter(&s, 3.0).unwrap();
        let moved: Vec<f64> = s.iter().map(|v| k * v + c).collect();
        let got = jitter(&moved, 3.0).unwrap();
        prop_assert!((got - base).abs() <= 1e-6 * base.max(1.0), "{} vs {}", got, base);
    }
}
