use ftfof::geometry::{bernstein, ControlPolygon, Durations, Point, N_FREE};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_free(rng: &mut impl Rng) -> [f64; N_FREE] {
    let mut f = [0.0; N_FREE];
    for v in f.iter_mut() {
        *v = rng.gen_range(-0.2..0.2);
    }
    f
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; counter-clockwise hull without collinear points.
fn hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Signed distance outside a counter-clockwise hull (non-positive when inside).
fn outside_distance(h: &[(f64, f64)], p: (f64, f64)) -> f64 {
    if h.len() < 3 {
        let (a, b) = (h[0], *h.last().unwrap());
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
        return ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt();
    }
    (0..h.len())
        .map(|i| {
            let (a, b) = (h[i], h[(i + 1) % h.len()]);
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            -cross(a, b, p) / len
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn segments_lie_in_their_convex_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let poly = ControlPolygon::complete(
            &random_free(&mut rng),
            Point::zeros(),
            Point::new(0.12, 0.0, 0.0),
            Durations::default(),
        )
        .unwrap();
        for seg in 1..=3 {
            let h = hull(poly.segment_points(seg).iter().map(|p| (p.x, p.z)).collect());
            for k in 0..=100 {
                let s = poly.evaluate_segment(seg, k as f64 / 100.0);
                assert!(outside_distance(&h, (s.position.x, s.position.z)) <= 1e-9);
            }
        }
    }
}

#[test]
fn direct_bernstein_sum_matches_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let poly = ControlPolygon::complete(
        &random_free(&mut rng),
        Point::new(0.01, 0.0, 0.0),
        Point::new(0.12, 0.0, 0.0),
        Durations::new(0.2, 0.65, 1.1).unwrap(),
    )
    .unwrap();
    for seg in 1..=3 {
        let cp = poly.segment_points(seg);
        for k in 0..=20 {
            let u = k as f64 / 20.0;
            let direct = (0..6).fold(Point::zeros(), |acc, i| acc + cp[i] * bernstein(i, 5, u).unwrap());
            assert!((direct - poly.evaluate_segment(seg, u).position).norm() < 1e-14);
        }
    }
}

#[test]
fn world_time_velocity_matches_position_differences_across_uneven_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = Durations::new(0.25, 0.6, 1.2).unwrap();
    let poly = ControlPolygon::complete(&random_free(&mut rng), Point::zeros(), Point::new(0.1, 0.0, 0.0), d).unwrap();
    let h = 1e-6;
    for k in 1..60 {
        let t = 1.2 * k as f64 / 60.0;
        if [0.25, 0.6].iter().any(|j| (t - j).abs() < 2.0 * h) {
            continue;
        }
        let p = |t| poly.evaluate(t).unwrap();
        let v = (p(t + h).position - p(t - h).position) / (2.0 * h);
        let a = (p(t + h).velocity - p(t - h).velocity) / (2.0 * h);
        let s = p(t);
        assert!((v - s.velocity).norm() <= 1e-6 * s.velocity.norm().max(1.0));
        assert!((a - s.acceleration).norm() <= 1e-5 * s.acceleration.norm().max(1.0));
    }
}

fn free_strategy() -> impl Strategy<Value = [f64; N_FREE]> {
    prop::array::uniform12(-0.3f64..0.3)
}

fn durations_strategy() -> impl Strategy<Value = Durations> {
    (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0).prop_map(|(a, b, c)| Durations::new(a, a + b, a + b + c).unwrap())
}

proptest! {
    #[test]
    fn completion_satisfies_boundary_and_stitching(free in free_strategy(), d in durations_strategy()) {
        let start = Point::new(0.0, 0.0, 0.0);
        let end = Point::new(0.12, 0.0, 0.0);
        let poly = ControlPolygon::complete(&free, start, end, d).unwrap();
        for i in 0..3 {
            prop_assert_eq!(poly.point(i), start);
            prop_assert_eq!(poly.point(13 + i), end);
        }
        prop_assert_eq!(poly.free_coords(), free);
        let again = ControlPolygon::complete(&poly.free_coords(), start, end, d).unwrap();
        prop_assert_eq!(again, poly.clone());
        for j in [1usize, 2] {
            let a = poly.evaluate_segment(j, 1.0);
            let b = poly.evaluate_segment(j + 1, 0.0);
            let scale = a.acceleration.norm().max(1.0);
            prop_assert!((a.position - b.position).norm() < 1e-9);
            prop_assert!((a.velocity - b.velocity).norm() < 1e-9 * scale);
            prop_assert!((a.acceleration - b.acceleration).norm() < 1e-9 * scale);
        }
        let s0 = poly.evaluate(0.0).unwrap();
        let s1 = poly.evaluate(d.t3).unwrap();
        prop_assert!(s0.velocity.norm() < 1e-9 && s0.acceleration.norm() < 1e-9);
        prop_assert!(s1.velocity.norm() < 1e-9 && s1.acceleration.norm() < 1e-9);
    }

    #[test]
    fn partition_of_unity(t in 0.0f64..=1.0, n in 1usize..8) {
        let s: f64 = (0..=n).map(|i| bernstein(i, n, t).unwrap()).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_times_are_strictly_increasing(n in 3usize..400, d in durations_strategy()) {
        let poly = ControlPolygon::constant(Point::zeros(), d).unwrap();
        let traj = poly.sample(n).unwrap();
        prop_assert_eq!(traj.times[0], 0.0);
        prop_assert_eq!(*traj.times.last().unwrap(), d.t3);
        prop_assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(traj.segment_of.windows(2).all(|w| w[1] >= w[0]));
    }
}
