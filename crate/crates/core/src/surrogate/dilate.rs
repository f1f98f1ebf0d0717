//! Soft-DTW and the DILATE loss with analytic gradients.
//!
//! The temporal term is `<A, Ω>` where `A = ∂ sdtw / ∂Δ` is the soft alignment matrix and
//! `Ω_ij = (i - j)² / n²`. Its gradient with respect to the cost matrix is the Hessian-vector
//! product `H Ω`, obtained here by a forward-mode sweep over the recursion followed by a second
//! backward sweep.

use crate::error::{Error, Result};

/// Soft-DTW dynamic-programming tables over an `n × m` cost matrix.
struct Tables {
    n: usize,
    m: usize,
    gamma: f64,
    /// `(n+1) × (m+1)` accumulated costs, infinite on the padded border except `r[0,0]`.
    r: Vec<f64>,
    /// Soft-min weights on (diagonal, up, left) predecessors of each cell.
    q: Vec<[f64; 3]>,
}

impl Tables {
    fn at(&self, i: usize, j: usize) -> usize {
        i * (self.m + 1) + j
    }

    fn forward(cost: &[f64], n: usize, m: usize, gamma: f64) -> Tables {
        let w = m + 1;
        let mut r = vec![f64::INFINITY; (n + 1) * w];
        let mut q = vec![[0.0; 3]; (n + 1) * w];
        r[0] = 0.0;
        for i in 1..=n {
            for j in 1..=m {
                let prev = [r[(i - 1) * w + j - 1], r[(i - 1) * w + j], r[i * w + j - 1]];
                let lo = prev.iter().copied().fold(f64::INFINITY, f64::min);
                let mut e = [0.0; 3];
                let mut s = 0.0;
                for k in 0..3 {
                    if prev[k].is_finite() {
                        e[k] = (-(prev[k] - lo) / gamma).exp();
                        s += e[k];
                    }
                }
                let cell = i * w + j;
                for k in 0..3 {
                    q[cell][k] = e[k] / s;
                }
                r[cell] = cost[(i - 1) * m + j - 1] + lo - gamma * s.ln();
            }
        }
        Tables { n, m, gamma, r, q }
    }

    fn value(&self) -> f64 {
        self.r[self.at(self.n, self.m)]
    }

    /// `E_ij = ∂R_nm / ∂R_ij`, which equals `∂R_nm / ∂Δ_ij`.
    fn backward(&self) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let w = m + 1;
        let mut e = vec![0.0; (n + 2) * (w + 1)];
        let ew = w + 1;
        e[n * ew + m] = 1.0;
        for i in (1..=n).rev() {
            for j in (1..=m).rev() {
                if i == n && j == m {
                    continue;
                }
                let mut acc = 0.0;
                if i < n && j < m {
                    acc += e[(i + 1) * ew + j + 1] * self.q[(i + 1) * w + j + 1][0];
                }
                if i < n {
                    acc += e[(i + 1) * ew + j] * self.q[(i + 1) * w + j][1];
                }
                if j < m {
                    acc += e[i * ew + j + 1] * self.q[i * w + j + 1][2];
                }
                e[i * ew + j] = acc;
            }
        }
        let mut out = vec![0.0; n * m];
        for i in 1..=n {
            for j in 1..=m {
                out[(i - 1) * m + j - 1] = e[i * ew + j];
            }
        }
        out
    }

    /// Directional derivative of the alignment matrix along `dir`: returns `H · dir`.
    fn hessian_product(&self, e: &[f64], dir: &[f64]) -> Vec<f64> {
        let (n, m, g) = (self.n, self.m, self.gamma);
        let w = m + 1;
        let mut rdot = vec![0.0; (n + 1) * w];
        let mut qdot = vec![[0.0; 3]; (n + 1) * w];
        for i in 1..=n {
            for j in 1..=m {
                let cell = i * w + j;
                let prev = [rdot[(i - 1) * w + j - 1], rdot[(i - 1) * w + j], rdot[i * w + j - 1]];
                let q = self.q[cell];
                let mean = q[0] * prev[0] + q[1] * prev[1] + q[2] * prev[2];
                for k in 0..3 {
                    qdot[cell][k] = -q[k] * (prev[k] - mean) / g;
                }
                rdot[cell] = dir[(i - 1) * m + j - 1] + mean;
            }
        }
        let at_e = |i: usize, j: usize| e[(i - 1) * m + j - 1];
        let mut edot = vec![0.0; n * m];
        for i in (1..=n).rev() {
            for j in (1..=m).rev() {
                if i == n && j == m {
                    continue;
                }
                let mut acc = 0.0;
                if i < n && j < m {
                    let c = (i + 1) * w + j + 1;
                    acc += edot[i * m + j] * self.q[c][0] + at_e(i + 1, j + 1) * qdot[c][0];
                }
                if i < n {
                    let c = (i + 1) * w + j;
                    acc += edot[i * m + j - 1] * self.q[c][1] + at_e(i + 1, j) * qdot[c][1];
                }
                if j < m {
                    let c = i * w + j + 1;
                    acc += edot[(i - 1) * m + j] * self.q[c][2] + at_e(i, j + 1) * qdot[c][2];
                }
                edot[(i - 1) * m + j - 1] = acc;
            }
        }
        edot
    }
}

fn check_inputs(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("soft-DTW smoothing must be positive, got {gamma}")));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("soft-DTW needs non-empty sequences".into()));
    }
    let dim = a[0].len();
    if a.iter().chain(b.iter()).any(|v| v.len() != dim) {
        return Err(Error::Shape("sequence elements differ in dimension".into()));
    }
    Ok(dim)
}

/// Squared-Euclidean pairwise cost matrix, row-major `a.len() × b.len()`.
pub fn pairwise_cost(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum());
        }
    }
    out
}

/// Soft-DTW alignment cost between two sequences of equal-dimension vectors.
pub fn soft_dtw(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> Result<f64> {
    check_inputs(a, b, gamma)?;
    let cost = pairwise_cost(a, b);
    Ok(Tables::forward(&cost, a.len(), b.len(), gamma).value())
}

/// Classic (hard-min) DTW over squared-Euclidean costs.
pub fn dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let cost = pairwise_cost(a, b);
    let w = m + 1;
    let mut r = vec![f64::INFINITY; (n + 1) * w];
    r[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let best = r[(i - 1) * w + j - 1].min(r[(i - 1) * w + j]).min(r[i * w + j - 1]);
            r[i * w + j] = cost[(i - 1) * m + j - 1] + best;
        }
    }
    r[n * w + m]
}

/// Temporal penalty matrix `Ω_ij = (i - j)² / n²`.
pub fn omega(n: usize, m: usize) -> Vec<f64> {
    let scale = (n * n) as f64;
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let d = i as f64 - j as f64;
            out.push(d * d / scale);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DilateTerms {
    pub loss: f64,
    pub shape: f64,
    pub temporal: f64,
}

fn check_dilate(pred: &[Vec<f64>], target: &[Vec<f64>], alpha: f64, gamma: f64) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction length {} differs from target length {}",
            pred.len(),
            target.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("DILATE mix must lie in [0, 1], got {alpha}")));
    }
    check_inputs(pred, target, gamma)?;
    Ok(())
}

/// DILATE loss `α · shape + (1 - α) · temporal`.
pub fn dilate_loss(pred: &[Vec<f64>], target: &[Vec<f64>], alpha: f64, gamma: f64) -> Result<DilateTerms> {
    check_dilate(pred, target, alpha, gamma)?;
    let n = pred.len();
    let cost = pairwise_cost(pred, target);
    let t = Tables::forward(&cost, n, n, gamma);
    let shape = t.value();
    let e = t.backward();
    let temporal: f64 = e.iter().zip(omega(n, n)).map(|(a, o)| a * o).sum();
    Ok(DilateTerms {
        loss: alpha * shape + (1.0 - alpha) * temporal,
        shape,
        temporal,
    })
}

/// DILATE loss and its gradient with respect to every prediction element.
pub fn dilate_grad(
    pred: &[Vec<f64>],
    target: &[Vec<f64>],
    alpha: f64,
    gamma: f64,
) -> Result<(DilateTerms, Vec<Vec<f64>>)> {
    check_dilate(pred, target, alpha, gamma)?;
    let n = pred.len();
    let cost = pairwise_cost(pred, target);
    let t = Tables::forward(&cost, n, n, gamma);
    let shape = t.value();
    let e = t.backward();
    let om = omega(n, n);
    let temporal: f64 = e.iter().zip(&om).map(|(a, o)| a * o).sum();
    let mut g_cost: Vec<f64> = e.iter().map(|v| alpha * v).collect();
    if alpha < 1.0 {
        let hv = t.hessian_product(&e, &om);
        for (g, h) in g_cost.iter_mut().zip(hv) {
            *g += (1.0 - alpha) * h;
        }
    }
    let dim = pred[0].len();
    let mut grad = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for j in 0..n {
            let g = g_cost[i * n + j];
            if g == 0.0 {
                continue;
            }
            for k in 0..dim {
                grad[i][k] += 2.0 * g * (pred[i][k] - target[j][k]);
            }
        }
    }
    Ok((
        DilateTerms {
            loss: alpha * shape + (1.0 - alpha) * temporal,
            shape,
            temporal,
        },
        grad,
    ))
}

/// Mean squared error and its gradient.
pub fn mse_grad(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape("MSE needs equal non-empty lengths".into()));
    }
    let count = (pred.len() * pred[0].len()) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            p.iter()
                .zip(t)
                .map(|(a, b)| {
                    loss += (a - b) * (a - b);
                    2.0 * (a - b) / count
                })
                .collect()
        })
        .collect();
    Ok((loss / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn single_cell_cost() {
        for g in [1e-3, 0.1, 10.0] {
            assert_eq!(soft_dtw(&seq(&[0.0]), &seq(&[1.0]), g).unwrap(), 1.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(soft_dtw(&seq(&[0.0]), &seq(&[1.0]), 0.0), Err(Error::Domain(_))));
        assert!(soft_dtw(&[], &seq(&[1.0]), 1.0).is_err());
        assert!(matches!(
            dilate_loss(&seq(&[0.0, 1.0]), &seq(&[1.0]), 0.5, 0.01),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn identical_sequences() {
        let a = seq(&[0.0, 1.0, 3.0, 2.0, 0.5]);
        assert_eq!(dtw(&a, &a), 0.0);
        let v = soft_dtw(&a, &a, 0.01).unwrap();
        assert!(v <= 0.0 && v > -0.01 * 25.0 * 3f64.ln());
        let d = dilate_loss(&a, &a, 1.0, 0.01).unwrap();
        assert_eq!(d.loss, v);
        let d = dilate_loss(&a, &a, 0.5, 1e-4).unwrap();
        assert!(d.temporal.abs() < 1e-9);
    }

    #[test]
    fn shift_raises_temporal_term() {
        let base: Vec<f64> = (0..20).map(|i| (-((i as f64 - 8.0).powi(2)) / 4.0).exp()).collect();
        let shifted: Vec<f64> = (0..20).map(|i| (-((i as f64 - 10.0).powi(2)) / 4.0).exp()).collect();
        let same = dilate_loss(&seq(&base), &seq(&base), 0.5, 0.01).unwrap();
        let moved = dilate_loss(&seq(&base), &seq(&shifted), 0.5, 0.01).unwrap();
        assert!(moved.temporal > same.temporal);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pred = seq(&[0.3, -0.2, 0.8, 1.1, 0.4, 0.0]);
        let target = seq(&[0.0, 0.5, 1.0, 0.7, 0.2, -0.1]);
        for alpha in [0.0, 0.5, 1.0] {
            let (_, g) = dilate_grad(&pred, &target, alpha, 0.1).unwrap();
            for i in 0..pred.len() {
                let h = 1e-6;
                let mut up = pred.clone();
                up[i][0] += h;
                let mut dn = pred.clone();
                dn[i][0] -= h;
                let fd = (dilate_loss(&up, &target, alpha, 0.1).unwrap().loss
                    - dilate_loss(&dn, &target, alpha, 0.1).unwrap().loss)
                    / (2.0 * h);
                assert!((fd - g[i][0]).abs() < 1e-6 * (1.0 + fd.abs()), "alpha {alpha} i {i}: {fd} vs {}", g[i][0]);
            }
        }
    }

    #[test]
    fn mse_gradient() {
        let (l, g) = mse_grad(&seq(&[1.0, 2.0]), &seq(&[0.0, 0.0])).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g, seq(&[1.0, 2.0]));
    }
}
