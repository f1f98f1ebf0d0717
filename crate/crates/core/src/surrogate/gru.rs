//! Single-layer GRU with a linear readout, trained by backpropagation through time.
//!
//! All weights live in one flat parameter vector so the optimizer and gradient code can treat
//! them uniformly. Per step:
//!
//! ```text
//! z = σ(Wz x + Uz h + bz)
//! r = σ(Wr x + Ur h + br)
//! c = tanh(Wh x + Uh (r ⊙ h) + bh)
//! h' = (1 - z) ⊙ h + z ⊙ c
//! y = Wo h' + bo
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature affine normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits mean and standard deviation per column; near-constant columns get unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for row in rows {
            n += 1;
            for k in 0..dim {
                sum[k] += row[k];
                sq[k] += row[k] * row[k];
            }
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = (0..dim)
            .map(|k| {
                let var = (sq[k] / n as f64 - mean[k] * mean[k]).max(0.0);
                let s = var.sqrt();
                if s > 1e-9 * (1.0 + mean[k].abs()) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }

    fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.std).all(|v| v.is_finite()) && self.std.iter().all(|s| *s > 0.0)
    }
}

/// Offsets of each weight block inside the flat parameter vector.
#[derive(Clone, Copy, Debug)]
struct Layout {
    d: usize,
    h: usize,
    k: usize,
    wz: usize,
    uz: usize,
    bz: usize,
    wr: usize,
    ur: usize,
    br: usize,
    wh: usize,
    uh: usize,
    bh: usize,
    wo: usize,
    bo: usize,
    len: usize,
}

impl Layout {
    fn new(d: usize, h: usize, k: usize) -> Layout {
        let gate = h * d + h * h + h;
        let wz = 0;
        let uz = wz + h * d;
        let bz = uz + h * h;
        let wr = gate;
        let ur = wr + h * d;
        let br = ur + h * h;
        let wh = 2 * gate;
        let uh = wh + h * d;
        let bh = uh + h * h;
        let wo = 3 * gate;
        let bo = wo + k * h;
        Layout {
            d,
            h,
            k,
            wz,
            uz,
            bz,
            wr,
            ur,
            br,
            wh,
            uh,
            bh,
            wo,
            bo,
            len: bo + k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruModel {
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
    /// Sequence length of the training grid.
    pub seq_len: usize,
    pub params: Vec<f64>,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W x` for a row-major `rows × cols` block.
fn gemv_add(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `out += Wᵀ g` for a row-major `g.len() × out.len()` block.
fn gemv_t_add(out: &mut [f64], w: &[f64], g: &[f64]) {
    let cols = out.len();
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += gi * a;
        }
    }
}

/// `W += g xᵀ`.
fn outer_add(w: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (gi, row) in g.iter().zip(w.chunks_exact_mut(cols)) {
        if *gi == 0.0 {
            continue;
        }
        for (a, b) in row.iter_mut().zip(x) {
            *a += gi * b;
        }
    }
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache {
    xs: Vec<Vec<f64>>,
    /// Hidden states `h_0 .. h_T`.
    hs: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    rs: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl GruModel {
    /// Model with every weight and bias zero and identity normalization.
    pub fn zeros(input_size: usize, hidden_size: usize, output_size: usize, seq_len: usize) -> Self {
        let len = Layout::new(input_size, hidden_size, output_size).len;
        GruModel {
            input_size,
            hidden_size,
            output_size,
            seq_len,
            params: vec![0.0; len],
            input_norm: Normalizer::identity(input_size),
            output_norm: Normalizer::identity(output_size),
        }
    }

    /// Uniform initialization in `±1/√hidden`.
    pub fn random(input_size: usize, hidden_size: usize, output_size: usize, seq_len: usize, seed: u64) -> Self {
        let mut m = Self::zeros(input_size, hidden_size, output_size, seq_len);
        let bound = 1.0 / (hidden_size as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in m.params.iter_mut() {
            *p = rng.gen_range(-bound..bound);
        }
        m
    }

    fn layout(&self) -> Layout {
        Layout::new(self.input_size, self.hidden_size, self.output_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.hidden_size == 0 || self.output_size == 0 {
            return Err(Error::Shape("model dimensions must be positive".into()));
        }
        if self.params.len() != self.layout().len {
            return Err(Error::Shape(format!(
                "expected {} parameters, found {}",
                self.layout().len,
                self.params.len()
            )));
        }
        if self.input_norm.dim() != self.input_size || self.output_norm.dim() != self.output_size {
            return Err(Error::Shape("normalizer dimensions do not match the model".into()));
        }
        if !self.input_norm.is_finite() || !self.output_norm.is_finite() {
            return Err(Error::Validation("normalization statistics must be finite".into()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("model parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Runs the recurrence on already-normalized inputs and keeps the activations.
    pub fn forward_cached(&self, xs: &[Vec<f64>]) -> Result<ForwardCache> {
        let l = self.layout();
        if xs.is_empty() {
            return Err(Error::Shape("input sequence is empty".into()));
        }
        if let Some(bad) = xs.iter().find(|x| x.len() != l.d) {
            return Err(Error::Shape(format!("input dimension {} but model expects {}", bad.len(), l.d)));
        }
        let p = &self.params;
        let (d, h, k) = (l.d, l.h, l.k);
        let mut cache = ForwardCache {
            xs: xs.to_vec(),
            hs: vec![vec![0.0; h]],
            zs: Vec::with_capacity(xs.len()),
            rs: Vec::with_capacity(xs.len()),
            cs: Vec::with_capacity(xs.len()),
            outputs: Vec::with_capacity(xs.len()),
        };
        let mut rh = vec![0.0; h];
        for x in xs {
            let hp = cache.hs.last().expect("initial state");
            let mut z = p[l.bz..l.bz + h].to_vec();
            gemv_add(&mut z, &p[l.wz..l.wz + h * d], x);
            gemv_add(&mut z, &p[l.uz..l.uz + h * h], hp);
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
            let mut r = p[l.br..l.br + h].to_vec();
            gemv_add(&mut r, &p[l.wr..l.wr + h * d], x);
            gemv_add(&mut r, &p[l.ur..l.ur + h * h], hp);
            r.iter_mut().for_each(|v| *v = sigmoid(*v));
            for i in 0..h {
                rh[i] = r[i] * hp[i];
            }
            let mut c = p[l.bh..l.bh + h].to_vec();
            gemv_add(&mut c, &p[l.wh..l.wh + h * d], x);
            gemv_add(&mut c, &p[l.uh..l.uh + h * h], &rh);
            c.iter_mut().for_each(|v| *v = v.tanh());
            let hn: Vec<f64> = (0..h).map(|i| (1.0 - z[i]) * hp[i] + z[i] * c[i]).collect();
            let mut y = p[l.bo..l.bo + k].to_vec();
            gemv_add(&mut y, &p[l.wo..l.wo + k * h], &hn);
            cache.zs.push(z);
            cache.rs.push(r);
            cache.cs.push(c);
            cache.hs.push(hn);
            cache.outputs.push(y);
        }
        Ok(cache)
    }

    /// Backpropagates output gradients through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, dys: &[Vec<f64>]) -> Vec<f64> {
        let l = self.layout();
        let (d, h, k) = (l.d, l.h, l.k);
        let p = &self.params;
        let mut g = vec![0.0; l.len];
        let mut dh_next = vec![0.0; h];
        let mut rh = vec![0.0; h];
        for t in (0..cache.xs.len()).rev() {
            let x = &cache.xs[t];
            let hp = &cache.hs[t];
            let hn = &cache.hs[t + 1];
            let (z, r, c) = (&cache.zs[t], &cache.rs[t], &cache.cs[t]);
            let dy = &dys[t];
            outer_add(&mut g[l.wo..l.wo + k * h], dy, hn);
            for j in 0..k {
                g[l.bo + j] += dy[j];
            }
            let mut dh = dh_next.clone();
            gemv_t_add(&mut dh, &p[l.wo..l.wo + k * h], dy);

            let mut dh_prev: Vec<f64> = (0..h).map(|i| dh[i] * (1.0 - z[i])).collect();
            let daz: Vec<f64> = (0..h).map(|i| dh[i] * (c[i] - hp[i]) * z[i] * (1.0 - z[i])).collect();
            let dac: Vec<f64> = (0..h).map(|i| dh[i] * z[i] * (1.0 - c[i] * c[i])).collect();

            for i in 0..h {
                rh[i] = r[i] * hp[i];
            }
            outer_add(&mut g[l.wh..l.wh + h * d], &dac, x);
            outer_add(&mut g[l.uh..l.uh + h * h], &dac, &rh);
            for i in 0..h {
                g[l.bh + i] += dac[i];
            }
            let mut drh = vec![0.0; h];
            gemv_t_add(&mut drh, &p[l.uh..l.uh + h * h], &dac);
            let dar: Vec<f64> = (0..h).map(|i| drh[i] * hp[i] * r[i] * (1.0 - r[i])).collect();
            for i in 0..h {
                dh_prev[i] += drh[i] * r[i];
            }

            outer_add(&mut g[l.wz..l.wz + h * d], &daz, x);
            outer_add(&mut g[l.uz..l.uz + h * h], &daz, hp);
            outer_add(&mut g[l.wr..l.wr + h * d], &dar, x);
            outer_add(&mut g[l.ur..l.ur + h * h], &dar, hp);
            for i in 0..h {
                g[l.bz + i] += daz[i];
                g[l.br + i] += dar[i];
            }
            gemv_t_add(&mut dh_prev, &p[l.uz..l.uz + h * h], &daz);
            gemv_t_add(&mut dh_prev, &p[l.ur..l.ur + h * h], &dar);
            dh_next = dh_prev;
        }
        g
    }

    /// Normalizes raw inputs, runs the recurrence and denormalizes the readout.
    pub fn forward(&self, input: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let xs: Vec<Vec<f64>> = input.iter().map(|x| self.input_norm.normalize(x)).collect();
        if xs.iter().any(|x| x.len() != self.input_size) {
            return Err(Error::Shape(format!("model expects {}-dimensional inputs", self.input_size)));
        }
        let cache = self.forward_cached(&xs)?;
        Ok(cache.outputs.iter().map(|y| self.output_norm.denormalize(y)).collect())
    }
}

/// GRU forward pass over raw input vectors.
pub fn gru_forward(model: &GruModel, input: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    model.forward(input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_emits_readout_bias() {
        let mut m = GruModel::zeros(2, 3, 1, 4);
        let bo = m.params.len() - 1;
        m.params[bo] = 0.7;
        let out = gru_forward(&m, &[vec![1.0, -2.0], vec![0.5, 0.5], vec![3.0, 0.0]]).unwrap();
        assert!(out.iter().all(|y| y == &vec![0.7]));
    }

    #[test]
    fn causal_first_step() {
        let m = GruModel::random(2, 4, 2, 5, 1);
        let xs = vec![vec![0.3, -0.1], vec![1.0, 2.0], vec![-0.5, 0.4]];
        let full = gru_forward(&m, &xs).unwrap();
        let one = gru_forward(&m, &xs[..1]).unwrap();
        assert_eq!(full[0], one[0]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = GruModel::random(2, 4, 1, 5, 1);
        assert!(matches!(gru_forward(&m, &[vec![1.0]]), Err(Error::Shape(_))));
        assert!(matches!(gru_forward(&m, &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn normalizer_round_trip() {
        let rows = [vec![1.0, 5.0, 2.0], vec![3.0, 5.0, -4.0], vec![2.0, 5.0, 7.0]];
        let n = Normalizer::fit(rows.iter().map(|r| r.as_slice()), 3);
        assert_eq!(n.std[1], 1.0);
        for r in &rows {
            let back = n.denormalize(&n.normalize(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut m = GruModel::random(2, 3, 1, 6, 4);
        let xs: Vec<Vec<f64>> = (0..6).map(|t| vec![(t as f64).sin(), (t as f64 * 0.7).cos()]).collect();
        let target: Vec<f64> = (0..6).map(|t| 0.1 * t as f64).collect();
        let loss = |m: &GruModel| -> f64 {
            let c = m.forward_cached(&xs).unwrap();
            c.outputs.iter().zip(&target).map(|(y, t)| 0.5 * (y[0] - t).powi(2)).sum()
        };
        let c = m.forward_cached(&xs).unwrap();
        let dys: Vec<Vec<f64>> = c.outputs.iter().zip(&target).map(|(y, t)| vec![y[0] - t]).collect();
        let g = m.backward(&c, &dys);
        for i in 0..m.params.len() {
            let orig = m.params[i];
            m.params[i] = orig + 1e-6;
            let up = loss(&m);
            m.params[i] = orig - 1e-6;
            let dn = loss(&m);
            m.params[i] = orig;
            let fd = (up - dn) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }
}
