//! Force surrogates: a synthetic oracle for data generation and GRU predictors trained on it.

mod dilate;
mod gru;
mod oracle;

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dilate::{dilate_grad, dilate_loss, dtw, mse_grad, omega, pairwise_cost, soft_dtw, DilateTerms};
pub use gru::{gru_forward, ForwardCache, GruModel, Normalizer};
pub use oracle::{
    impact_pressure, oracle_forces, peel_force, touchdown_index, ForceSeries, OracleParams, TOUCHDOWN_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::geometry::{CompositeTrajectory, ControlPolygon};

/// Feature width: position and velocity.
pub const FEATURES: usize = 6;

/// Default training grid length.
pub const DEFAULT_SEQ_LEN: usize = 200;

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.15;

/// Derives a per-item seed from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut x = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Which force channel a model predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceChannel {
    Detachment,
    PrePressure,
}

impl ForceChannel {
    pub fn select<'a>(&self, f: &'a ForceSeries) -> &'a [f64] {
        match self {
            ForceChannel::Detachment => &f.detachment_force,
            ForceChannel::PrePressure => &f.pre_pressure,
        }
    }
}

/// Anything that maps a trajectory to a force series on its sample grid.
pub trait ForcePredictor: Send + Sync {
    fn predict_series(&self, traj: &CompositeTrajectory) -> Result<Vec<f64>>;
}

/// The oracle used directly as a predictor.
#[derive(Clone, Copy, Debug)]
pub struct OraclePredictor {
    pub params: OracleParams,
    pub channel: ForceChannel,
}

impl ForcePredictor for OraclePredictor {
    fn predict_series(&self, traj: &CompositeTrajectory) -> Result<Vec<f64>> {
        match self.channel {
            ForceChannel::Detachment => {
                self.params.validate()?;
                Ok(peel_force(traj, &self.params))
            }
            ForceChannel::PrePressure => Ok(oracle_forces(traj, &self.params)?.pre_pressure),
        }
    }
}

/// A model prediction and whether the input had to be resampled to the training grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    pub resampled: bool,
}

fn lerp_rows(times: &[f64], rows: &[Vec<f64>], at: &[f64]) -> Vec<Vec<f64>> {
    let mut j = 0;
    at.iter()
        .map(|&t| {
            while j + 2 < times.len() && times[j + 1] < t {
                j += 1;
            }
            let (t0, t1) = (times[j], times[j + 1]);
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            rows[j].iter().zip(&rows[j + 1]).map(|(a, b)| a + w * (b - a)).collect()
        })
        .collect()
}

fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { t1 } else { t0 + (t1 - t0) * i as f64 / (n - 1) as f64 })
        .collect()
}

fn feature_rows(traj: &CompositeTrajectory) -> Vec<Vec<f64>> {
    traj.features().iter().map(|f| f.to_vec()).collect()
}

/// Runs a model over a trajectory, resampling to the training grid when the lengths differ.
pub fn predict(model: &GruModel, traj: &CompositeTrajectory) -> Result<Prediction> {
    model.validate()?;
    if model.output_size != 1 || model.input_size != FEATURES {
        return Err(Error::Shape("force models map 6 features to 1 output".into()));
    }
    if traj.len() < 2 {
        return Err(Error::Shape("trajectory needs at least two samples".into()));
    }
    let rows = feature_rows(traj);
    if traj.len() == model.seq_len || model.seq_len < 2 {
        let out = model.forward(&rows)?;
        return Ok(Prediction {
            values: out.into_iter().map(|y| y[0]).collect(),
            resampled: false,
        });
    }
    log::warn!(
        "trajectory has {} samples but the model was trained on {}; resampling",
        traj.len(),
        model.seq_len
    );
    let grid = uniform_grid(traj.times[0], *traj.times.last().expect("non-empty"), model.seq_len);
    let out = model.forward(&lerp_rows(&traj.times, &rows, &grid))?;
    let back = lerp_rows(&grid, &out, &traj.times);
    Ok(Prediction {
        values: back.into_iter().map(|y| y[0]).collect(),
        resampled: true,
    })
}

impl ForcePredictor for GruModel {
    fn predict_series(&self, traj: &CompositeTrajectory) -> Result<Vec<f64>> {
        predict(self, traj).map(|p| p.values)
    }
}

/// One polygon with its sampled trajectory and oracle forces.
#[derive(Clone, Debug, PartialEq)]
pub struct DataItem {
    pub polygon: ControlPolygon,
    pub trajectory: CompositeTrajectory,
    pub forces: ForceSeries,
}

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    polygon: ControlPolygon,
    times: Vec<f64>,
    features: Vec<[f64; 6]>,
    detachment_force: Vec<f64>,
    pre_pressure: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub items: Vec<DataItem>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded split of `0..n` into sorted (train, validation) index lists.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let nv = ((n as f64 * validation_fraction).round() as usize).min(n);
    let mut val = idx[..nv].to_vec();
    let mut train = idx[nv..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

impl Dataset {
    pub fn from_items(items: Vec<DataItem>, validation_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&validation_fraction) {
            return Err(Error::Validation("validation fraction must lie in [0, 1)".into()));
        }
        let (train, validation) = split_indices(items.len(), validation_fraction, seed);
        Ok(Dataset {
            items,
            train,
            validation,
        })
    }

    /// Samples each polygon on a `grid`-point grid and labels it with the oracle.
    pub fn generate(polygons: &[ControlPolygon], grid: usize, oracle: &OracleParams, seed: u64) -> Result<Self> {
        let items = polygons
            .par_iter()
            .enumerate()
            .map(|(i, poly)| {
                let trajectory = poly.sample(grid)?;
                let params = OracleParams {
                    seed: derive_seed(seed, i as u64),
                    ..*oracle
                };
                let forces = oracle_forces(&trajectory, &params)?;
                Ok(DataItem {
                    polygon: poly.clone(),
                    trajectory,
                    forces,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_items(items, DEFAULT_VALIDATION_FRACTION, seed)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for item in &self.items {
            let rec = ItemRecord {
                polygon: item.polygon.clone(),
                times: item.trajectory.times.clone(),
                features: item.trajectory.features(),
                detachment_force: item.forces.detachment_force.clone(),
                pre_pressure: item.forces.pre_pressure.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads items back and re-splits them with the given seed.
    pub fn read_jsonl<R: BufRead>(r: R, validation_fraction: f64, seed: u64) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ItemRecord =
                serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            let n = rec.times.len();
            if rec.detachment_force.len() != n || rec.pre_pressure.len() != n {
                return Err(Error::Parse(format!("line {}: force series length differs from grid", i + 1)));
            }
            let trajectory = rec.polygon.sample(n)?;
            let scale = trajectory.durations.t3;
            if trajectory.times.iter().zip(&rec.times).any(|(a, b)| (a - b).abs() > 1e-9 * scale) {
                return Err(Error::Parse(format!("line {}: times do not match a uniform grid", i + 1)));
            }
            items.push(DataItem {
                polygon: rec.polygon,
                forces: ForceSeries {
                    times: trajectory.times.clone(),
                    detachment_force: rec.detachment_force,
                    pre_pressure: rec.pre_pressure,
                },
                trajectory,
            });
        }
        Self::from_items(items, validation_fraction, seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Dilate,
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after each epoch.
    pub lr_decay: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub hidden_size: usize,
    pub clip_norm: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            learning_rate: 0.01,
            lr_decay: 0.97,
            alpha: 0.5,
            gamma: 0.01,
            hidden_size: 64,
            clip_norm: 5.0,
            loss: LossKind::Dilate,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_size == 0 {
            return Err(Error::Validation("epochs, batch size and hidden size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.lr_decay > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Validation("learning rate, decay and clip norm must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(self.gamma > 0.0) {
            return Err(Error::Validation("alpha must lie in [0, 1] and gamma must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Validation DILATE loss of the untrained model.
    #[serde(default)]
    pub initial_validation_loss: f64,
    /// Mean training objective per epoch.
    pub train_loss: Vec<f64>,
    /// Mean validation DILATE loss per epoch.
    pub validation_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub detachment: GruModel,
    pub prepressure: GruModel,
    pub detachment_history: TrainHistory,
    pub prepressure_history: TrainHistory,
    pub config: TrainConfig,
}

impl TrainedModels {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let m: TrainedModels = serde_json::from_reader(f)?;
        m.detachment.validate()?;
        m.prepressure.validate()?;
        Ok(m)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.step += 1;
        let c1 = 1.0 - B1.powi(self.step);
        let c2 = 1.0 - B2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

type Sequence = Vec<Vec<f64>>;

/// Loss and parameter gradient for one normalized item.
fn item_gradient(model: &GruModel, x: &[Vec<f64>], y: &[Vec<f64>], cfg: &TrainConfig) -> Result<(f64, Vec<f64>)> {
    let cache = model.forward_cached(x)?;
    let (loss, dy) = match cfg.loss {
        LossKind::Dilate => {
            let (terms, g) = dilate_grad(&cache.outputs, y, cfg.alpha, cfg.gamma)?;
            (terms.loss, g)
        }
        LossKind::Mse => mse_grad(&cache.outputs, y)?,
    };
    Ok((loss, model.backward(&cache, &dy)))
}

/// Mean DILATE loss of a model over the given items, in normalized output units.
pub fn mean_dilate(model: &GruModel, inputs: &[Sequence], targets: &[Sequence], alpha: f64, gamma: f64) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(0.0);
    }
    let losses = inputs
        .par_iter()
        .zip(targets.par_iter())
        .map(|(x, y)| {
            let cache = model.forward_cached(x)?;
            Ok(dilate_loss(&cache.outputs, y, alpha, gamma)?.loss)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Normalized model inputs and targets for a set of items.
pub fn prepare(model: &GruModel, dataset: &Dataset, idx: &[usize], channel: ForceChannel) -> (Vec<Sequence>, Vec<Sequence>) {
    let mut xs = Vec::with_capacity(idx.len());
    let mut ys = Vec::with_capacity(idx.len());
    for &i in idx {
        let item = &dataset.items[i];
        xs.push(
            item.trajectory
                .features()
                .iter()
                .map(|f| model.input_norm.normalize(f))
                .collect(),
        );
        ys.push(
            channel
                .select(&item.forces)
                .iter()
                .map(|v| model.output_norm.normalize(&[*v]))
                .collect(),
        );
    }
    (xs, ys)
}

/// Trains one force model with BPTT and Adam; deterministic for a given seed.
pub fn train_model(dataset: &Dataset, channel: ForceChannel, cfg: &TrainConfig) -> Result<(GruModel, TrainHistory)> {
    cfg.validate()?;
    if dataset.len() < 20 {
        return Err(Error::Validation(format!(
            "training needs at least 20 items, got {}",
            dataset.len()
        )));
    }
    if dataset.train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let seq_len = dataset.items[dataset.train[0]].trajectory.len();
    if dataset.items.iter().any(|it| it.trajectory.len() != seq_len) {
        return Err(Error::Shape("all items must share one sample grid".into()));
    }
    let mut model = GruModel::random(FEATURES, cfg.hidden_size, 1, seq_len, cfg.seed);
    let train_feats: Vec<[f64; 6]> = dataset
        .train
        .iter()
        .flat_map(|&i| dataset.items[i].trajectory.features())
        .collect();
    model.input_norm = Normalizer::fit(train_feats.iter().map(|r| r.as_slice()), FEATURES);
    let train_targets: Vec<[f64; 1]> = dataset
        .train
        .iter()
        .flat_map(|&i| channel.select(&dataset.items[i].forces).iter().map(|v| [*v]))
        .collect();
    model.output_norm = Normalizer::fit(train_targets.iter().map(|r| r.as_slice()), 1);

    let (tx, ty) = prepare(&model, dataset, &dataset.train, channel);
    let (vx, vy) = prepare(&model, dataset, &dataset.validation, channel);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut adam = Adam::new(model.num_params());
    let mut history = TrainHistory {
        initial_validation_loss: mean_dilate(&model, &vx, &vy, cfg.alpha, cfg.gamma)?,
        ..TrainHistory::default()
    };
    let mut order: Vec<usize> = (0..tx.len()).collect();
    let mut lr = cfg.learning_rate;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| item_gradient(&model, &tx[i], &ty[i], cfg))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; model.num_params()];
            for (loss, g) in &results {
                epoch_loss += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: "non-finite gradient".into(),
                });
            }
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            adam.update(&mut model.params, &grad, lr);
        }
        let train_loss = epoch_loss / tx.len() as f64;
        let val_loss = mean_dilate(&model, &vx, &vy, cfg.alpha, cfg.gamma)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: "non-finite loss".into(),
            });
        }
        log::debug!("{channel:?} epoch {epoch}: train {train_loss:.5} validation {val_loss:.5}");
        history.train_loss.push(train_loss);
        history.validation_loss.push(val_loss);
        lr *= cfg.lr_decay;
    }
    Ok((model, history))
}

/// Trains the detachment-force and pre-pressure models.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainedModels> {
    let (detachment, detachment_history) = train_model(dataset, ForceChannel::Detachment, cfg)?;
    let pcfg = TrainConfig {
        seed: derive_seed(cfg.seed, 2),
        ..*cfg
    };
    let (prepressure, prepressure_history) = train_model(dataset, ForceChannel::PrePressure, &pcfg)?;
    Ok(TrainedModels {
        detachment,
        prepressure,
        detachment_history,
        prepressure_history,
        config: *cfg,
    })
}
