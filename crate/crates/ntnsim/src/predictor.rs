//! Signal-strength predictor: a small feed-forward network that learns the
//! residual between measured strength and the closed-form channel
//! projection. The projection is wired in as a shortcut, so an untrained
//! (zero-weight) model already reproduces the closed form exactly, and
//! training only has to capture what the link budget misses.
//!
//! The model consumes exactly four features per query: current elevation,
//! orbit altitude, and the reference measurement's elevation and strength.
//! (A recurrent baseline needs a 40-value window for the same task; the
//! whole point here is doing it with a tenth of that.)

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::channel::{model_signal_strength, slant_range_m, ChannelParams, ChannelSample};

/// Input width of the model. Fixed by construction, not configuration.
pub const INPUT_FEATURES: usize = 4;

/// Feature-window width of the recurrent reference predictor this model is
/// measured against (ten 4-value steps).
pub const REFERENCE_RECURRENT_FEATURES: usize = 40;

/// First line of the model file format.
pub const MODEL_FORMAT: &str = "ntnsim-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("dataset too small: {0} samples (need at least 10)")]
    TooFewSamples(usize),
    #[error("dataset contains a non-finite value")]
    NonFinite,
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format: {0}")]
    Format(String),
}

/// The four inputs, in fixed order.
fn features_of(s: &ChannelSample) -> [f64; INPUT_FEATURES] {
    [s.elevation_deg, s.altitude_m, s.ref_elevation_deg, s.ref_strength_dbm]
}

fn clamp_elevation(deg: f64) -> f64 {
    deg.clamp(0.5, 90.0)
}

/// Closed-form strength estimate from the sample's own reference
/// measurement: the no-learning baseline, and the model's shortcut term.
pub fn channel_model_estimate(s: &ChannelSample, a_zenith_db: f64) -> f64 {
    let el = clamp_elevation(s.elevation_deg);
    let el0 = clamp_elevation(s.ref_elevation_deg);
    let params = ChannelParams { a_zenith_db, ..ChannelParams::default() };
    model_signal_strength(
        s.ref_strength_dbm,
        slant_range_m(s.altitude_m, el0),
        el0,
        slant_range_m(s.altitude_m, el),
        el,
        &params,
    )
    .expect("clamped inputs are always valid")
}

/// Per-feature z-score constants, frozen from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: [f64; INPUT_FEATURES],
    pub std: [f64; INPUT_FEATURES],
}

impl FeatureNorm {
    pub fn identity() -> Self {
        FeatureNorm { mean: [0.0; INPUT_FEATURES], std: [1.0; INPUT_FEATURES] }
    }

    /// Fits mean/std per feature. Constant features get std 1 so querying
    /// stays well-defined; the second return value reports how many
    /// features were degenerate.
    pub fn fit(samples: &[ChannelSample]) -> (Self, usize) {
        let n = samples.len().max(1) as f64;
        let mut mean = [0.0; INPUT_FEATURES];
        let mut std = [0.0; INPUT_FEATURES];
        for s in samples {
            let x = features_of(s);
            for i in 0..INPUT_FEATURES {
                mean[i] += x[i];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        for s in samples {
            let x = features_of(s);
            for i in 0..INPUT_FEATURES {
                std[i] += (x[i] - mean[i]).powi(2);
            }
        }
        let mut degenerate = 0;
        for s in &mut std {
            *s = (*s / n).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
                degenerate += 1;
            }
        }
        (FeatureNorm { mean, std }, degenerate)
    }

    fn apply(&self, x: &[f64; INPUT_FEATURES]) -> [f64; INPUT_FEATURES] {
        let mut z = [0.0; INPUT_FEATURES];
        for i in 0..INPUT_FEATURES {
            z[i] = (x[i] - self.mean[i]) / self.std[i];
        }
        z
    }
}

/// input(4) -> tanh hidden -> linear output, plus the closed-form shortcut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub hidden: usize,
    /// Hidden weights, one row of 4 per hidden unit.
    pub w1: Vec<[f64; INPUT_FEATURES]>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub norm: FeatureNorm,
    /// When set (the default), the output is added to the closed-form
    /// projection instead of predicting absolute strength.
    pub shortcut: bool,
    /// Zenith attenuation used inside the shortcut projection, dB.
    pub a_zenith_db: f64,
}

impl PredictorModel {
    /// All-zero weights: with the shortcut on this is exactly the
    /// closed-form channel estimate.
    pub fn zeroed(hidden: usize, a_zenith_db: f64) -> Self {
        PredictorModel {
            hidden,
            w1: vec![[0.0; INPUT_FEATURES]; hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            norm: FeatureNorm::identity(),
            shortcut: true,
            a_zenith_db,
        }
    }

    fn network_output(&self, z: &[f64; INPUT_FEATURES]) -> f64 {
        let mut out = self.b2;
        for j in 0..self.hidden {
            let mut a = self.b1[j];
            for i in 0..INPUT_FEATURES {
                a += self.w1[j][i] * z[i];
            }
            out += self.w2[j] * a.tanh();
        }
        out
    }

    /// Predicted strength in dBm for one sample's features.
    pub fn forward(&self, s: &ChannelSample) -> f64 {
        let nn = self.network_output(&self.norm.apply(&features_of(s)));
        if self.shortcut {
            nn + channel_model_estimate(s, self.a_zenith_db)
        } else {
            nn
        }
    }
}

/// Gradient of the batch MSE with the same shape as the weights.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub w1: Vec<[f64; INPUT_FEATURES]>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Batch MSE of `forward` against the measured strengths, and its exact
/// gradient with respect to every weight.
pub fn loss_and_gradient(model: &PredictorModel, batch: &[ChannelSample]) -> (f64, Gradient) {
    let h = model.hidden;
    let mut grad = Gradient { w1: vec![[0.0; INPUT_FEATURES]; h], b1: vec![0.0; h], w2: vec![0.0; h], b2: 0.0 };
    let mut loss = 0.0;
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut hidden_act = vec![0.0; h];
    for s in batch {
        let z = model.norm.apply(&features_of(s));
        for (j, act) in hidden_act.iter_mut().enumerate() {
            let mut a = model.b1[j];
            for i in 0..INPUT_FEATURES {
                a += model.w1[j][i] * z[i];
            }
            *act = a.tanh();
        }
        let mut out = model.b2;
        for j in 0..h {
            out += model.w2[j] * hidden_act[j];
        }
        let pred = if model.shortcut {
            out + channel_model_estimate(s, model.a_zenith_db)
        } else {
            out
        };
        let err = pred - s.strength_dbm;
        loss += err * err * scale;
        let dout = 2.0 * err * scale;
        grad.b2 += dout;
        for j in 0..h {
            grad.w2[j] += dout * hidden_act[j];
            let dhidden = dout * model.w2[j] * (1.0 - hidden_act[j] * hidden_act[j]);
            grad.b1[j] += dhidden;
            for i in 0..INPUT_FEATURES {
                grad.w1[j][i] += dhidden * z[i];
            }
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// An epoch must beat the best validation MSE by more than this to
    /// count as progress.
    pub early_stop_tol: f64,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub a_zenith_db: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            hidden: 16,
            seed: 1,
            validation_fraction: 0.2,
            early_stop_tol: 1e-7,
            patience: 40,
            a_zenith_db: ChannelParams::default().a_zenith_db,
        }
    }
}

/// What training did; `val_history` holds the per-epoch validation MSE.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_val_mse: f64,
    pub final_train_mse: f64,
    pub val_history: Vec<f64>,
    pub degenerate_features: usize,
}

fn dataset_check(samples: &[ChannelSample]) -> Result<(), PredictorError> {
    if samples.len() < 10 {
        return Err(PredictorError::TooFewSamples(samples.len()));
    }
    for s in samples {
        let all = [s.t_s, s.elevation_deg, s.altitude_m, s.ref_elevation_deg, s.ref_strength_dbm, s.strength_dbm];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(PredictorError::NonFinite);
        }
    }
    Ok(())
}

fn val_mse(model: &PredictorModel, samples: &[ChannelSample]) -> f64 {
    let mut loss = 0.0;
    for s in samples {
        let e = model.forward(s) - s.strength_dbm;
        loss += e * e;
    }
    loss / samples.len().max(1) as f64
}

/// Minibatch gradient descent with a fixed learning rate. The data is
/// shuffled once (seeded) into an 80/20-style train/validation split, the
/// feature normalization is frozen from the training split, and the
/// returned model is the epoch snapshot with the best validation MSE.
pub fn train(
    samples: &[ChannelSample],
    cfg: &TrainConfig,
) -> Result<(PredictorModel, TrainReport), PredictorError> {
    dataset_check(samples)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    let mut order: Vec<usize> = (0..samples.len()).collect();
    shuffle(&mut order, &mut rng);
    let val_len = ((samples.len() as f64 * cfg.validation_fraction).round() as usize)
        .clamp(1, samples.len() - 1);
    let (val_idx, train_idx) = order.split_at(val_len);
    let train_set: Vec<ChannelSample> = train_idx.iter().map(|&i| samples[i]).collect();
    let val_set: Vec<ChannelSample> = val_idx.iter().map(|&i| samples[i]).collect();

    let (norm, degenerate_features) = FeatureNorm::fit(&train_set);
    let mut model = PredictorModel::zeroed(cfg.hidden, cfg.a_zenith_db);
    model.norm = norm;
    // Hidden weights start small and random; the output layer starts at
    // zero so the initial prediction is exactly the shortcut.
    for row in &mut model.w1 {
        for w in row.iter_mut() {
            *w = rng.random_range(-0.5..0.5);
        }
    }

    let mut best = model.clone();
    let mut best_val = val_mse(&model, &val_set);
    let mut val_history = vec![best_val];
    let mut stale = 0usize;
    let mut epochs_run = 0;
    let mut train_order: Vec<usize> = (0..train_set.len()).collect();
    let mut final_train_mse = val_mse(&model, &train_set);

    for _ in 0..cfg.epochs {
        epochs_run += 1;
        shuffle(&mut train_order, &mut rng);
        for chunk in train_order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<ChannelSample> = chunk.iter().map(|&i| train_set[i]).collect();
            let (_, g) = loss_and_gradient(&model, &batch);
            for j in 0..model.hidden {
                for i in 0..INPUT_FEATURES {
                    model.w1[j][i] -= cfg.learning_rate * g.w1[j][i];
                }
                model.b1[j] -= cfg.learning_rate * g.b1[j];
                model.w2[j] -= cfg.learning_rate * g.w2[j];
            }
            model.b2 -= cfg.learning_rate * g.b2;
        }
        let v = val_mse(&model, &val_set);
        val_history.push(v);
        if v < best_val - cfg.early_stop_tol {
            best_val = v;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
        final_train_mse = val_mse(&model, &train_set);
    }

    Ok((
        best,
        TrainReport { epochs_run, best_val_mse: best_val, final_train_mse, val_history, degenerate_features },
    ))
}

fn shuffle<R: Rng>(indices: &mut [usize], rng: &mut R) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

// ===== Evaluation =====

/// Absolute-error summary; percentiles use the nearest-rank rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub count: usize,
    pub mean_abs_db: f64,
    pub median_abs_db: f64,
    pub p90_abs_db: f64,
}

/// Nearest-rank percentile of pre-sorted values: the ceil(p/100 * n)-th.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Error report for an arbitrary predictor function over a test set.
pub fn evaluate_with<F: Fn(&ChannelSample) -> f64>(predict: F, samples: &[ChannelSample]) -> ErrorReport {
    let mut errs: Vec<f64> = samples.iter().map(|s| (predict(s) - s.strength_dbm).abs()).collect();
    errs.sort_by(|a, b| a.total_cmp(b));
    let mean = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
    ErrorReport {
        count: errs.len(),
        mean_abs_db: mean,
        median_abs_db: nearest_rank(&errs, 50.0),
        p90_abs_db: nearest_rank(&errs, 90.0),
    }
}

pub fn evaluate(model: &PredictorModel, samples: &[ChannelSample]) -> ErrorReport {
    evaluate_with(|s| model.forward(s), samples)
}

/// Per-group breakdown (e.g. one group per satellite-ground pair).
pub fn evaluate_groups(
    model: &PredictorModel,
    groups: &[(String, Vec<ChannelSample>)],
) -> Vec<(String, ErrorReport)> {
    groups.iter().map(|(name, set)| (name.clone(), evaluate(model, set))).collect()
}

// ===== Persistence =====

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: PredictorModel,
}

pub fn save_model(path: &Path, model: &PredictorModel) -> Result<(), PredictorError> {
    let file = ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, model: model.clone() };
    let json = serde_json::to_string_pretty(&file).expect("model serializes");
    crate::harness::write_atomic(path, json.as_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<PredictorModel, PredictorError> {
    let raw = std::fs::read_to_string(path)?;
    let file: ModelFile =
        serde_json::from_str(&raw).map_err(|e| PredictorError::Format(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(PredictorError::Format(format!("not a model file: format {:?}", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(PredictorError::Format(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            file.version
        )));
    }
    let m = &file.model;
    if m.w1.len() != m.hidden || m.b1.len() != m.hidden || m.w2.len() != m.hidden {
        return Err(PredictorError::Format("weight shapes disagree with hidden size".into()));
    }
    Ok(file.model)
}
