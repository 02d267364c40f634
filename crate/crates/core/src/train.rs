//! Windowing, normalisation, the Adam training loop and error metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{infer, CellShape, MvLstmParams, ParamBlock};
use crate::error::{Error, Result};
use crate::frame::SeriesFrame;
use crate::grad::{loss_and_grad, mean_grads, ParamGrads};
use crate::linalg::{DenseMatrix, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let s = Self { train, val, test };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {:?}",
                parts
            )));
        }
        Ok(())
    }

    /// Row counts for `n` rows: train and validation are floored, test takes the rest.
    pub fn row_counts(&self, n: usize) -> [usize; 3] {
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let val = floor(self.val).min(n - train);
        [train, val, n - train - val]
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Per-column z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population mean and standard deviation of each column over `rows`.
    pub fn from_rows(frame: &SeriesFrame, rows: std::ops::Range<usize>) -> Result<Self> {
        let count = rows.len() as f64;
        let mut mean = Vec::with_capacity(frame.n_vars());
        let mut std = Vec::with_capacity(frame.n_vars());
        for k in 0..frame.n_vars() {
            let col = &frame.column(k)[rows.clone()];
            let mu = col.iter().sum::<f64>() / count;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / count;
            let sd = var.sqrt();
            if !(sd > 1e-12 * mu.abs().max(1.0)) {
                return Err(Error::ConstantColumn(frame.names()[k].clone()));
            }
            mean.push(mu);
            std.push(sd);
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, col: usize, v: f64) -> f64 {
        (v - self.mean[col]) / self.std[col]
    }

    pub fn denormalize(&self, col: usize, z: f64) -> f64 {
        z * self.std[col] + self.mean[col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `T × N`, normalised, target last.
    pub inputs: DenseMatrix,
    /// Normalised target one step after the window.
    pub target: f64,
    /// Row of the cleaned frame where the window starts.
    pub start_row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub names: Vec<String>,
    pub window: usize,
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
    pub stats: NormStats,
    /// Row ranges of the cleaned frame assigned to each split.
    pub split_rows: [std::ops::Range<usize>; 3],
    pub dropped_rows: usize,
}

impl WindowedDataset {
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn split(&self, s: Split) -> &[Window] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Chronological split, train-only z-scoring, stride-1 windows inside each split.
pub fn make_windows(frame: &SeriesFrame, window: usize, splits: SplitFractions) -> Result<WindowedDataset> {
    build_windows(frame, window, splits, None)
}

/// As [`make_windows`] but normalises with previously fitted statistics.
pub fn make_windows_with_stats(
    frame: &SeriesFrame,
    window: usize,
    splits: SplitFractions,
    stats: &NormStats,
) -> Result<WindowedDataset> {
    build_windows(frame, window, splits, Some(stats))
}

fn build_windows(
    frame: &SeriesFrame,
    window: usize,
    splits: SplitFractions,
    stats: Option<&NormStats>,
) -> Result<WindowedDataset> {
    splits.validate()?;
    if window == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    let (clean, dropped_rows) = frame.drop_missing();
    let n = clean.n_rows();
    if n < window + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} complete rows, a window of {window} needs at least {}",
            window + 1
        )));
    }
    let counts = splits.row_counts(n);
    let ranges = [
        0..counts[0],
        counts[0]..counts[0] + counts[1],
        counts[0] + counts[1]..n,
    ];
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != clean.n_vars() || s.std.len() != clean.n_vars() {
                return Err(Error::Shape("normalisation statistics do not match the column count".into()));
            }
            s.clone()
        }
        None => NormStats::from_rows(&clean, ranges[0].clone())?,
    };
    let nv = clean.n_vars();
    let target_col = clean.target_index();
    let positions = clean.positions();
    let norm = |r: usize, c: usize| stats.normalize(c, clean.value(r, c));
    let windows_in = |range: &std::ops::Range<usize>| -> Vec<Window> {
        if range.len() <= window {
            return Vec::new();
        }
        (range.start..range.end - window)
            .filter(|&s| positions[s + window] - positions[s] == window)
            .map(|s| Window {
                inputs: DenseMatrix::from_fn(window, nv, |r, c| norm(s + r, c)),
                target: norm(s + window, target_col),
                start_row: s,
            })
            .collect()
    };
    let [train, val, test] = [&ranges[0], &ranges[1], &ranges[2]].map(windows_in);
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData(format!(
            "split sizes {}/{}/{} rows give {}/{}/{} windows of length {window}; every split needs at least one, supply more rows",
            counts[0],
            counts[1],
            counts[2],
            train.len(),
            val.len(),
            test.len()
        )));
    }
    Ok(WindowedDataset {
        names: clean.names().to_vec(),
        window,
        train,
        val,
        test,
        stats,
        split_rows: ranges,
        dropped_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub window: usize,
    pub per_var_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub splits: SplitFractions,
    /// Worker threads for batch gradients; 0 uses all cores.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 10,
            per_var_dim: 4,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 500,
            patience: 15,
            clip_norm: 5.0,
            seed: 0,
            splits: SplitFractions::default(),
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.splits.validate()?;
        let bad = |what: &str| Err(Error::Config(format!("{what} must be positive")));
        if self.window == 0 {
            return bad("window");
        }
        if self.per_var_dim == 0 {
            return bad("per_var_dim");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs");
        }
        if self.patience == 0 {
            return bad("patience");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
    pub alphas: Vec<DenseVector>,
}

impl Evaluation {
    pub fn rmse(&self) -> Result<f64> {
        rmse(&self.predictions, &self.targets)
    }

    pub fn mae(&self) -> Result<f64> {
        mae(&self.predictions, &self.targets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: MvLstmParams,
    pub loss_curve: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub test_rmse: f64,
    pub test_mae: f64,
    pub test_predictions: Vec<f64>,
    pub test_alphas: Vec<DenseVector>,
}

/// Initial parameters `fit` starts from for a given shape and seed.
pub fn initial_params(shape: CellShape, seed: u64) -> MvLstmParams {
    MvLstmParams::init(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

struct Adam {
    m: MvLstmParams,
    v: MvLstmParams,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &MvLstmParams) -> Self {
        Self {
            m: MvLstmParams::zeros(params.shape),
            v: MvLstmParams::zeros(params.shape),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut MvLstmParams, grads: &ParamGrads, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for b in ParamBlock::ALL {
            let g = grads.block(b);
            let m = self.m.block_mut(b);
            let v = self.v.block_mut(b);
            for (((p, &gk), mk), vk) in params.block_mut(b).iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mk = Self::BETA1 * *mk + (1.0 - Self::BETA1) * gk;
                *vk = Self::BETA2 * *vk + (1.0 - Self::BETA2) * gk * gk;
                let m_hat = *mk / c1;
                let v_hat = *vk / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
            }
        }
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Predictions and attention weights for every window, in order.
pub fn evaluate(params: &MvLstmParams, windows: &[Window]) -> Result<Evaluation> {
    let outs: Vec<_> = windows
        .par_iter()
        .map(|w| infer(params, &w.inputs))
        .collect::<Result<_>>()?;
    let mut eval = Evaluation {
        predictions: Vec::with_capacity(outs.len()),
        targets: windows.iter().map(|w| w.target).collect(),
        alphas: Vec::with_capacity(outs.len()),
    };
    for o in outs {
        eval.predictions.push(o.prediction);
        eval.alphas.push(o.weights);
    }
    Ok(eval)
}

/// Trains with Adam on mean squared error and early stopping on the
/// validation loss; returns the parameters of the best validation epoch.
///
/// The result is a pure function of `(dataset, config)`: per-instance
/// gradients are reduced in a fixed order, so the worker count does not
/// change a single bit of the output.
pub fn fit(dataset: &WindowedDataset, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    if dataset.train.is_empty() || dataset.val.is_empty() {
        return Err(Error::InsufficientData("training needs non-empty train and validation splits".into()));
    }
    if dataset.window != config.window {
        return Err(Error::Config(format!(
            "dataset windows have length {}, config asks for {}",
            dataset.window, config.window
        )));
    }
    let shape = CellShape::new(dataset.n_vars(), config.per_var_dim, config.window)?;
    let pool = thread_pool(config.threads)?;
    pool.install(|| fit_inner(dataset, config, shape))
}

fn fit_inner(dataset: &WindowedDataset, config: &TrainConfig, shape: CellShape) -> Result<FitResult> {
    let mut params = initial_params(shape, config.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut adam = Adam::new(&params);

    let n_train = dataset.train.len();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut instance_loss = vec![0.0; n_train];
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut curve = Vec::new();
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let parts: Vec<(f64, ParamGrads)> = idx
                .par_iter()
                .map(|&i| {
                    let w = &dataset.train[i];
                    loss_and_grad(&params, &w.inputs, w.target)
                })
                .collect::<Result<_>>()
                .map_err(|_| Error::Divergence { epoch, batch })?;
            if parts.iter().any(|(l, _)| !l.is_finite()) {
                return Err(Error::Divergence { epoch, batch });
            }
            for (&i, (l, _)) in idx.iter().zip(&parts) {
                instance_loss[i] = *l;
            }
            let (_, mut grads) = mean_grads(&params, parts);
            let norm = grads.global_norm();
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
            }
            adam.update(&mut params, &grads, config.learning_rate);
        }
        let train_loss = instance_loss.iter().sum::<f64>() / n_train as f64;
        let val_eval = evaluate(&params, &dataset.val).map_err(|_| Error::Divergence {
            epoch,
            batch: n_train.div_ceil(config.batch_size),
        })?;
        let val_loss = mse(&val_eval.predictions, &val_eval.targets)?;
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: n_train.div_ceil(config.batch_size),
            });
        }
        curve.push(EpochLoss {
            epoch,
            train: train_loss,
            val: val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let (_, best_epoch, params) = best;
    let test = evaluate(&params, &dataset.test)?;
    Ok(FitResult {
        test_rmse: test.rmse()?,
        test_mae: test.mae()?,
        params,
        loss_curve: curve,
        best_epoch,
        test_predictions: test.predictions,
        test_alphas: test.alphas,
    })
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "metric inputs must be non-empty and equal length, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    mse(pred, truth).map(f64::sqrt)
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}
