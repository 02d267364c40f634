//! Variable-level attention over the final hidden tensor, plus the
//! aggregation used to rank variables by their empirical mean attention.

use serde::{Deserialize, Serialize};

use crate::cell::{HiddenTensor, MvLstmParams};
use crate::error::{Error, Result};
use crate::linalg::{dot, softmax_into, DenseVector};

pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `e_n = tanh(w_e · h_T^n + b_e)`
    pub logits: DenseVector,
    /// `α = softmax(e)`
    pub weights: DenseVector,
    /// `w_out_n · h_T^n + b_out_n`
    pub per_var_pred: DenseVector,
    pub prediction: f64,
}

pub fn attention_forward(params: &MvLstmParams, h_final: &HiddenTensor) -> Result<AttentionOutput> {
    let s = params.shape;
    if h_final.n_vars() != s.n_vars || h_final.dim() != s.per_var_dim {
        return Err(Error::Shape(format!(
            "attention expects a {}x{} hidden tensor, got {}x{}",
            s.n_vars,
            s.per_var_dim,
            h_final.n_vars(),
            h_final.dim()
        )));
    }
    let n = s.n_vars;
    let mut logits = vec![0.0; n];
    let mut per_var = vec![0.0; n];
    for k in 0..n {
        let h = h_final.block(k);
        logits[k] = (dot(params.w_e.as_slice(), h) + params.b_e).tanh();
        per_var[k] = dot(params.w_out.row(k), h) + params.b_out[k];
    }
    let mut weights = vec![0.0; n];
    softmax_into(&logits, &mut weights)?;
    let prediction = weights.iter().zip(&per_var).map(|(a, p)| a * p).sum();
    Ok(AttentionOutput {
        logits: logits.into(),
        weights: weights.into(),
        per_var_pred: per_var.into(),
        prediction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[0, 1]`; a value of exactly 1 lands in the last bin.
    pub fn unit_interval(values: impl IntoIterator<Item = f64>, bins: usize) -> Self {
        let bins = bins.max(1);
        let edges = (0..=bins).map(|b| b as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let b = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Empirical attention summary for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableAttention {
    pub index: usize,
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub histogram: Histogram,
}

/// Ranks variables by the mean of their per-instance attention weights,
/// descending, with ties resolved by ascending index.
pub fn rank_variables(
    names: &[String],
    weights_per_instance: &[DenseVector],
    bins: usize,
) -> Result<Vec<VariableAttention>> {
    if weights_per_instance.is_empty() {
        return Err(Error::InsufficientData(
            "attention ranking needs at least one instance".into(),
        ));
    }
    let n = names.len();
    if let Some(bad) = weights_per_instance.iter().find(|w| w.len() != n) {
        return Err(Error::Shape(format!(
            "attention vector of length {} for {n} variables",
            bad.len()
        )));
    }
    let mut out: Vec<VariableAttention> = (0..n)
        .map(|k| {
            // Welford running moments.
            let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
            for w in weights_per_instance {
                count += 1.0;
                let delta = w[k] - mean;
                mean += delta / count;
                m2 += delta * (w[k] - mean);
            }
            VariableAttention {
                index: k,
                name: names[k].clone(),
                mean,
                std: (m2 / count).sqrt(),
                histogram: Histogram::unit_interval(weights_per_instance.iter().map(|w| w[k]), bins),
            }
        })
        .collect();
    out.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.index.cmp(&b.index)));
    Ok(out)
}
