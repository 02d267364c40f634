//! Interpretation report: empirical attention per variable next to the
//! pairwise Granger verdicts.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::attention::{rank_variables, Histogram};
use crate::error::{Error, Result};
use crate::granger::{GrangerRanking, GrangerTest};
use crate::linalg::DenseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub index: usize,
    pub name: String,
    pub is_target: bool,
    pub attention_mean: f64,
    pub attention_std: f64,
    /// 1-based position in the attention ranking over all variables.
    pub attention_rank: usize,
    pub histogram: Histogram,
    pub granger: Option<GrangerTest>,
    pub granger_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub k: usize,
    /// Size of the intersection between the top-k exogenous variables by
    /// attention and the top-k by Granger F.
    pub top_k_overlap: usize,
    pub causal: Vec<String>,
    /// Exogenous variables ordered by mean attention.
    pub attention_order: Vec<String>,
    /// Whether every Granger-causal variable outranks every non-causal one.
    pub partition_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretReport {
    pub target: String,
    pub n_instances: usize,
    pub granger_lag: usize,
    pub granger_level: f64,
    /// In attention-rank order.
    pub variables: Vec<VariableReport>,
    pub agreement: Agreement,
}

impl InterpretReport {
    /// `names` has the target last; `alphas` holds one attention vector per
    /// test instance. `k` defaults to the number of Granger-causal variables.
    pub fn build(
        names: &[String],
        alphas: &[DenseVector],
        granger: &GrangerRanking,
        bins: usize,
        k: Option<usize>,
    ) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::Shape("a report needs at least one exogenous variable".into()));
        }
        let target = names.len() - 1;
        let ranked = rank_variables(names, alphas, bins)?;
        let exo_order: Vec<usize> = ranked.iter().map(|v| v.index).filter(|&i| i != target).collect();
        let causal = granger.causal_indices();
        let k = k.unwrap_or(causal.len()).min(target);
        let by_attention: HashSet<usize> = exo_order.iter().take(k).copied().collect();
        let by_f: HashSet<usize> = granger.entries.iter().take(k).map(|e| e.index).collect();
        let causal_set: HashSet<usize> = causal.iter().copied().collect();
        let top_causal: HashSet<usize> = exo_order.iter().take(causal.len()).copied().collect();

        let variables = ranked
            .into_iter()
            .enumerate()
            .map(|(pos, v)| {
                let entry = granger.entries.iter().find(|e| e.index == v.index);
                let failure = granger.failures.iter().find(|f| f.index == v.index);
                VariableReport {
                    index: v.index,
                    is_target: v.index == target,
                    name: v.name,
                    attention_mean: v.mean,
                    attention_std: v.std,
                    attention_rank: pos + 1,
                    histogram: v.histogram,
                    granger: entry.map(|e| e.test),
                    granger_error: failure.map(|f| f.message.clone()),
                }
            })
            .collect();
        Ok(Self {
            target: names[target].clone(),
            n_instances: alphas.len(),
            granger_lag: granger.lag,
            granger_level: granger.level,
            variables,
            agreement: Agreement {
                k,
                top_k_overlap: by_attention.intersection(&by_f).count(),
                causal: causal.iter().map(|&i| names[i].clone()).collect(),
                attention_order: exo_order.iter().map(|&i| names[i].clone()).collect(),
                partition_match: top_causal == causal_set,
            },
        })
    }

    pub fn write_json(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| Error::Io {
            path: "<report>".into(),
            source: e.into(),
        })
    }

    /// Long-format histogram table: one row per variable and bin.
    pub fn write_histogram_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Io {
            path: "<report>".into(),
            source: e.into(),
        };
        w.write_record(["variable", "bin_lo", "bin_hi", "count"]).map_err(wrap)?;
        for v in &self.variables {
            let h = &v.histogram;
            for (b, count) in h.counts.iter().enumerate() {
                w.write_record([
                    v.name.clone(),
                    h.edges[b].to_string(),
                    h.edges[b + 1].to_string(),
                    count.to_string(),
                ])
                .map_err(wrap)?;
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: "<report>".into(),
            source: e,
        })
    }

    /// One summary row per variable.
    pub fn write_summary_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Io {
            path: "<report>".into(),
            source: e.into(),
        };
        w.write_record(["variable", "attention_rank", "attention_mean", "attention_std", "F", "p_value", "verdict"])
            .map_err(wrap)?;
        for v in &self.variables {
            let (f, p, verdict) = match (&v.granger, &v.granger_error, v.is_target) {
                (_, _, true) => (String::new(), String::new(), "target".to_string()),
                (Some(g), _, _) => (
                    g.f_stat.to_string(),
                    g.p_value.to_string(),
                    if g.causal { "causal" } else { "non-causal" }.to_string(),
                ),
                (None, err, _) => (String::new(), String::new(), err.clone().unwrap_or_default()),
            };
            w.write_record([
                v.name.clone(),
                v.attention_rank.to_string(),
                v.attention_mean.to_string(),
                v.attention_std.to_string(),
                f,
                p,
                verdict,
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<report>".into(),
            source: e,
        })
    }
}
