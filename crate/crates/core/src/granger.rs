//! Pairwise Granger-causality F-test on nested least-squares models.
//!
//! For a lag order `p` the restricted model regresses `y_t` on an intercept
//! and `y_{t-1..t-p}`; the full model adds `x_{t-1..t-p}`. With
//! `T_eff = len − p` usable rows,
//!
//! ```text
//! F = ((RSS_r − RSS_f) / p) / (RSS_f / (T_eff − 2p − 1))
//! ```
//!
//! and the p-value is the upper tail of `F(p, T_eff − 2p − 1)`.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::frame::SeriesFrame;
use crate::linalg::DenseMatrix;

pub const DEFAULT_LAG: usize = 5;
pub const DEFAULT_LEVEL: f64 = 0.05;
/// Reported F when the full model fits exactly.
pub const F_CAP: f64 = 1e12;
const EXACT_FIT_RSS: f64 = 1e-12;
const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub rss: f64,
}

/// Least squares by Householder QR. A column whose remaining norm after
/// elimination falls below `1e-10` of its original norm is reported as
/// linearly dependent.
pub fn ols(design: &DenseMatrix, response: &[f64]) -> Result<OlsFit> {
    householder_ls(design, response, false)
}

/// As [`ols`], but dependent columns are dropped (coefficient 0) instead of
/// rejected. The residual is the projection onto the column space, so the RSS
/// does not depend on which of a set of collinear columns is kept.
pub fn ols_projection(design: &DenseMatrix, response: &[f64]) -> Result<OlsFit> {
    householder_ls(design, response, true)
}

fn householder_ls(design: &DenseMatrix, response: &[f64], drop_dependent: bool) -> Result<OlsFit> {
    let rows = design.rows();
    let cols = design.cols();
    if response.len() != rows {
        return Err(Error::Shape(format!(
            "design has {rows} rows, response has {}",
            response.len()
        )));
    }
    if rows < cols || cols == 0 {
        return Err(Error::InsufficientData(format!(
            "least squares needs at least as many rows as columns, got {rows}x{cols}"
        )));
    }
    // Column-major working copy.
    let mut a: Vec<Vec<f64>> = (0..cols).map(|c| design.column(c)).collect();
    let mut qty = response.to_vec();
    let col_norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();
    // (column, pivot row) for each retained column
    let mut pivots: Vec<(usize, usize)> = Vec::with_capacity(cols);

    for k in 0..cols {
        let row = pivots.len();
        let alpha = norm(&a[k][row..]);
        if col_norms[k] == 0.0 || alpha <= PIVOT_TOLERANCE * col_norms[k] {
            if drop_dependent {
                continue;
            }
            return Err(Error::RankDeficient { column: k });
        }
        let sign = if a[k][row] >= 0.0 { 1.0 } else { -1.0 };
        let mut v = a[k][row..].to_vec();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let proj: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>() * 2.0 / vnorm2;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= proj * vi;
            }
        };
        for col in a.iter_mut().skip(k) {
            reflect(&mut col[row..]);
        }
        reflect(&mut qty[row..]);
        pivots.push((k, row));
    }

    let mut beta = vec![0.0; cols];
    for (i, &(k, row)) in pivots.iter().enumerate().rev() {
        let mut acc = qty[row];
        for &(j, _) in &pivots[i + 1..] {
            acc -= a[j][row] * beta[j];
        }
        beta[k] = acc / a[k][row];
    }
    let rss = (0..rows)
        .map(|r| {
            let fit: f64 = design.row(r).iter().zip(&beta).map(|(x, b)| x * b).sum();
            (response[r] - fit).powi(2)
        })
        .sum();
    Ok(OlsFit {
        coefficients: beta,
        rss,
    })
}

fn norm(v: &[f64]) -> f64 {
    // scaled to avoid overflow on large entries
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrangerTest {
    pub f_stat: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
    pub causal: bool,
    pub rss_restricted: f64,
    pub rss_full: f64,
}

/// Upper-tail probability of the F distribution via the regularized
/// incomplete beta function.
pub fn f_survival(f: f64, df_num: f64, df_den: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if !f.is_finite() {
        return 0.0;
    }
    let x = df_den / (df_den + df_num * f);
    beta_reg(df_den / 2.0, df_num / 2.0, x).clamp(0.0, 1.0)
}

/// Design rows for `t = p..len`: intercept, `y` lags `1..=p`, then
/// (optionally) `x` lags `1..=p`.
pub fn lagged_design(y: &[f64], x: Option<&[f64]>, p: usize) -> (DenseMatrix, Vec<f64>) {
    let width = 1 + p + if x.is_some() { p } else { 0 };
    let rows = y.len() - p;
    let design = DenseMatrix::from_fn(rows, width, |r, c| {
        let t = r + p;
        match c {
            0 => 1.0,
            c if c <= p => y[t - c],
            c => x.expect("x lags requested")[t - (c - p)],
        }
    });
    (design, y[p..].to_vec())
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// Does `x` Granger-cause `y` at lag order `p`?
pub fn granger_test(y: &[f64], x: &[f64], p: usize, level: f64) -> Result<GrangerTest> {
    if p == 0 {
        return Err(Error::Config("lag order must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("significance level must lie in (0, 1), got {level}")));
    }
    if y.len() != x.len() {
        return Err(Error::Shape(format!("series lengths differ: {} vs {}", y.len(), x.len())));
    }
    if y.len() <= 3 * p + 1 {
        return Err(Error::InsufficientData(format!(
            "lag order {p} needs more than {} observations, got {}",
            3 * p + 1,
            y.len()
        )));
    }
    if is_constant(y) {
        return Err(Error::ConstantColumn("target".into()));
    }
    if is_constant(x) {
        return Err(Error::ConstantColumn("exogenous".into()));
    }
    let (restricted, resp) = lagged_design(y, None, p);
    let (full, _) = lagged_design(y, Some(x), p);
    // x lags may duplicate y lags exactly (e.g. y a shifted copy of x)
    let rss_r = ols_projection(&restricted, &resp)?.rss;
    let rss_f = ols_projection(&full, &resp)?.rss;
    let df_den = y.len() - p - 2 * p - 1;
    let (f_stat, p_value) = if rss_f < EXACT_FIT_RSS {
        (F_CAP, 0.0)
    } else {
        let f = ((rss_r - rss_f).max(0.0) / p as f64) / (rss_f / df_den as f64);
        (f, f_survival(f, p as f64, df_den as f64))
    };
    Ok(GrangerTest {
        f_stat,
        df_num: p,
        df_den,
        p_value,
        causal: p_value < level,
        rss_restricted: rss_r,
        rss_full: rss_f,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerEntry {
    pub index: usize,
    pub name: String,
    #[serde(flatten)]
    pub test: GrangerTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerFailure {
    pub index: usize,
    pub name: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerRanking {
    pub lag: usize,
    pub level: f64,
    /// Sorted by F descending, ties by column index.
    pub entries: Vec<GrangerEntry>,
    pub failures: Vec<GrangerFailure>,
}

impl GrangerRanking {
    pub fn causal_indices(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| e.test.causal).map(|e| e.index).collect()
    }
}

/// Tests every exogenous column of `frame` against its target. Rows with
/// missing values are dropped first; failing columns are collected rather
/// than aborting the ranking.
pub fn granger_rank(frame: &SeriesFrame, p: usize, level: f64) -> Result<GrangerRanking> {
    if !(level > 0.0 && level < 1.0) || p == 0 {
        return Err(Error::Config(format!("invalid lag {p} or level {level}")));
    }
    let (clean, _) = frame.drop_missing();
    let y = clean.target();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (index, name) in clean.exogenous_names().iter().enumerate() {
        match granger_test(y, clean.column(index), p, level) {
            Ok(test) => entries.push(GrangerEntry {
                index,
                name: name.clone(),
                test,
            }),
            Err(e) => failures.push(GrangerFailure {
                index,
                name: name.clone(),
                message: match e {
                    Error::ConstantColumn(which) if which == "exogenous" => format!("column `{name}` is constant"),
                    Error::ConstantColumn(_) => format!("target `{}` is constant", clean.target_name()),
                    other => other.to_string(),
                },
            }),
        }
    }
    entries.sort_by(|a, b| b.test.f_stat.total_cmp(&a.test.f_stat).then(a.index.cmp(&b.index)));
    Ok(GrangerRanking {
        lag: p,
        level,
        entries,
        failures,
    })
}
