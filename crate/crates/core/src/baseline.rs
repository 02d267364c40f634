//! Reference forecasters: persistence and a linear ARX fitted by least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::granger::ols;
use crate::linalg::DenseMatrix;
use crate::train::{rmse, Window};

/// Predicts the last observed target value of the window.
pub fn persistence_forecast(window: &DenseMatrix) -> f64 {
    window[(window.rows() - 1, window.cols() - 1)]
}

/// `ŷ = c + Σ_k Σ_{l=1..p} β_{k,l} · x_{k, T+1-l}` over every column,
/// target included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearArxModel {
    pub lag: usize,
    pub n_vars: usize,
    /// Intercept, then for each column its lags `1..=lag`.
    pub coefficients: Vec<f64>,
}

fn arx_features(window: &DenseMatrix, lag: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    let t = window.rows();
    for k in 0..window.cols() {
        for l in 1..=lag {
            out.push(window[(t - l, k)]);
        }
    }
}

pub fn fit_linear_arx(windows: &[Window], lag: usize) -> Result<LinearArxModel> {
    let first = windows
        .first()
        .ok_or_else(|| Error::InsufficientData("no training windows for the linear baseline".into()))?;
    let (t, n_vars) = (first.inputs.rows(), first.inputs.cols());
    if lag == 0 || lag > t {
        return Err(Error::Config(format!("baseline lag {lag} must lie in 1..={t}")));
    }
    let width = 1 + n_vars * lag;
    let mut data = Vec::with_capacity(windows.len() * width);
    let mut row = Vec::with_capacity(width);
    for w in windows {
        if w.inputs.rows() != t || w.inputs.cols() != n_vars {
            return Err(Error::Shape("windows of differing shape".into()));
        }
        arx_features(&w.inputs, lag, &mut row);
        data.extend_from_slice(&row);
    }
    let design = DenseMatrix::from_row_major(windows.len(), width, data)?;
    let response: Vec<f64> = windows.iter().map(|w| w.target).collect();
    let fit = ols(&design, &response)?;
    Ok(LinearArxModel {
        lag,
        n_vars,
        coefficients: fit.coefficients,
    })
}

impl LinearArxModel {
    pub fn predict(&self, window: &DenseMatrix) -> Result<f64> {
        if window.cols() != self.n_vars || window.rows() < self.lag {
            return Err(Error::Shape(format!(
                "window is {}x{}, model needs at least {} rows and {} columns",
                window.rows(),
                window.cols(),
                self.lag,
                self.n_vars
            )));
        }
        let mut row = Vec::with_capacity(self.coefficients.len());
        arx_features(window, self.lag, &mut row);
        Ok(row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }
}

pub fn persistence_rmse(windows: &[Window]) -> Result<f64> {
    let pred: Vec<f64> = windows.iter().map(|w| persistence_forecast(&w.inputs)).collect();
    let truth: Vec<f64> = windows.iter().map(|w| w.target).collect();
    rmse(&pred, &truth)
}

pub fn linear_arx_rmse(model: &LinearArxModel, windows: &[Window]) -> Result<f64> {
    let pred = windows
        .iter()
        .map(|w| model.predict(&w.inputs))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<f64> = windows.iter().map(|w| w.target).collect();
    rmse(&pred, &truth)
}
