//! Python bindings: data frames, synthetic series, training, inference,
//! Granger ranking and the gradient check.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mvlstm::grad::fd_check;
use mvlstm::linalg::DenseMatrix;
use mvlstm::synth::ArxSpec;
use mvlstm::train::evaluate;
use mvlstm::{CellShape, ModelFile, MvLstmParams, SeriesFrame, TrainConfig};

fn to_py(e: mvlstm::Error) -> PyErr {
    if e.is_internal() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// A multivariate series with the target as its last column.
#[pyclass(name = "Frame", module = "mvlstm_py", frozen)]
pub struct Frame {
    inner: SeriesFrame,
}

#[pymethods]
impl Frame {
    #[staticmethod]
    fn from_csv(path: &str, target: &str) -> PyResult<Self> {
        SeriesFrame::from_csv_path(path, target).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Builds a frame from named columns; `target` is moved last.
    #[staticmethod]
    fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>, target: &str) -> PyResult<Self> {
        SeriesFrame::from_columns(names, columns, target)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.target_name().to_string()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let k = self
            .inner
            .names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PyValueError::new_err(format!("column `{name}` not found")))?;
        Ok(self.inner.column(k).to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __repr__(&self) -> String {
        format!("Frame(rows={}, names={:?})", self.inner.n_rows(), self.inner.names())
    }
}

/// Lag-1 ARX series `y_t = a·y_{t-1} + Σ b_k x_{k,t-1} + σ·ε` with unit-variance drivers.
#[pyfunction]
#[pyo3(signature = (coefs, self_coef = 0.0, noise_std = 0.1, length = 1000, seed = 0))]
fn synth(coefs: Vec<f64>, self_coef: f64, noise_std: f64, length: usize, seed: u64) -> PyResult<Frame> {
    let spec = ArxSpec::lag1(&coefs, self_coef, noise_std, length, seed);
    mvlstm::generate(&spec).map(|inner| Frame { inner }).map_err(to_py)
}

#[pyclass(name = "Model", module = "mvlstm_py", frozen)]
pub struct Model {
    inner: ModelFile,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ModelFile::load(path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
    }

    /// `(n_vars, per_var_dim, window)`
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let s = self.inner.shape();
        (s.n_vars, s.per_var_dim, s.window)
    }

    /// Forecast from a raw-unit window of `window` rows; returns the
    /// de-normalised prediction and the attention weights.
    fn predict(&self, window: Vec<Vec<f64>>) -> PyResult<(f64, Vec<f64>)> {
        let stats = &self.inner.stats;
        let n = self.inner.names.len();
        if window.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err(format!("every row needs {n} values")));
        }
        let rows: Vec<Vec<f64>> = window
            .iter()
            .map(|r| r.iter().enumerate().map(|(c, v)| stats.normalize(c, *v)).collect())
            .collect();
        let m = DenseMatrix::from_rows(&rows).map_err(|e| to_py(e.into()))?;
        if m.rows() != self.inner.shape().window {
            return Err(PyValueError::new_err(format!(
                "window has {} rows, model expects {}",
                m.rows(),
                self.inner.shape().window
            )));
        }
        let out = mvlstm::infer(&self.inner.params, &m).map_err(to_py)?;
        Ok((stats.denormalize(n - 1, out.prediction), out.weights.into_vec()))
    }

    /// Mean attention per variable over the test split of `frame`.
    fn attention(&self, frame: &Frame) -> PyResult<Vec<(String, f64)>> {
        let ds = mvlstm::train::make_windows_with_stats(
            &frame.inner,
            self.inner.shape().window,
            Default::default(),
            &self.inner.stats,
        )
        .map_err(to_py)?;
        let ev = evaluate(&self.inner.params, &ds.test).map_err(to_py)?;
        let ranked = mvlstm::rank_variables(&ds.names, &ev.alphas, 10).map_err(to_py)?;
        Ok(ranked.into_iter().map(|v| (v.name, v.mean)).collect())
    }
}

/// Trains on `frame` with the default 0.7/0.15/0.15 split. Returns the model
/// and `(test_rmse, test_mae)` in normalised units.
#[pyfunction]
#[pyo3(signature = (frame, window = 10, dim = 4, lr = 1e-3, max_epochs = 500, patience = 15, seed = 0))]
fn train(
    py: Python<'_>,
    frame: &Frame,
    window: usize,
    dim: usize,
    lr: f64,
    max_epochs: usize,
    patience: usize,
    seed: u64,
) -> PyResult<(Model, f64, f64)> {
    let cfg = TrainConfig {
        window,
        per_var_dim: dim,
        learning_rate: lr,
        max_epochs,
        patience,
        seed,
        ..TrainConfig::default()
    };
    let result = py.detach(|| -> mvlstm::Result<_> {
        let ds = mvlstm::make_windows(&frame.inner, window, cfg.splits)?;
        let fit = mvlstm::fit(&ds, &cfg)?;
        let model = ModelFile::new(ds.names, ds.stats, fit.params)?;
        Ok((model, fit.test_rmse, fit.test_mae))
    });
    let (inner, rmse, mae) = result.map_err(to_py)?;
    Ok((Model { inner }, rmse, mae))
}

/// Pairwise Granger ranking: `(name, F, p_value, causal)` sorted by F.
#[pyfunction]
#[pyo3(signature = (frame, lag = 5, level = 0.05))]
fn granger(frame: &Frame, lag: usize, level: f64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let r = mvlstm::granger_rank(&frame.inner, lag, level).map_err(to_py)?;
    Ok(r.entries
        .into_iter()
        .map(|e| (e.name, e.test.f_stat, e.test.p_value, e.test.causal))
        .collect())
}

/// Max relative error between analytic and finite-difference gradients for
/// seeded random parameters of the given shape.
#[pyfunction]
#[pyo3(signature = (n_vars, per_var_dim, window, seed = 0))]
fn gradcheck(n_vars: usize, per_var_dim: usize, window: usize, seed: u64) -> PyResult<f64> {
    use rand::{Rng, SeedableRng};
    let shape = CellShape::new(n_vars, per_var_dim, window).map_err(to_py)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let params = MvLstmParams::random(shape, 0.5, &mut rng);
    let w = DenseMatrix::from_fn(window, n_vars, |_, _| rng.random_range(-1.5..1.5));
    let target = rng.random_range(-1.0..1.0);
    fd_check(&params, &w, target, mvlstm::grad::FD_EPSILON).map_err(to_py)
}

#[pymodule]
fn mvlstm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Frame>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(granger, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
