use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the dense kernels in [`crate::linalg`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op} requires a non-empty input")]
    Empty { op: &'static str },
    #[error("{op} expects {expected} operand(s)")]
    Arity { op: &'static str, expected: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced at step {step}")]
    NonFiniteStep { step: usize },

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("non-finite loss while perturbing {block}[{index}]")]
    NonFiniteProbe { block: &'static str, index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("column `{0}` is constant")]
    ConstantColumn(String),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("design matrix is rank deficient: column {column} is linearly dependent on earlier columns")]
    RankDeficient { column: usize },

    #[error("unstable autoregressive specification: {what} has a root of magnitude {magnitude:.6} (must be < 1)")]
    Unstable { what: String, magnitude: f64 },

    #[error("schema mismatch: model expects [{expected}], data has [{actual}]")]
    SchemaMismatch { expected: String, actual: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid model file: {0}")]
    ModelFormat(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error signals a broken internal invariant rather than
    /// bad user input or data.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Linalg(_) | Error::Shape(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
