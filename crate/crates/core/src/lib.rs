//! Multi-variable LSTM with variable-level attention for interpretable
//! multivariate forecasting, plus the statistical tooling used to check its
//! attention against Granger causality.

pub mod attention;
pub mod baseline;
pub mod cell;
pub mod error;
pub mod frame;
pub mod grad;
pub mod granger;
pub mod linalg;
pub mod model_io;
pub mod report;
pub mod synth;
pub mod train;

pub use attention::{attention_forward, rank_variables, AttentionOutput, Histogram, VariableAttention};
pub use baseline::{fit_linear_arx, persistence_forecast, LinearArxModel};
pub use cell::{
    cell_candidate, cell_gates, cell_step, infer, network_forward, predict, CellShape, ForwardPass, ForwardTape,
    HiddenTensor, MvLstmParams, ParamBlock,
};
pub use error::{Error, LinalgError, Result};
pub use frame::SeriesFrame;
pub use grad::{backward, fd_check, loss_and_grad, ParamGrads};
pub use granger::{granger_rank, granger_test, ols, GrangerRanking, GrangerTest};
pub use linalg::{DenseMatrix, DenseVector};
pub use model_io::ModelFile;
pub use report::InterpretReport;
pub use synth::{generate, ground_truth_rank, ArxSpec, ExoProcess, NonlinearTerm};
pub use train::{evaluate, fit, make_windows, FitResult, NormStats, SplitFractions, TrainConfig, WindowedDataset};
