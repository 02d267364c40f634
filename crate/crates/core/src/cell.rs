//! The multi-variable LSTM cell.
//!
//! The hidden state is an `N × d` tensor whose row `n` is driven by variable
//! `n` alone through the candidate update, while the input/forget/output gates
//! read the full input vector and the full flattened hidden state. The
//! unrolled forward pass records every intermediate on a [`ForwardTape`] so
//! that [`crate::grad::backward`] can replay it exactly.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::attention::{attention_forward, AttentionOutput};
use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid, DenseMatrix, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellShape {
    pub n_vars: usize,
    pub per_var_dim: usize,
    pub window: usize,
}

impl CellShape {
    pub fn new(n_vars: usize, per_var_dim: usize, window: usize) -> Result<Self> {
        if n_vars < 2 {
            return Err(Error::Config(format!(
                "at least two variables are required (one exogenous plus the target), got {n_vars}"
            )));
        }
        if per_var_dim == 0 || window == 0 {
            return Err(Error::Config(
                "per-variable hidden size and window length must be positive".into(),
            ));
        }
        Ok(Self {
            n_vars,
            per_var_dim,
            window,
        })
    }

    /// Size of the flattened hidden state, `N·d`.
    pub fn hidden_size(&self) -> usize {
        self.n_vars * self.per_var_dim
    }
}

/// Per-variable hidden representation `H_t`: `N` blocks of `d` values.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTensor {
    n_vars: usize,
    dim: usize,
    data: Vec<f64>,
}

impl HiddenTensor {
    pub fn zeros(n_vars: usize, dim: usize) -> Self {
        Self {
            n_vars,
            dim,
            data: vec![0.0; n_vars * dim],
        }
    }

    pub fn unflatten(flat: &DenseVector, n_vars: usize, dim: usize) -> Result<Self> {
        Self::from_flat(flat.as_slice().to_vec(), n_vars, dim)
    }

    pub(crate) fn from_flat(data: Vec<f64>, n_vars: usize, dim: usize) -> Result<Self> {
        if data.len() != n_vars * dim {
            return Err(Error::Shape(format!(
                "cannot view {} values as a {n_vars}x{dim} hidden tensor",
                data.len()
            )));
        }
        Ok(Self { n_vars, dim, data })
    }

    pub fn flatten(&self) -> DenseVector {
        DenseVector::from_vec(self.data.clone())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn block_mut(&mut self, n: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.data[n * d..(n + 1) * d]
    }
}

/// Names the nine parameter groups, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamBlock {
    InputToHidden,
    HiddenToHidden,
    CandidateBias,
    GateWeights,
    GateBias,
    AttentionWeights,
    AttentionBias,
    ReadoutWeights,
    ReadoutBias,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 9] = [
        ParamBlock::InputToHidden,
        ParamBlock::HiddenToHidden,
        ParamBlock::CandidateBias,
        ParamBlock::GateWeights,
        ParamBlock::GateBias,
        ParamBlock::AttentionWeights,
        ParamBlock::AttentionBias,
        ParamBlock::ReadoutWeights,
        ParamBlock::ReadoutBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamBlock::InputToHidden => "w_x",
            ParamBlock::HiddenToHidden => "w_h",
            ParamBlock::CandidateBias => "b_j",
            ParamBlock::GateWeights => "w_gates",
            ParamBlock::GateBias => "b_gates",
            ParamBlock::AttentionWeights => "w_e",
            ParamBlock::AttentionBias => "b_e",
            ParamBlock::ReadoutWeights => "w_out",
            ParamBlock::ReadoutBias => "b_out",
        }
    }
}

/// All trainable weights of the cell and the attention readout.
///
/// Per-variable groups are stored as stacked blocks:
/// * `w_x` is `N × d`, row `n` is `W_x^n`;
/// * `w_h` is `(N·d) × d`, rows `n·d .. (n+1)·d` hold `W_h^n`;
/// * `w_gates` is `3M × (N + M)` with row blocks `[i; f; o]` and columns
///   `[x_t, h_{t-1}]`;
/// * `w_out` is `N × d`, row `n` is the readout of variable `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MvLstmParams {
    pub shape: CellShape,
    pub w_x: DenseMatrix,
    pub w_h: DenseMatrix,
    pub b_j: DenseVector,
    pub w_gates: DenseMatrix,
    pub b_gates: DenseVector,
    pub w_e: DenseVector,
    pub b_e: f64,
    pub w_out: DenseMatrix,
    pub b_out: DenseVector,
}

impl MvLstmParams {
    pub fn zeros(shape: CellShape) -> Self {
        let n = shape.n_vars;
        let d = shape.per_var_dim;
        let m = shape.hidden_size();
        Self {
            shape,
            w_x: DenseMatrix::zeros(n, d),
            w_h: DenseMatrix::zeros(m, d),
            b_j: DenseVector::zeros(m),
            w_gates: DenseMatrix::zeros(3 * m, n + m),
            b_gates: DenseVector::zeros(3 * m),
            w_e: DenseVector::zeros(d),
            b_e: 0.0,
            w_out: DenseMatrix::zeros(n, d),
            b_out: DenseVector::zeros(n),
        }
    }

    /// Uniform fan-in initialisation with the forget-gate bias set to one.
    pub fn init<R: Rng + ?Sized>(shape: CellShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let n = shape.n_vars;
        let d = shape.per_var_dim;
        let m = shape.hidden_size();
        let fill = |xs: &mut [f64], bound: f64, rng: &mut R| {
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for x in xs {
                *x = dist.sample(rng);
            }
        };
        let cand = 1.0 / ((d + 1) as f64).sqrt();
        fill(p.w_x.as_mut_slice(), cand, rng);
        fill(p.w_h.as_mut_slice(), cand, rng);
        let gate = 1.0 / ((n + m) as f64).sqrt();
        fill(p.w_gates.as_mut_slice(), gate, rng);
        for b in &mut p.b_gates.as_mut_slice()[m..2 * m] {
            *b = 1.0;
        }
        let head = 1.0 / (d as f64).sqrt();
        fill(p.w_e.as_mut_slice(), head, rng);
        fill(p.w_out.as_mut_slice(), head, rng);
        p
    }

    /// Every parameter drawn uniformly from `[-scale, scale]`, biases included.
    pub fn random<R: Rng + ?Sized>(shape: CellShape, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let dist = Uniform::new_inclusive(-scale, scale).expect("finite scale");
        for block in ParamBlock::ALL {
            for x in p.block_mut(block) {
                *x = dist.sample(rng);
            }
        }
        p
    }

    pub fn block(&self, block: ParamBlock) -> &[f64] {
        match block {
            ParamBlock::InputToHidden => self.w_x.as_slice(),
            ParamBlock::HiddenToHidden => self.w_h.as_slice(),
            ParamBlock::CandidateBias => self.b_j.as_slice(),
            ParamBlock::GateWeights => self.w_gates.as_slice(),
            ParamBlock::GateBias => self.b_gates.as_slice(),
            ParamBlock::AttentionWeights => self.w_e.as_slice(),
            ParamBlock::AttentionBias => std::slice::from_ref(&self.b_e),
            ParamBlock::ReadoutWeights => self.w_out.as_slice(),
            ParamBlock::ReadoutBias => self.b_out.as_slice(),
        }
    }

    pub fn block_mut(&mut self, block: ParamBlock) -> &mut [f64] {
        match block {
            ParamBlock::InputToHidden => self.w_x.as_mut_slice(),
            ParamBlock::HiddenToHidden => self.w_h.as_mut_slice(),
            ParamBlock::CandidateBias => self.b_j.as_mut_slice(),
            ParamBlock::GateWeights => self.w_gates.as_mut_slice(),
            ParamBlock::GateBias => self.b_gates.as_mut_slice(),
            ParamBlock::AttentionWeights => self.w_e.as_mut_slice(),
            ParamBlock::AttentionBias => std::slice::from_mut(&mut self.b_e),
            ParamBlock::ReadoutWeights => self.w_out.as_mut_slice(),
            ParamBlock::ReadoutBias => self.b_out.as_mut_slice(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        ParamBlock::ALL.iter().map(|&b| self.block(b).len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        ParamBlock::ALL
            .iter()
            .all(|&b| self.block(b).iter().all(|x| x.is_finite()))
    }

    /// `W_h^n` as a row-major `d × d` slice.
    pub fn w_h_block(&self, n: usize) -> &[f64] {
        let d = self.shape.per_var_dim;
        &self.w_h.as_slice()[n * d * d..(n + 1) * d * d]
    }

    /// Checks that every stored dimension agrees with `self.shape`.
    pub fn validate(&self) -> Result<()> {
        let n = self.shape.n_vars;
        let d = self.shape.per_var_dim;
        let m = self.shape.hidden_size();
        let checks = [
            ("w_x", (self.w_x.rows(), self.w_x.cols()), (n, d)),
            ("w_h", (self.w_h.rows(), self.w_h.cols()), (m, d)),
            ("b_j", (self.b_j.len(), 1), (m, 1)),
            ("w_gates", (self.w_gates.rows(), self.w_gates.cols()), (3 * m, n + m)),
            ("b_gates", (self.b_gates.len(), 1), (3 * m, 1)),
            ("w_e", (self.w_e.len(), 1), (d, 1)),
            ("w_out", (self.w_out.rows(), self.w_out.cols()), (n, d)),
            ("b_out", (self.b_out.len(), 1), (n, 1)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Shape(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        Ok(())
    }
}

/// Input, forget and output gate activations for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub input: DenseVector,
    pub forget: DenseVector,
    pub output: DenseVector,
}

/// Intermediates of a single recurrent step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x: Vec<f64>,
    pub gates: Gates,
    pub candidate: HiddenTensor,
    pub cell: DenseVector,
    pub hidden: HiddenTensor,
}

/// Everything the backward pass needs, appended step by step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    shape: CellShape,
    steps: Vec<StepRecord>,
    attention: Option<AttentionOutput>,
}

impl ForwardTape {
    pub fn new(shape: CellShape) -> Self {
        Self {
            shape,
            steps: Vec::new(),
            attention: None,
        }
    }

    pub fn shape(&self) -> CellShape {
        self.shape
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn attention(&self) -> Option<&AttentionOutput> {
        self.attention.as_ref()
    }

    pub(crate) fn push(&mut self, step: StepRecord) {
        self.steps.push(step);
    }

    pub(crate) fn finish(&mut self, out: AttentionOutput) {
        self.attention = Some(out);
    }
}

/// Result of an unrolled forward pass over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub prediction: f64,
    pub alpha: DenseVector,
    pub tape: ForwardTape,
}

fn check_step_inputs(params: &MvLstmParams, h_prev: &HiddenTensor, x_t: &[f64]) -> Result<()> {
    let s = params.shape;
    if x_t.len() != s.n_vars {
        return Err(Error::Shape(format!(
            "input has {} variables, cell expects {}",
            x_t.len(),
            s.n_vars
        )));
    }
    if h_prev.n_vars != s.n_vars || h_prev.dim != s.per_var_dim {
        return Err(Error::Shape(format!(
            "hidden tensor is {}x{}, cell expects {}x{}",
            h_prev.n_vars, h_prev.dim, s.n_vars, s.per_var_dim
        )));
    }
    Ok(())
}

/// Variable-wise candidate update `j_t^n = tanh(W_h^n h_{t-1}^n + W_x^n x_{t,n} + b_j^n)`.
///
/// Block `n` of the result reads only block `n` of `h_prev`, entry `n` of
/// `x_t` and the `n`-th parameter blocks.
pub fn cell_candidate(params: &MvLstmParams, h_prev: &HiddenTensor, x_t: &[f64]) -> Result<HiddenTensor> {
    check_step_inputs(params, h_prev, x_t)?;
    let d = params.shape.per_var_dim;
    let mut out = HiddenTensor::zeros(params.shape.n_vars, d);
    for (n, &x) in x_t.iter().enumerate() {
        let w_h = params.w_h_block(n);
        let w_x = params.w_x.row(n);
        let b = &params.b_j.as_slice()[n * d..(n + 1) * d];
        let h = h_prev.block(n);
        for (k, o) in out.block_mut(n).iter_mut().enumerate() {
            let pre = dot(&w_h[k * d..(k + 1) * d], h) + w_x[k] * x + b[k];
            *o = pre.tanh();
        }
    }
    Ok(out)
}

/// Joint gates `σ(W [x_t, h_{t-1}] + b)`, split into `(i, f, o)`.
pub fn cell_gates(params: &MvLstmParams, h_prev_flat: &[f64], x_t: &[f64]) -> Result<Gates> {
    let s = params.shape;
    let m = s.hidden_size();
    if x_t.len() != s.n_vars || h_prev_flat.len() != m {
        return Err(Error::Shape(format!(
            "gate inputs have lengths ({}, {}), expected ({}, {m})",
            x_t.len(),
            h_prev_flat.len(),
            s.n_vars
        )));
    }
    let mut z = Vec::with_capacity(s.n_vars + m);
    z.extend_from_slice(x_t);
    z.extend_from_slice(h_prev_flat);
    let mut act = vec![0.0; 3 * m];
    params.w_gates.matvec_into(&z, &mut act)?;
    for (a, b) in act.iter_mut().zip(params.b_gates.iter()) {
        *a = sigmoid(*a + b);
    }
    let output = act.split_off(2 * m);
    let forget = act.split_off(m);
    Ok(Gates {
        input: act.into(),
        forget: forget.into(),
        output: output.into(),
    })
}

/// One recurrent step. Appends every intermediate to `tape` and returns
/// `(H_t, c_t)`.
pub fn cell_step(
    params: &MvLstmParams,
    h_prev: &HiddenTensor,
    c_prev: &DenseVector,
    x_t: &[f64],
    tape: &mut ForwardTape,
) -> Result<(HiddenTensor, DenseVector)> {
    let step = tape.steps.len() + 1;
    let (record, h, c) = step_core(params, h_prev, c_prev, x_t, step)?;
    tape.push(record);
    Ok((h, c))
}

fn step_core(
    params: &MvLstmParams,
    h_prev: &HiddenTensor,
    c_prev: &DenseVector,
    x_t: &[f64],
    step: usize,
) -> Result<(StepRecord, HiddenTensor, DenseVector)> {
    let m = params.shape.hidden_size();
    if c_prev.len() != m {
        return Err(Error::Shape(format!(
            "memory cell has length {}, expected {m}",
            c_prev.len()
        )));
    }
    let candidate = cell_candidate(params, h_prev, x_t)?;
    let gates = cell_gates(params, h_prev.as_flat(), x_t)?;
    let mut cell = vec![0.0; m];
    let mut hidden = vec![0.0; m];
    for k in 0..m {
        cell[k] = gates.forget[k] * c_prev[k] + gates.input[k] * candidate.as_flat()[k];
        hidden[k] = gates.output[k] * cell[k].tanh();
    }
    if cell.iter().chain(&hidden).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteStep { step });
    }
    let hidden = HiddenTensor::from_flat(hidden, params.shape.n_vars, params.shape.per_var_dim)?;
    let cell = DenseVector::from_vec(cell);
    let record = StepRecord {
        x: x_t.to_vec(),
        gates,
        candidate,
        cell: cell.clone(),
        hidden: hidden.clone(),
    };
    Ok((record, hidden, cell))
}

fn check_window(params: &MvLstmParams, window: &DenseMatrix) -> Result<()> {
    params.validate()?;
    if window.rows() == 0 {
        return Err(Error::Shape("window has no time steps".into()));
    }
    if window.cols() != params.shape.n_vars {
        return Err(Error::Shape(format!(
            "window has {} columns, model expects {}",
            window.cols(),
            params.shape.n_vars
        )));
    }
    Ok(())
}

/// Unrolls the cell over a `T × N` window (target in the last column) from
/// zero initial state and applies the attention readout.
pub fn network_forward(params: &MvLstmParams, window: &DenseMatrix) -> Result<ForwardPass> {
    check_window(params, window)?;
    let s = params.shape;
    let mut tape = ForwardTape::new(s);
    let mut h = HiddenTensor::zeros(s.n_vars, s.per_var_dim);
    let mut c = DenseVector::zeros(s.hidden_size());
    for t in 0..window.rows() {
        let (h_next, c_next) = cell_step(params, &h, &c, window.row(t), &mut tape)?;
        h = h_next;
        c = c_next;
    }
    let out = attention_forward(params, &h)?;
    let pass = ForwardPass {
        prediction: out.prediction,
        alpha: out.weights.clone(),
        tape: {
            tape.finish(out);
            tape
        },
    };
    Ok(pass)
}

/// Forward pass without recording a tape; returns the attention readout.
pub fn infer(params: &MvLstmParams, window: &DenseMatrix) -> Result<AttentionOutput> {
    check_window(params, window)?;
    let s = params.shape;
    let mut h = HiddenTensor::zeros(s.n_vars, s.per_var_dim);
    let mut c = DenseVector::zeros(s.hidden_size());
    for t in 0..window.rows() {
        let (_, h_next, c_next) = step_core(params, &h, &c, window.row(t), t + 1)?;
        h = h_next;
        c = c_next;
    }
    attention_forward(params, &h)
}

/// Prediction `ŷ_{T+1}` for one window.
pub fn predict(params: &MvLstmParams, window: &DenseMatrix) -> Result<f64> {
    Ok(infer(params, window)?.prediction)
}
