//! Reverse pass through the attention head and the unrolled cell, and a
//! central-difference checker that relies only on the tape-free forward.

use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cell::{infer, CellShape, MvLstmParams, ParamBlock};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const FD_EPSILON: f64 = 1e-5;

/// `∂L/∂θ` laid out exactly like [`MvLstmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads(MvLstmParams);

impl ParamGrads {
    pub fn zeros_like(params: &MvLstmParams) -> Self {
        Self(MvLstmParams::zeros(params.shape))
    }

    pub fn into_inner(self) -> MvLstmParams {
        self.0
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for b in ParamBlock::ALL {
            for (x, y) in self.0.block_mut(b).iter_mut().zip(other.0.block(b)) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in ParamBlock::ALL {
            for x in self.0.block_mut(b) {
                *x *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        ParamBlock::ALL
            .iter()
            .flat_map(|&b| self.0.block(b).iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

impl Deref for ParamGrads {
    type Target = MvLstmParams;
    fn deref(&self) -> &MvLstmParams {
        &self.0
    }
}

impl DerefMut for ParamGrads {
    fn deref_mut(&mut self) -> &mut MvLstmParams {
        &mut self.0
    }
}

/// Squared-error loss `(ŷ − target)²` and its exact gradient with respect to
/// every parameter, accumulated over all steps of the tape in reverse order.
pub fn backward(params: &MvLstmParams, tape: &crate::cell::ForwardTape, target: f64) -> Result<(f64, ParamGrads)> {
    params.validate()?;
    if tape.shape().n_vars != params.shape.n_vars || tape.shape().per_var_dim != params.shape.per_var_dim {
        return Err(Error::Shape(format!(
            "tape recorded for {:?}, params have {:?}",
            tape.shape(),
            params.shape
        )));
    }
    let att = tape
        .attention()
        .ok_or_else(|| Error::Shape("tape has no attention record; run network_forward first".into()))?;
    let steps = tape.steps();
    let last = steps
        .last()
        .ok_or_else(|| Error::Shape("tape has no recorded steps".into()))?;

    let n = params.shape.n_vars;
    let d = params.shape.per_var_dim;
    let m = params.shape.hidden_size();
    let mut g = ParamGrads::zeros_like(params);

    let residual = att.prediction - target;
    let loss = residual * residual;
    let dy = 2.0 * residual;

    // Attention head.
    let mut dh = vec![0.0; m];
    for k in 0..n {
        let alpha = att.weights[k];
        let pred = att.per_var_pred[k];
        let e = att.logits[k];
        let h = last.hidden.block(k);
        let dpred = dy * alpha;
        // softmax Jacobian: ∂ŷ/∂e_k = α_k (p_k − ŷ)
        let dlogit = dy * alpha * (pred - att.prediction);
        let dpre = dlogit * (1.0 - e * e);
        g.b_out[k] += dpred;
        g.b_e += dpre;
        for (r, &hv) in h.iter().enumerate() {
            g.w_out[(k, r)] += dpred * hv;
            g.w_e[r] += dpre * hv;
        }
        let dh_k = &mut dh[k * d..(k + 1) * d];
        for r in 0..d {
            dh_k[r] = dpred * params.w_out[(k, r)] + dpre * params.w_e[r];
        }
    }

    // Unrolled recurrence, newest step first.
    let zeros = vec![0.0; m];
    let mut dc = vec![0.0; m];
    let mut da = vec![0.0; 3 * m];
    let mut du = vec![0.0; m];
    let mut concat = vec![0.0; n + m];
    let mut dconcat = vec![0.0; n + m];
    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let (h_prev, c_prev) = if t == 0 {
            (zeros.as_slice(), zeros.as_slice())
        } else {
            (steps[t - 1].hidden.as_flat(), steps[t - 1].cell.as_slice())
        };
        let gi = s.gates.input.as_slice();
        let gf = s.gates.forget.as_slice();
        let go = s.gates.output.as_slice();
        let j = s.candidate.as_flat();
        for k in 0..m {
            let tc = s.cell[k].tanh();
            let d_out = dh[k] * tc;
            dc[k] += dh[k] * go[k] * (1.0 - tc * tc);
            let d_in = dc[k] * j[k];
            let d_forget = dc[k] * c_prev[k];
            du[k] = dc[k] * gi[k] * (1.0 - j[k] * j[k]);
            da[k] = d_in * gi[k] * (1.0 - gi[k]);
            da[m + k] = d_forget * gf[k] * (1.0 - gf[k]);
            da[2 * m + k] = d_out * go[k] * (1.0 - go[k]);
            dc[k] *= gf[k];
        }

        // Gate path: pre-activation W [x; h_prev] + b.
        concat[..n].copy_from_slice(&s.x);
        concat[n..].copy_from_slice(h_prev);
        g.w_gates.add_outer(&da, &concat)?;
        for (b, a) in g.b_gates.as_mut_slice().iter_mut().zip(&da) {
            *b += a;
        }
        dconcat.fill(0.0);
        params.w_gates.matvec_transposed_acc(&da, &mut dconcat)?;
        dh.copy_from_slice(&dconcat[n..]);

        // Candidate path, one variable block at a time.
        for v in 0..n {
            let x = s.x[v];
            let hv = &h_prev[v * d..(v + 1) * d];
            let duv = &du[v * d..(v + 1) * d];
            let w_h = params.w_h_block(v);
            for r in 0..d {
                g.w_x[(v, r)] += duv[r] * x;
                g.b_j[v * d + r] += duv[r];
                let row = v * d + r;
                for c in 0..d {
                    g.w_h[(row, c)] += duv[r] * hv[c];
                }
            }
            let dh_v = &mut dh[v * d..(v + 1) * d];
            for c in 0..d {
                let mut acc = 0.0;
                for r in 0..d {
                    acc += w_h[r * d + c] * duv[r];
                }
                dh_v[c] += acc;
            }
        }
    }

    if !g.is_finite() {
        return Err(Error::NonFiniteStep { step: steps.len() });
    }
    Ok((loss, g))
}

/// Loss and gradient for one `(window, target)` pair.
pub fn loss_and_grad(params: &MvLstmParams, window: &DenseMatrix, target: f64) -> Result<(f64, ParamGrads)> {
    let pass = crate::cell::network_forward(params, window)?;
    backward(params, &pass.tape, target)
}

/// Largest relative discrepancy between analytic and central-difference
/// gradients, `|a − n| / max(1, |a|, |n|)`, over every scalar parameter.
pub fn fd_check(params: &MvLstmParams, window: &DenseMatrix, target: f64, epsilon: f64) -> Result<f64> {
    let (_, grads) = loss_and_grad(params, window, target)?;
    fd_compare(params, window, target, &grads, epsilon)
}

/// Compares a supplied gradient against central differences of the
/// tape-free loss.
pub fn fd_compare(
    params: &MvLstmParams,
    window: &DenseMatrix,
    target: f64,
    grads: &ParamGrads,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {epsilon}")));
    }
    if grads.shape != params.shape {
        return Err(Error::Shape("gradient and parameter shapes differ".into()));
    }
    let loss_at = |p: &MvLstmParams, block: ParamBlock, index: usize| -> Result<f64> {
        let pred = infer(p, window)
            .map_err(|_| Error::NonFiniteProbe {
                block: block.name(),
                index,
            })?
            .prediction;
        let l = (pred - target).powi(2);
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::NonFiniteProbe {
                block: block.name(),
                index,
            })
        }
    };
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for block in ParamBlock::ALL {
        for index in 0..params.block(block).len() {
            let orig = params.block(block)[index];
            probe.block_mut(block)[index] = orig + epsilon;
            let up = loss_at(&probe, block, index)?;
            probe.block_mut(block)[index] = orig - epsilon;
            let down = loss_at(&probe, block, index)?;
            probe.block_mut(block)[index] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let analytic = grads.block(block)[index];
            let denom = 1f64.max(analytic.abs()).max(numeric.abs());
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

pub const SUITE_VARS: [usize; 3] = [2, 3, 5];
pub const SUITE_DIMS: [usize; 3] = [1, 2, 4];
pub const SUITE_WINDOWS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckCase {
    pub n_vars: usize,
    pub per_var_dim: usize,
    pub window: usize,
    pub max_rel_err: f64,
}

/// Finite-difference check over every `(N, d, T)` in the suite grid, with
/// parameters drawn at scale 0.5, inputs in ±1.5 and a target in ±1.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckCase>> {
    let mut cases = Vec::with_capacity(27);
    for (k, (n, d, t)) in SUITE_VARS
        .iter()
        .flat_map(|&n| SUITE_DIMS.iter().flat_map(move |&d| SUITE_WINDOWS.iter().map(move |&t| (n, d, t))))
        .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let params = MvLstmParams::random(CellShape::new(n, d, t)?, 0.5, &mut rng);
        let window = DenseMatrix::from_fn(t, n, |_, _| rng.random_range(-1.5..1.5));
        let target = rng.random_range(-1.0..1.0);
        cases.push(GradCheckCase {
            n_vars: n,
            per_var_dim: d,
            window: t,
            max_rel_err: fd_check(&params, &window, target, FD_EPSILON)?,
        });
    }
    Ok(cases)
}

/// Gradient of the mean loss over a batch. Per-instance results are summed
/// in the given order, so the result does not depend on how they were
/// computed.
pub fn mean_grads(params: &MvLstmParams, parts: Vec<(f64, ParamGrads)>) -> (f64, ParamGrads) {
    let count = parts.len().max(1) as f64;
    let mut total = ParamGrads::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g);
    }
    total.scale(1.0 / count);
    (loss / count, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::network_forward;

    fn random_case(n: usize, d: usize, t: usize, seed: u64) -> (MvLstmParams, DenseMatrix, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = MvLstmParams::random(CellShape::new(n, d, t).unwrap(), 0.5, &mut rng);
        let w = DenseMatrix::from_fn(t, n, |_, _| rng.random_range(-1.5..1.5));
        let y = rng.random_range(-1.0..1.0);
        (p, w, y)
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let (p, w, _) = random_case(3, 2, 4, 1);
        let pass = network_forward(&p, &w).unwrap();
        let (loss, g) = backward(&p, &pass.tape, pass.prediction).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn hand_sized_case_matches_finite_differences() {
        let mut p = MvLstmParams::zeros(CellShape::new(2, 1, 1).unwrap());
        p.w_x.as_mut_slice().copy_from_slice(&[0.7, -0.4]);
        p.w_h.as_mut_slice().copy_from_slice(&[0.3, 0.2]);
        p.b_j.as_mut_slice().copy_from_slice(&[0.1, -0.1]);
        for (k, w) in p.w_gates.as_mut_slice().iter_mut().enumerate() {
            *w = 0.1 * ((k % 5) as f64 - 2.0);
        }
        p.b_gates.as_mut_slice().copy_from_slice(&[0.2, -0.1, 0.5, 0.3, 0.0, -0.2]);
        p.w_e[0] = 0.9;
        p.b_e = -0.1;
        p.w_out.as_mut_slice().copy_from_slice(&[1.2, -0.8]);
        p.b_out.as_mut_slice().copy_from_slice(&[0.05, 0.3]);
        let w = DenseMatrix::from_rows(&[vec![0.6, -1.1]]).unwrap();
        let err = fd_check(&p, &w, 0.4, FD_EPSILON).unwrap();
        assert!(err <= 1e-6, "max relative error {err}");
    }

    #[test]
    fn seed_42_case_matches_finite_differences() {
        let (p, w, y) = random_case(3, 2, 10, 42);
        let err = fd_check(&p, &w, y, FD_EPSILON).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn flat_point_check() {
        let p = MvLstmParams::zeros(CellShape::new(3, 2, 5).unwrap());
        let w = DenseMatrix::from_fn(5, 3, |r, c| (r as f64 - c as f64) * 0.3);
        let err = fd_check(&p, &w, 0.7, FD_EPSILON).unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn checker_detects_corrupted_gradient() {
        let (p, w, y) = random_case(2, 2, 5, 7);
        let (_, mut g) = loss_and_grad(&p, &w, y).unwrap();
        g.w_gates[(3, 1)] += 1e-2;
        let err = fd_compare(&p, &w, y, &g, FD_EPSILON).unwrap();
        assert!(err > 1e-3, "{err}");
    }

    #[test]
    fn rejects_non_positive_epsilon() {
        let (p, w, y) = random_case(2, 1, 2, 3);
        assert!(matches!(fd_check(&p, &w, y, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_mismatched_tape() {
        let (p, w, y) = random_case(3, 2, 3, 4);
        let pass = network_forward(&p, &w).unwrap();
        let other = MvLstmParams::zeros(CellShape::new(3, 3, 3).unwrap());
        assert!(matches!(backward(&other, &pass.tape, y), Err(Error::Shape(_))));
    }

    #[test]
    fn exogenous_input_weights_receive_gate_gradient() {
        // Variable 0 has no readout and no attention; it still reaches the
        // loss through the shared gates.
        let (mut p, w, y) = random_case(3, 2, 4, 17);
        p.w_e.as_mut_slice().fill(0.0);
        p.b_e = 0.0;
        p.w_out.row_mut(0).fill(0.0);
        p.b_out[0] = 0.0;
        let (_, g) = loss_and_grad(&p, &w, y).unwrap();
        assert!(g.w_x.row(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn backward_is_deterministic() {
        let (p, w, y) = random_case(4, 3, 6, 8);
        let pass = network_forward(&p, &w).unwrap();
        let a = backward(&p, &pass.tape, y).unwrap();
        let b = backward(&p, &pass.tape, y).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_grads_averages() {
        let (p, w, y) = random_case(2, 1, 3, 5);
        let one = loss_and_grad(&p, &w, y).unwrap();
        let (loss, g) = mean_grads(&p, vec![one.clone(), one.clone()]);
        assert_eq!(loss, one.0);
        assert!((g.global_norm() - one.1.global_norm()).abs() < 1e-12);
    }

    #[test]
    fn suite_covers_grid() {
        let cases = gradient_suite(3).unwrap();
        assert_eq!(cases.len(), 27);
        assert!(cases.iter().all(|c| c.max_rel_err <= 1e-4), "{cases:?}");
    }
}
