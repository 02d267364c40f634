//! Small dense kernels over row-major `f64` storage.
//!
//! Everything the recurrent cell, the attention head and the least-squares
//! solver need lives here: vectors, matrices, matrix-vector products,
//! entrywise activations and a stable softmax.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::LinalgError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64, LinalgError> {
        check_len("dot", self.len(), other.len())?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        check_len("from_row_major", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len("from_rows", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// `self · v` into a caller-provided buffer.
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
        check_len("matvec", self.cols, v.len())?;
        check_len("matvec output", self.rows, out.len())?;
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, v);
        }
        if self.cols == 0 {
            out.fill(0.0);
        }
        Ok(())
    }

    /// `selfᵀ · v`, accumulated into `out`.
    pub fn matvec_transposed_acc(&self, v: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
        check_len("matvec_transposed", self.rows, v.len())?;
        check_len("matvec_transposed output", self.cols, out.len())?;
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(r)) {
                *o += m * vr;
            }
        }
        Ok(())
    }

    /// Rank-one update `self += a · bᵀ`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) -> Result<(), LinalgError> {
        check_len("add_outer rows", self.rows, a.len())?;
        check_len("add_outer cols", self.cols, b.len())?;
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            for (m, &bc) in self.row_mut(r).iter_mut().zip(b) {
                *m += ar * bc;
            }
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn matvec(m: &DenseMatrix, v: &DenseVector) -> Result<DenseVector, LinalgError> {
    let mut out = vec![0.0; m.rows()];
    m.matvec_into(v.as_slice(), &mut out)?;
    Ok(DenseVector::from_vec(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Tanh,
    Sigmoid,
    Mul,
    Add,
}

impl Elementwise {
    fn is_binary(self) -> bool {
        matches!(self, Elementwise::Mul | Elementwise::Add)
    }
}

pub fn elementwise(
    op: Elementwise,
    a: &DenseVector,
    b: Option<&DenseVector>,
) -> Result<DenseVector, LinalgError> {
    let name = match op {
        Elementwise::Tanh => "tanh",
        Elementwise::Sigmoid => "sigmoid",
        Elementwise::Mul => "mul",
        Elementwise::Add => "add",
    };
    let data = match (op.is_binary(), b) {
        (false, None) => {
            let f: fn(f64) -> f64 = if op == Elementwise::Tanh { f64::tanh } else { sigmoid };
            a.iter().map(|&x| f(x)).collect()
        }
        (true, Some(b)) => {
            check_len(name, a.len(), b.len())?;
            let f: fn(f64, f64) -> f64 = if op == Elementwise::Mul {
                |x, y| x * y
            } else {
                |x, y| x + y
            };
            a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect()
        }
        (binary, _) => {
            return Err(LinalgError::Arity {
                op: name,
                expected: if binary { 2 } else { 1 },
            })
        }
    };
    Ok(DenseVector::from_vec(data))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    // Branching keeps exp() from overflowing for large |x|.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &DenseVector) -> Result<DenseVector, LinalgError> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits.as_slice(), &mut out)?;
    Ok(DenseVector::from_vec(out))
}

pub fn softmax_into(logits: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
    if logits.is_empty() {
        return Err(LinalgError::Empty { op: "softmax" });
    }
    check_len("softmax output", logits.len(), out.len())?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(op: &'static str, expected: usize, actual: usize) -> Result<(), LinalgError> {
    if expected == actual {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch {
            op,
            expected,
            actual,
        })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn v(data: &[f64]) -> DenseVector {
        DenseVector::from_vec(data.to_vec())
    }

    #[test]
    fn matvec_small_cases() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&m, &v(&[1.0, 1.0])).unwrap(), v(&[3.0, 7.0]));
        let id = DenseMatrix::identity(3);
        assert_eq!(matvec(&id, &v(&[5.0, -2.0, 0.0])).unwrap(), v(&[5.0, -2.0, 0.0]));
    }

    #[test]
    fn matvec_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = DenseMatrix::from_fn(4, 3, |_, _| rng.random_range(-2.0..2.0));
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = matvec(&m, &v(&x)).unwrap();
            for r in 0..4 {
                let mut acc = 0.0;
                for c in 0..3 {
                    acc += m.as_slice()[r * 3 + c] * x[c];
                }
                assert!((got[r] - acc).abs() <= 1e-12 * acc.abs().max(1.0));
            }
        }
    }

    #[test]
    fn matvec_rejects_mismatch() {
        let m = DenseMatrix::zeros(2, 3);
        let err = matvec(&m, &v(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, LinalgError::DimensionMismatch { expected: 3, actual: 2, .. }));
        assert!(err.to_string().contains("matvec"));
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(elementwise(Elementwise::Tanh, &v(&[0.0, 0.0]), None).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(elementwise(Elementwise::Sigmoid, &v(&[0.0]), None).unwrap(), v(&[0.5]));
        assert_eq!(
            elementwise(Elementwise::Mul, &v(&[1.0, 2.0]), Some(&v(&[3.0, 4.0]))).unwrap(),
            v(&[3.0, 8.0])
        );
        assert_eq!(
            elementwise(Elementwise::Add, &v(&[1.0, 2.0]), Some(&v(&[3.0, 4.0]))).unwrap(),
            v(&[4.0, 6.0])
        );
        assert!(elementwise(Elementwise::Mul, &v(&[1.0]), Some(&v(&[1.0, 2.0]))).is_err());
        assert!(elementwise(Elementwise::Add, &v(&[1.0]), None).is_err());
        assert!(elementwise(Elementwise::Tanh, &v(&[1.0]), Some(&v(&[1.0]))).is_err());
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&v(&[0.0; 4])).unwrap();
        assert!(u.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let c = 17.3;
        let s = softmax(&v(&[c, c + 3f64.ln()])).unwrap();
        assert!((s[0] - 0.25).abs() < 1e-12 && (s[1] - 0.75).abs() < 1e-12);
        let big = softmax(&v(&[1000.0, 1000.0])).unwrap();
        assert_eq!(big, v(&[0.5, 0.5]));
        assert_eq!(softmax(&v(&[])).unwrap_err(), LinalgError::Empty { op: "softmax" });
    }

    #[test]
    fn transposed_product_and_outer() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let mut out = vec![0.0; 3];
        m.matvec_transposed_acc(&[1.0, -1.0], &mut out).unwrap();
        assert_eq!(out, vec![-3.0, -3.0, -3.0]);
        let mut z = DenseMatrix::zeros(2, 2);
        z.add_outer(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(z.as_slice(), &[3.0, 4.0, 6.0, 8.0]);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            logits in prop::collection::vec(-50.0f64..50.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let a = softmax(&v(&logits)).unwrap();
            prop_assert!((a.sum() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let b = softmax(&v(&shifted)).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn sigmoid_is_antisymmetric(x in -1e3f64..1e3) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 1e-12);
        }
    }
}
