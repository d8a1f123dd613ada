//! Dense row-major linear algebra and the output nonlinearities.
//!
//! Everything is `f64` and every reduction runs left to right, so two runs
//! over the same inputs produce bit-identical results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plain dense vector. Kept as a `Vec` so it interoperates with slices.
pub type Vector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("Matrix::new", rows * cols, data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "matrix entry {i} is not finite ({})",
                data[i]
            )));
        }
        Ok(Self { rows, cols, data })
    }

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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::dim("Matrix::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Checked matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.cols {
            return Err(Error::dim("matvec", self.cols, v.len()));
        }
        let mut out = vec![0.0; self.rows];
        self.mul_acc(v, &mut out);
        Ok(out)
    }

    /// `out += self · v`.
    #[inline]
    pub(crate) fn mul_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, v);
        }
    }

    /// `out += self · v`, skipping zero entries of `v`. Same result as
    /// [`Matrix::mul_acc`] for one-hot and binary inputs, at a fraction of
    /// the cost.
    #[inline]
    pub(crate) fn mul_acc_sparse(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.data[r * self.cols + j] * vj;
            }
        }
    }

    /// `out += selfᵀ · v`.
    #[inline]
    pub(crate) fn mul_t_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&vr, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if vr == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(row) {
                *o += m * vr;
            }
        }
    }

    /// `out = a · selfᵀ` for `a` holding `m` row vectors of length
    /// `self.cols()`; `out` holds `m` rows of length `self.rows()`.
    pub(crate) fn rows_times_t(&self, a: &[f64], m: usize, out: &mut [f64]) {
        let (n, k) = (self.rows, self.cols);
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(out.len(), m * n);
        // SAFETY: the slices cover the strided extents passed to dgemm.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                self.data.as_ptr(),
                1,
                k as isize,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    /// `self += a · bᵀ`; zero entries of `b` are skipped.
    #[inline]
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (&ar, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ar == 0.0 {
                continue;
            }
            for (m, &bc) in row.iter_mut().zip(b) {
                *m += ar * bc;
            }
        }
    }
}

/// Dot product with four interleaved partial sums (fixed order, so still
/// deterministic) to let the compiler vectorize.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail = ra.iter().zip(rb).fold(0.0, |s, (x, y)| s + x * y);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vector> {
    m.matvec(v)
}

/// Softmax with max subtraction.
pub fn softmax(v: &[f64]) -> Vector {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise logistic function.
pub fn sigmoid(v: &[f64]) -> Vector {
    v.iter().map(|&x| logistic(x)).collect()
}

pub(crate) fn sigmoid_in_place(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = logistic(*x);
    }
}

/// Overflow-safe `log Σ exp(v_i)`.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::invalid("log_sum_exp of an empty vector"));
    }
    Ok(log_sum_exp_nonempty(v))
}

pub(crate) fn log_sum_exp_nonempty(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum = v.iter().fold(0.0, |acc, &x| acc + (x - max).exp());
    max + sum.ln()
}

/// `-log(mean(exp(log_likes)))`, the aggregation used for chain and
/// permutation likelihoods. Returns `+∞` when every likelihood is zero.
pub fn neg_log_mean_exp(log_likes: &[f64]) -> f64 {
    if log_likes.is_empty() {
        return f64::INFINITY;
    }
    -(log_sum_exp_nonempty(log_likes) - (log_likes.len() as f64).ln())
}

#[inline]
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
