//! Minimal dense numerics: row-major f32 matrices, numerically stable row
//! softmax, and the masked scaled-dot-product attention kernel the rest of
//! the engine composes.
//!
//! Masking is implemented by excluding masked terms from the reduction
//! rather than adding -inf to the scores. The two formulations give the
//! same softmax weights, but term exclusion stays exact and cannot produce
//! NaN from (-inf) - (-inf) during max subtraction. Accumulation is 32-bit
//! with 64-bit accumulators in the softmax denominators.

use crate::count::OpCounter;
use crate::error::{EngineError, Result};

/// Dense row-major matrix of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    /// Build from row-major data. Errors if the length does not match or
    /// any entry is non-finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(EngineError::Shape(format!(
                "data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(EngineError::Numeric("non-finite entry in matrix".into()));
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

    /// Identity matrix of side `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of the first `n` rows.
    pub fn top_rows(&self, n: usize) -> Matrix {
        assert!(n <= self.rows, "top_rows past end");
        Matrix {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }

    /// Append the rows of `other` below this matrix.
    pub fn append_rows(&mut self, other: &Matrix) -> Result<()> {
        if self.rows > 0 && other.cols != self.cols {
            return Err(EngineError::Shape(format!(
                "append_rows: {} cols vs {}",
                other.cols, self.cols
            )));
        }
        if self.rows == 0 {
            self.cols = other.cols;
        }
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
        Ok(())
    }

    /// Stack `a` on top of `b`.
    pub fn vstack(a: &Matrix, b: &Matrix) -> Result<Matrix> {
        let mut out = a.clone();
        out.append_rows(b)?;
        Ok(out)
    }

    /// Drop all rows past the first `n`.
    pub fn truncate_rows(&mut self, n: usize) {
        assert!(n <= self.rows, "truncate_rows past end");
        self.data.truncate(n * self.cols);
        self.rows = n;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entrywise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f32 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Boolean attention mask: `true` means the (row, col) pair is attendable.
///
/// Indices here are 0-based storage indices; the chunk-mask construction in
/// [`crate::mask`] adapts from its 1-based frame arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl AttentionMask {
    /// Build from a predicate over 0-based (row, col). Errors if any row
    /// has no attendable column, which would make the softmax denominator
    /// empty.
    pub fn from_fn(rows: usize, cols: usize, pred: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut bits = vec![false; rows * cols];
        for r in 0..rows {
            let mut any = false;
            for c in 0..cols {
                let b = pred(r, c);
                bits[r * cols + c] = b;
                any |= b;
            }
            if !any {
                return Err(EngineError::Contract(format!(
                    "mask row {r} has no attendable column"
                )));
            }
        }
        Ok(Self { rows, cols, bits })
    }

    /// Fully attendable mask.
    pub fn all(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_attendable(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }
}

/// Standard matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    matmul_counted(a, b, &mut OpCounter::new())
}

/// Matrix product that reports `a.rows * a.cols * b.cols` MACs into the
/// projection bucket of `counter`.
pub fn matmul_counted(a: &Matrix, b: &Matrix, counter: &mut OpCounter) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(EngineError::Shape(format!(
            "matmul: {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0f32; m * n];
    // i-k-j order keeps the inner loop contiguous over b's rows so it
    // vectorizes.
    for i in 0..m {
        let a_row = a.row(i);
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            let b_row = &b.data[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ik * bv;
            }
        }
    }
    counter.add_projection((m * k * n) as u64);
    if !out.iter().all(|v| v.is_finite()) {
        return Err(EngineError::Numeric("matmul produced non-finite output".into()));
    }
    Ok(Matrix {
        rows: m,
        cols: n,
        data: out,
    })
}

/// Softmax applied independently to each row, with per-row max subtraction
/// so large scores cannot overflow. Denominators accumulate in f64.
pub fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows {
        let row = out.row_mut(r);
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut denom = 0.0f64;
    for v in row.iter_mut() {
        let e = (*v - max).exp();
        denom += f64::from(e);
        *v = e;
    }
    for v in row.iter_mut() {
        *v = (f64::from(*v) / denom) as f32;
    }
}

/// Log-softmax of a score vector; stable via max subtraction, denominator
/// accumulated in f64.
pub fn log_softmax(scores: &[f32]) -> Vec<f32> {
    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut denom = 0.0f64;
    for &v in scores {
        denom += f64::from((v - max).exp());
    }
    let log_denom = denom.ln() as f32;
    scores.iter().map(|&v| v - max - log_denom).collect()
}

/// Masked scaled-dot-product attention.
///
/// Row i of the output is the softmax over attendable keys j of
/// `q_i . k_j / sqrt(d)` weighting the value rows. Masked positions are
/// excluded from the reduction entirely, so they contribute exactly zero
/// weight and their data cannot leak into the output.
pub fn masked_attention(q: &Matrix, k: &Matrix, v: &Matrix, mask: &AttentionMask) -> Result<Matrix> {
    masked_attention_counted(q, k, v, mask, &mut OpCounter::new())
}

/// [`masked_attention`] with MAC accounting: d MACs per attendable pair in
/// each of the dot-product and value-weighting buckets.
pub fn masked_attention_counted(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    mask: &AttentionMask,
    counter: &mut OpCounter,
) -> Result<Matrix> {
    if q.cols != k.cols {
        return Err(EngineError::Shape(format!(
            "attention: q cols {} != k cols {}",
            q.cols, k.cols
        )));
    }
    if k.rows != v.rows {
        return Err(EngineError::Shape(format!(
            "attention: k rows {} != v rows {}",
            k.rows, v.rows
        )));
    }
    if mask.rows() != q.rows || mask.cols() != k.rows {
        return Err(EngineError::Shape(format!(
            "attention: mask {}x{} vs q rows {} and k rows {}",
            mask.rows(),
            mask.cols(),
            q.rows,
            k.rows
        )));
    }
    let d = q.cols;
    let scale = 1.0 / (d as f32).sqrt();
    let mut out = Matrix::zeros(q.rows, v.cols);
    let mut scores: Vec<f32> = Vec::with_capacity(k.rows);
    let mut keys: Vec<usize> = Vec::with_capacity(k.rows);
    let mut pair_count = 0u64;
    for i in 0..q.rows {
        scores.clear();
        keys.clear();
        let q_row = q.row(i);
        for (j, &attendable) in mask.row(i).iter().enumerate() {
            if attendable {
                scores.push(dot(q_row, k.row(j)) * scale);
                keys.push(j);
            }
        }
        if keys.is_empty() {
            return Err(EngineError::Contract(format!(
                "attention row {i} is fully masked"
            )));
        }
        pair_count += keys.len() as u64;
        softmax_in_place(&mut scores);
        let out_row = out.row_mut(i);
        for (&w, &j) in scores.iter().zip(&keys) {
            axpy(w, v.row(j), out_row);
        }
    }
    counter.add_dot_product(pair_count * d as u64);
    counter.add_value_weighting(pair_count * v.cols as u64);
    Ok(out)
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += alpha * x`, elementwise.
#[inline]
pub(crate) fn axpy(alpha: f32, x: &[f32], out: &mut [f32]) {
    debug_assert_eq!(x.len(), out.len());
    for (o, &v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}
