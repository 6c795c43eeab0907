//! Dense f64 tensors and the matrix product they are built around.

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(&[rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension (1 for scalars and vectors are treated as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Product of all trailing dimensions.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Contiguous block of rows `start..end`.
    pub fn rows_slice(&self, start: usize, end: usize) -> &[f64] {
        let c = self.cols();
        &self.data[start * c..end * c]
    }

    pub fn rows_slice_mut(&mut self, start: usize, end: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[start * c..end * c]
    }

    pub fn view(&self) -> MatRef<'_> {
        MatRef::new(&self.data, self.rows(), self.cols())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Gathers rows by index into a new `[idx.len(), cols]` matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor { shape: vec![idx.len(), c], data }
    }

    /// Adds row `r` of `src` into row `idx[r]` of `self`.
    pub fn scatter_add_rows(&mut self, idx: &[usize], src: &Tensor) {
        let c = self.cols();
        debug_assert_eq!(c, src.cols());
        for (r, &i) in idx.iter().enumerate() {
            let dst = &mut self.data[i * c..(i + 1) * c];
            for (d, s) in dst.iter_mut().zip(src.row(r)) {
                *d += s;
            }
        }
    }

    /// Sum over rows, producing a vector of length `cols`.
    pub fn column_sums(&self) -> Vec<f64> {
        let c = self.cols();
        let mut out = vec![0.0; c];
        for row in self.data.chunks_exact(c.max(1)) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    /// `[self | other]` along columns; both must have the same row count.
    pub fn hconcat(&self, other: &Tensor) -> Tensor {
        let (r, a, b) = (self.rows(), self.cols(), other.cols());
        debug_assert_eq!(r, other.rows());
        let mut data = Vec::with_capacity(r * (a + b));
        for i in 0..r {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Tensor { shape: vec![r, a + b], data }
    }

    /// Splits columns `[0, at)` and `[at, cols)` into two matrices.
    pub fn hsplit(&self, at: usize) -> (Tensor, Tensor) {
        let (r, c) = (self.rows(), self.cols());
        let mut left = Vec::with_capacity(r * at);
        let mut right = Vec::with_capacity(r * (c - at));
        for i in 0..r {
            let row = self.row(i);
            left.extend_from_slice(&row[..at]);
            right.extend_from_slice(&row[at..]);
        }
        (Tensor { shape: vec![r, at], data: left }, Tensor { shape: vec![r, c - at], data: right })
    }
}

/// Strided read-only matrix view.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    row_stride: usize,
    col_stride: usize,
}

impl<'a> MatRef<'a> {
    /// Row-major contiguous view.
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert!(data.len() >= rows * cols);
        Self { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Transposed view (no copy).
    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    /// Columns `start..start + len`.
    pub fn cols_range(self, start: usize, len: usize) -> Self {
        debug_assert!(start + len <= self.cols);
        let offset = start * self.col_stride;
        Self { data: &self.data[offset.min(self.data.len())..], cols: len, ..self }
    }

    /// Rows `start..start + len`.
    pub fn rows_range(self, start: usize, len: usize) -> Self {
        debug_assert!(start + len <= self.rows);
        let offset = start * self.row_stride;
        Self { data: &self.data[offset.min(self.data.len())..], rows: len, ..self }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.row_stride + j * self.col_stride]
    }
}

/// Rows of C handled per task by the parallel product.
const GEMM_ROW_BLOCK: usize = 64;

/// `c = alpha * a * b + beta * c` with `c` row-major `[a.rows, b.cols]`.
///
/// Output rows are computed in fixed blocks; each element's reduction order
/// does not depend on how blocks are scheduled, so sequential and parallel
/// builds agree bit for bit.
pub fn gemm(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "inner dimensions differ");
    assert_eq!(c.len(), m * n, "output has wrong size");
    if m == 0 || n == 0 {
        return;
    }
    let block = |bi: usize, chunk: &mut [f64]| {
        let rows = chunk.len() / n;
        let sub = a.rows_range(bi * GEMM_ROW_BLOCK, rows);
        gemm_block(alpha, sub, b, beta, chunk);
    };
    if m * n * k >= 1 << 18 && m > GEMM_ROW_BLOCK {
        par::for_each_chunk_mut(c, GEMM_ROW_BLOCK * n, block);
    } else {
        par::sequential::for_each_chunk_mut(c, GEMM_ROW_BLOCK * n, block);
    }
}

/// Same as [`gemm`] but never dispatches to the thread pool.
pub fn gemm_sequential(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "inner dimensions differ");
    assert_eq!(c.len(), m * n, "output has wrong size");
    if m == 0 || n == 0 {
        return;
    }
    par::sequential::for_each_chunk_mut(c, GEMM_ROW_BLOCK * n, |bi, chunk| {
        let rows = chunk.len() / n;
        gemm_block(alpha, a.rows_range(bi * GEMM_ROW_BLOCK, rows), b, beta, chunk);
    });
}

fn gemm_block(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if k == 0 {
        if beta == 0.0 {
            c.iter_mut().for_each(|x| *x = 0.0);
        } else {
            c.iter_mut().for_each(|x| *x *= beta);
        }
        return;
    }
    // Bounds: the furthest element touched in each operand.
    let a_end = (m - 1) * a.row_stride + (k - 1) * a.col_stride;
    let b_end = (k - 1) * b.row_stride + (n - 1) * b.col_stride;
    assert!(a_end < a.data.len() && b_end < b.data.len(), "view out of bounds");
    // SAFETY: every index dgemm reads is bounded by a_end / b_end (checked
    // above) and it writes exactly the m*n row-major elements of `c`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `a * b` into a fresh `[a.rows, b.cols]` tensor.
pub fn matmul(a: MatRef<'_>, b: MatRef<'_>) -> Tensor {
    let mut out = Tensor::zeros(&[a.rows(), b.cols()]);
    gemm(1.0, a, b, 0.0, out.data_mut());
    out
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log Σ exp(xs)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
