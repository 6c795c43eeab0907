//! Embedding and dense layers, softmax and cross-entropy.

use rand::Rng;

use super::init::{glorot_uniform, uniform, EMBEDDING_INIT_RANGE};
use super::tensor::{gemm, matmul, MatRef, Tensor};
use super::Parameterized;
use crate::error::{Error, Result};

/// Lookup table from token id to a dense row.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: Tensor,
}

impl Embedding {
    pub fn new<R: Rng>(rng: &mut R, vocab_size: usize, dim: usize) -> Self {
        Self {
            table: uniform(rng, &[vocab_size, dim], -EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE),
        }
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self { table: Tensor::zeros(&[vocab_size, dim]) }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    fn check(&self, ids: &[usize]) -> Result<()> {
        let size = self.vocab_size();
        match ids.iter().find(|&&id| id >= size) {
            Some(&id) => Err(Error::IdOutOfRange { id, size }),
            None => Ok(()),
        }
    }

    /// Rows for a flat id list: `[ids.len(), dim]`.
    pub fn lookup(&self, ids: &[usize]) -> Result<Tensor> {
        self.check(ids)?;
        Ok(self.table.gather_rows(ids))
    }

    /// Embeds a padded `[batch, steps]` id batch into `[batch, steps, dim]`.
    pub fn embed(&self, ids: &[Vec<usize>]) -> Result<Tensor> {
        let steps = ids.iter().map(Vec::len).max().unwrap_or(0);
        if ids.iter().any(|r| r.len() != steps) {
            return Err(Error::Shape("id batch must be rectangular (pad with 0)".into()));
        }
        let flat: Vec<usize> = ids.iter().flatten().copied().collect();
        let rows = self.lookup(&flat)?;
        Tensor::from_vec(&[ids.len(), steps, self.dim()], rows.into_data())
    }

    pub fn backward(&self, ids: &[usize], d_out: &Tensor) -> Embedding {
        let mut grad = Embedding { table: self.table.zeros_like() };
        grad.table.scatter_add_rows(ids, d_out);
        grad
    }
}

impl Parameterized for Embedding {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![("embedding".into(), &self.table)]
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("embedding".into(), &mut self.table)]
    }
}

/// Affine map `x · kernel + bias` applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng>(rng: &mut R, input_dim: usize, output_dim: usize) -> Self {
        Self { kernel: glorot_uniform(rng, input_dim, output_dim), bias: Tensor::zeros(&[output_dim]) }
    }

    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self { kernel: Tensor::zeros(&[input_dim, output_dim]), bias: Tensor::zeros(&[output_dim]) }
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.kernel.cols()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "dense expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let mut y = matmul(x.view(), self.kernel.view());
        add_row_bias(&mut y, self.bias.data());
        Ok(y)
    }

    /// Returns `(d_x, grads)` for upstream gradient `d_y`.
    pub fn backward(&self, x: &Tensor, d_y: &Tensor) -> (Tensor, Dense) {
        let kernel = matmul(x.view().t(), d_y.view());
        let bias = Tensor::from_vec(&[self.output_dim()], d_y.column_sums()).expect("bias shape");
        let d_x = matmul(d_y.view(), self.kernel.view().t());
        (d_x, Dense { kernel, bias })
    }
}

impl Parameterized for Dense {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![("kernel".into(), &self.kernel), ("bias".into(), &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("kernel".into(), &mut self.kernel), ("bias".into(), &mut self.bias)]
    }
}

pub fn add_row_bias(y: &mut Tensor, bias: &[f64]) {
    let c = bias.len();
    for row in y.data_mut().chunks_exact_mut(c) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Adds `a · b` into `c` (`beta = 1`).
pub(crate) fn gemm_acc(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64]) {
    gemm(1.0, a, b, 1.0, c);
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let c = logits.cols();
    for row in out.data_mut().chunks_exact_mut(c) {
        softmax_in_place(row);
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Dense projection followed by softmax: one distribution per row.
pub fn dense_softmax(h: &Tensor, dense: &Dense) -> Result<Tensor> {
    Ok(softmax_rows(&dense.forward(h)?))
}

/// Mean negative log-likelihood of `gold` under the row distributions
/// `probs`, over rows where `mask` is true.
pub fn masked_cross_entropy(probs: &Tensor, gold: &[usize], mask: &[bool]) -> Result<f64> {
    if gold.len() != probs.rows() || mask.len() != probs.rows() {
        return Err(Error::LengthMismatch { left: probs.rows(), right: gold.len() });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, (&g, &m)) in gold.iter().zip(mask).enumerate() {
        if m {
            total -= probs.row(r)[g].ln();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::AllMasked);
    }
    Ok(total / count as f64)
}

/// Softmax cross-entropy on raw logits, averaged over unmasked rows.
/// Returns the loss and its gradient with respect to the logits.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    gold: &[usize],
    mask: Option<&[bool]>,
) -> Result<(f64, Tensor)> {
    let rows = logits.rows();
    if gold.len() != rows || mask.is_some_and(|m| m.len() != rows) {
        return Err(Error::LengthMismatch { left: rows, right: gold.len() });
    }
    let count = mask.map_or(rows, |m| m.iter().filter(|&&x| x).count());
    if count == 0 {
        return Err(Error::AllMasked);
    }
    let scale = 1.0 / count as f64;
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    let c = logits.cols();
    for (r, row) in grad.data_mut().chunks_exact_mut(c).enumerate() {
        if mask.is_some_and(|m| !m[r]) {
            row.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let lse = super::tensor::log_sum_exp(logits.row(r));
        loss += lse - logits.row(r)[gold[r]];
        row[gold[r]] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((loss * scale, grad))
}
