//! Additive attention: `e_j = vᵀ tanh(W1·c_j + W2·s)`, softmax over `j`.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::init::glorot_uniform;
use crate::nn::layers::softmax_in_place;
use crate::nn::tensor::{gemm, matmul};
use crate::nn::{Parameterized, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// `[context_dim, attention_dim]`
    pub w1: Tensor,
    /// `[state_dim, attention_dim]`
    pub w2: Tensor,
    /// `[attention_dim]`
    pub v: Tensor,
}

/// One attention step over a batch of sources.
#[derive(Debug, Clone)]
pub struct AttentionStep {
    /// Weights per source, each summing to 1.
    pub weights: Vec<Vec<f64>>,
    /// `tanh(keys + query)` per source, `[T_b, attention_dim]`.
    activations: Vec<Tensor>,
    /// `[batch, context_dim]`
    pub context: Tensor,
}

impl Attention {
    pub fn new<R: Rng>(rng: &mut R, context_dim: usize, state_dim: usize, attention_dim: usize) -> Self {
        Self {
            w1: glorot_uniform(rng, context_dim, attention_dim),
            w2: glorot_uniform(rng, state_dim, attention_dim),
            v: Tensor::from_vec(&[attention_dim], glorot_uniform(rng, attention_dim, 1).into_data())
                .expect("vector shape"),
        }
    }

    pub fn zeros(context_dim: usize, state_dim: usize, attention_dim: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[context_dim, attention_dim]),
            w2: Tensor::zeros(&[state_dim, attention_dim]),
            v: Tensor::zeros(&[attention_dim]),
        }
    }

    pub fn attention_dim(&self) -> usize {
        self.v.len()
    }

    /// `W1·c_j` for every context row; computed once per batch.
    pub fn keys(&self, contexts: &Tensor) -> Tensor {
        matmul(contexts.view(), self.w1.view())
    }

    /// Attends with `states` (`[batch, state_dim]`) over the context rows
    /// `rows[b]` of each source.
    pub fn step(&self, keys: &Tensor, contexts: &Tensor, rows: &[Vec<usize>], states: &Tensor) -> AttentionStep {
        let query = matmul(states.view(), self.w2.view());
        let ad = self.attention_dim();
        let mut weights = Vec::with_capacity(rows.len());
        let mut activations = Vec::with_capacity(rows.len());
        let mut context = Tensor::zeros(&[rows.len(), contexts.cols()]);
        for (b, src) in rows.iter().enumerate() {
            let q = query.row(b);
            let mut act = Tensor::zeros(&[src.len(), ad]);
            let mut e = vec![0.0; src.len()];
            for (j, &r) in src.iter().enumerate() {
                let a = act.row_mut(j);
                for (k, ((a, kv), qv)) in a.iter_mut().zip(keys.row(r)).zip(q).enumerate() {
                    *a = (kv + qv).tanh();
                    e[j] += self.v.data()[k] * *a;
                }
            }
            softmax_in_place(&mut e);
            let ctx = context.row_mut(b);
            for (&w, &r) in e.iter().zip(src) {
                for (c, x) in ctx.iter_mut().zip(contexts.row(r)) {
                    *c += w * x;
                }
            }
            weights.push(e);
            activations.push(act);
        }
        AttentionStep { weights, activations, context }
    }

    /// Backward of [`Attention::step`] for `d_context`. Adds into `grads`
    /// (`w2`, `v`), `d_keys` and `d_contexts`; returns the state gradient.
    #[allow(clippy::too_many_arguments)]
    pub fn step_backward(
        &self,
        contexts: &Tensor,
        rows: &[Vec<usize>],
        states: &Tensor,
        st: &AttentionStep,
        d_context: &Tensor,
        grads: &mut Attention,
        d_keys: &mut Tensor,
        d_contexts: &mut Tensor,
    ) -> Tensor {
        let ad = self.attention_dim();
        let mut d_query = Tensor::zeros(&[rows.len(), ad]);
        for (b, src) in rows.iter().enumerate() {
            let w = &st.weights[b];
            let dc = d_context.row(b);
            let d_alpha: Vec<f64> =
                src.iter().map(|&r| contexts.row(r).iter().zip(dc).map(|(x, d)| x * d).sum()).collect();
            let mean: f64 = w.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            for (j, &r) in src.iter().enumerate() {
                for (d, g) in d_contexts.row_mut(r).iter_mut().zip(dc) {
                    *d += w[j] * g;
                }
                let de = w[j] * (d_alpha[j] - mean);
                let act = st.activations[b].row(j);
                let dq = d_query.row_mut(b);
                let dk = d_keys.row_mut(r);
                for k in 0..ad {
                    grads.v.data_mut()[k] += de * act[k];
                    let dp = de * self.v.data()[k] * (1.0 - act[k] * act[k]);
                    dk[k] += dp;
                    dq[k] += dp;
                }
            }
        }
        gemm(1.0, states.view().t(), d_query.view(), 1.0, grads.w2.data_mut());
        matmul(d_query.view(), self.w2.view().t())
    }

    /// Backward of [`Attention::keys`].
    pub fn keys_backward(&self, contexts: &Tensor, d_keys: &Tensor, grads: &mut Attention, d_contexts: &mut Tensor) {
        gemm(1.0, contexts.view().t(), d_keys.view(), 1.0, grads.w1.data_mut());
        gemm(1.0, d_keys.view(), self.w1.view().t(), 1.0, d_contexts.data_mut());
    }

    /// Single-query convenience: returns the context vector and weights.
    pub fn attend(&self, state: &[f64], contexts: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let keys = self.keys(contexts);
        let rows = vec![(0..contexts.rows()).collect::<Vec<_>>()];
        let states = Tensor::matrix(1, state.len(), state.to_vec()).expect("state row");
        let mut st = self.step(&keys, contexts, &rows, &states);
        (st.context.into_data(), st.weights.remove(0))
    }
}

impl Parameterized for Attention {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![("w1".into(), &self.w1), ("w2".into(), &self.w2), ("v".into(), &self.v)]
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("w1".into(), &mut self.w1), ("w2".into(), &mut self.w2), ("v".into(), &mut self.v)]
    }
}

/// Attention weights of one decoded word: a row per emitted token, a
/// column per source character.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub source: Vec<char>,
    pub emitted: Vec<String>,
    pub weights: Vec<Vec<f64>>,
}

impl AttentionTrace {
    /// CSV matrix: header row of source characters, one row per emitted token.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("emitted");
        for c in &self.source {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (label, row) in self.emitted.iter().zip(&self.weights) {
            out.push_str(label);
            for w in row {
                let _ = write!(out, ",{w}");
            }
            out.push('\n');
        }
        out
    }

    /// Largest deviation of a row sum from 1.
    pub fn max_row_error(&self) -> f64 {
        self.weights.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}
