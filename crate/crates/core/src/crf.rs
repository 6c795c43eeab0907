//! Linear-chain CRF over the tag classes.
//!
//! The layer first maps the tagger's dense logits to emission scores with
//! its own `kernel` and `bias`, then scores a path with emissions, chain
//! transitions and a boundary score at each end. The scoring, partition and
//! decoding functions below take emissions that are already projected.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::init::glorot_uniform;
use crate::nn::layers::add_row_bias;
use crate::nn::tensor::{log_sum_exp, matmul};
use crate::nn::{Parameterized, Tensor};

/// Tag classes seen by the taggers: `S`, `C` and padding.
pub const NUM_TAGS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CrfLayer {
    /// `[k, k]` logits → emissions.
    pub kernel: Tensor,
    /// `[k]`
    pub bias: Tensor,
    /// `[k, k]`, `transitions[i][j]` scores tag `i` followed by tag `j`.
    pub transitions: Tensor,
    /// `[k]` score of the first tag.
    pub left: Tensor,
    /// `[k]` score of the last tag.
    pub right: Tensor,
}

impl CrfLayer {
    pub fn new<R: Rng>(rng: &mut R, num_tags: usize) -> Self {
        Self {
            kernel: glorot_uniform(rng, num_tags, num_tags),
            transitions: glorot_uniform(rng, num_tags, num_tags),
            ..Self::zeros(num_tags)
        }
    }

    pub fn zeros(num_tags: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[num_tags, num_tags]),
            bias: Tensor::zeros(&[num_tags]),
            transitions: Tensor::zeros(&[num_tags, num_tags]),
            left: Tensor::zeros(&[num_tags]),
            right: Tensor::zeros(&[num_tags]),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.bias.len()
    }

    fn trans(&self, i: usize, j: usize) -> f64 {
        self.transitions.data()[i * self.num_tags() + j]
    }

    /// Emission scores `logits · kernel + bias`.
    pub fn project(&self, logits: &Tensor) -> Result<Tensor> {
        if logits.cols() != self.num_tags() {
            return Err(Error::Shape(format!("crf expects {} logits per step", self.num_tags())));
        }
        let mut em = matmul(logits.view(), self.kernel.view());
        add_row_bias(&mut em, self.bias.data());
        Ok(em)
    }

    /// Backward of [`CrfLayer::project`]: returns the logit gradient and
    /// writes kernel and bias gradients into `grads`.
    pub fn project_backward(&self, logits: &Tensor, d_em: &Tensor, grads: &mut CrfLayer) -> Tensor {
        grads.kernel.add_assign(&matmul(logits.view().t(), d_em.view()));
        for (g, s) in grads.bias.data_mut().iter_mut().zip(d_em.column_sums()) {
            *g += s;
        }
        matmul(d_em.view(), self.kernel.view().t())
    }

    fn check(&self, emissions: &Tensor) -> Result<()> {
        if emissions.rows() == 0 {
            return Err(Error::EmptyInput);
        }
        if emissions.cols() != self.num_tags() {
            return Err(Error::Shape(format!(
                "emissions have {} columns, layer has {} tags",
                emissions.cols(),
                self.num_tags()
            )));
        }
        if let Some(pos) = emissions.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: pos / self.num_tags() });
        }
        Ok(())
    }
}

impl Parameterized for CrfLayer {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("kernel".into(), &self.kernel),
            ("bias".into(), &self.bias),
            ("transitions".into(), &self.transitions),
            ("left".into(), &self.left),
            ("right".into(), &self.right),
        ]
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("kernel".into(), &mut self.kernel),
            ("bias".into(), &mut self.bias),
            ("transitions".into(), &mut self.transitions),
            ("left".into(), &mut self.left),
            ("right".into(), &mut self.right),
        ]
    }
}

/// Score of `path` given emissions `[T, k]`.
pub fn crf_sequence_score(emissions: &Tensor, path: &[usize], layer: &CrfLayer) -> Result<f64> {
    layer.check(emissions)?;
    if path.len() != emissions.rows() {
        return Err(Error::LengthMismatch { left: path.len(), right: emissions.rows() });
    }
    let k = layer.num_tags();
    if let Some(&bad) = path.iter().find(|&&y| y >= k) {
        return Err(Error::IdOutOfRange { id: bad, size: k });
    }
    let mut score = layer.left.data()[path[0]] + layer.right.data()[path[path.len() - 1]];
    for (t, &y) in path.iter().enumerate() {
        score += emissions.row(t)[y];
        if t > 0 {
            score += layer.trans(path[t - 1], y);
        }
    }
    Ok(score)
}

/// Forward log-potentials `alpha[t][j]`.
fn forward_table(emissions: &Tensor, layer: &CrfLayer) -> Vec<Vec<f64>> {
    let k = layer.num_tags();
    let mut alpha = Vec::with_capacity(emissions.rows());
    alpha.push((0..k).map(|j| layer.left.data()[j] + emissions.row(0)[j]).collect::<Vec<_>>());
    let mut buf = vec![0.0; k];
    for t in 1..emissions.rows() {
        let prev = &alpha[t - 1];
        let row: Vec<f64> = (0..k)
            .map(|j| {
                for i in 0..k {
                    buf[i] = prev[i] + layer.trans(i, j);
                }
                log_sum_exp(&buf) + emissions.row(t)[j]
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

fn backward_table(emissions: &Tensor, layer: &CrfLayer) -> Vec<Vec<f64>> {
    let k = layer.num_tags();
    let steps = emissions.rows();
    let mut beta = vec![vec![0.0; k]; steps];
    beta[steps - 1].copy_from_slice(layer.right.data());
    let mut buf = vec![0.0; k];
    for t in (0..steps - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = layer.trans(i, j) + emissions.row(t + 1)[j] + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&buf);
        }
    }
    beta
}

fn final_log_partition(alpha_last: &[f64], layer: &CrfLayer) -> f64 {
    let ends: Vec<f64> = alpha_last.iter().zip(layer.right.data()).map(|(a, r)| a + r).collect();
    log_sum_exp(&ends)
}

/// Log of the summed exponentiated scores of all `k^T` paths.
pub fn crf_log_partition(emissions: &Tensor, layer: &CrfLayer) -> Result<f64> {
    layer.check(emissions)?;
    let alpha = forward_table(emissions, layer);
    Ok(final_log_partition(&alpha[alpha.len() - 1], layer))
}

/// Gradients of the negative log-likelihood.
#[derive(Debug, Clone)]
pub struct CrfGradients {
    pub d_emissions: Tensor,
    /// Chain and boundary gradients; kernel and bias are left at zero.
    pub layer: CrfLayer,
}

/// `log Z − score(gold)` and its gradients with respect to the emissions
/// and the chain/boundary parameters.
pub fn crf_nll(emissions: &Tensor, gold: &[usize], layer: &CrfLayer) -> Result<(f64, CrfGradients)> {
    let gold_score = crf_sequence_score(emissions, gold, layer)?;
    let k = layer.num_tags();
    let steps = emissions.rows();
    let alpha = forward_table(emissions, layer);
    let beta = backward_table(emissions, layer);
    let log_z = final_log_partition(&alpha[steps - 1], layer);

    let mut grads = CrfGradients { d_emissions: Tensor::zeros(&[steps, k]), layer: CrfLayer::zeros(k) };
    for t in 0..steps {
        let d = grads.d_emissions.row_mut(t);
        for j in 0..k {
            d[j] = (alpha[t][j] + beta[t][j] - log_z).exp();
        }
        d[gold[t]] -= 1.0;
    }
    grads.layer.left.data_mut().copy_from_slice(grads.d_emissions.row(0));
    grads.layer.right.data_mut().copy_from_slice(grads.d_emissions.row(steps - 1));
    let dt = grads.layer.transitions.data_mut();
    for t in 1..steps {
        for i in 0..k {
            for j in 0..k {
                let lp = alpha[t - 1][i] + layer.trans(i, j) + emissions.row(t)[j] + beta[t][j] - log_z;
                dt[i * k + j] += lp.exp();
            }
        }
        dt[gold[t - 1] * k + gold[t]] -= 1.0;
    }
    Ok(((log_z - gold_score).max(0.0), grads))
}

/// Highest-scoring path and its score. Ties go to the lower tag index.
pub fn viterbi_decode(emissions: &Tensor, layer: &CrfLayer) -> Result<(Vec<usize>, f64)> {
    viterbi_constrained(emissions, layer, |_, _| true)
}

/// Viterbi restricted to tags for which `allowed(t, tag)` holds.
pub fn viterbi_constrained<F>(emissions: &Tensor, layer: &CrfLayer, allowed: F) -> Result<(Vec<usize>, f64)>
where
    F: Fn(usize, usize) -> bool,
{
    layer.check(emissions)?;
    let k = layer.num_tags();
    let steps = emissions.rows();
    let mask = |t: usize, j: usize, v: f64| if allowed(t, j) { v } else { f64::NEG_INFINITY };
    let mut delta: Vec<f64> =
        (0..k).map(|j| mask(0, j, layer.left.data()[j] + emissions.row(0)[j])).collect();
    let mut back = vec![vec![0usize; k]; steps];
    for t in 1..steps {
        let mut next = vec![f64::NEG_INFINITY; k];
        for j in 0..k {
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
            for i in 0..k {
                let v = delta[i] + layer.trans(i, j);
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            back[t][j] = arg;
            next[j] = mask(t, j, best + emissions.row(t)[j]);
        }
        delta = next;
    }
    let (mut best, mut last) = (f64::NEG_INFINITY, 0);
    for j in 0..k {
        let v = delta[j] + layer.right.data()[j];
        if v > best {
            best = v;
            last = j;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::AllMasked);
    }
    let mut path = vec![last; steps];
    for t in (1..steps).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, best))
}
