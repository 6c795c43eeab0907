//! LSTM layers over packed batches, with backpropagation through time.
//!
//! Gate layout along the `4h` axis is `[input, forget, cell, output]`.

use rand::Rng;

use super::init::glorot_uniform;
use super::layers::gemm_acc;
use super::packing::Packing;
use super::tensor::{gemm, sigmoid, MatRef, Tensor};
use super::Parameterized;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `[input_dim, 4h]`
    pub kernel: Tensor,
    /// `[h, 4h]`
    pub recurrent_kernel: Tensor,
    /// `[4h]`
    pub bias: Tensor,
}

/// Activations kept from the forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Tensor,
    /// Post-activation gates `[total, 4h]`.
    gates: Tensor,
    cells: Tensor,
    cells_tanh: Tensor,
    /// Hidden states `[total, h]`; this is the layer output.
    pub hidden: Tensor,
}

impl LstmLayer {
    /// Glorot-uniform kernels, zero bias except forget gate bias 1.
    pub fn new<R: Rng>(rng: &mut R, input_dim: usize, hidden_dim: usize) -> Self {
        let kernel = glorot_uniform(rng, input_dim, 4 * hidden_dim);
        let recurrent_kernel = glorot_uniform(rng, hidden_dim, 4 * hidden_dim);
        let mut bias = Tensor::zeros(&[4 * hidden_dim]);
        bias.data_mut()[hidden_dim..2 * hidden_dim].iter_mut().for_each(|b| *b = 1.0);
        Self { kernel, recurrent_kernel, bias }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[input_dim, 4 * hidden_dim]),
            recurrent_kernel: Tensor::zeros(&[hidden_dim, 4 * hidden_dim]),
            bias: Tensor::zeros(&[4 * hidden_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.recurrent_kernel.rows()
    }

    /// `4·((input + hidden)·hidden + hidden)`.
    pub fn parameter_count(input_dim: usize, hidden_dim: usize) -> usize {
        4 * ((input_dim + hidden_dim) * hidden_dim + hidden_dim)
    }

    /// Runs the layer over a packed input `[packing.total(), input_dim]`
    /// from a zero initial state.
    pub fn forward(&self, input: &Tensor, packing: &Packing) -> Result<LstmCache> {
        let h = self.hidden_dim();
        let total = packing.total();
        if input.rows() != total || input.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "lstm input is {:?}, expected [{total}, {}]",
                input.shape(),
                self.input_dim()
            )));
        }
        let mut gates = Tensor::zeros(&[total, 4 * h]);
        gemm(1.0, input.view(), self.kernel.view(), 0.0, gates.data_mut());
        super::layers::add_row_bias(&mut gates, self.bias.data());

        let mut cells = Tensor::zeros(&[total, h]);
        let mut cells_tanh = Tensor::zeros(&[total, h]);
        let mut hidden = Tensor::zeros(&[total, h]);

        for t in 0..packing.steps() {
            let (a, o) = (packing.active(t), packing.offset(t));
            let prev = (t > 0).then(|| packing.offset(t - 1));
            if let Some(po) = prev {
                let h_prev = MatRef::new(hidden.rows_slice(po, po + a), a, h);
                gemm_acc(h_prev, self.recurrent_kernel.view(), gates.rows_slice_mut(o, o + a));
            }
            for local in 0..a {
                let r = o + local;
                let z = gates.row_mut(r);
                for j in 0..h {
                    z[j] = sigmoid(z[j]);
                    z[h + j] = sigmoid(z[h + j]);
                    z[2 * h + j] = z[2 * h + j].tanh();
                    z[3 * h + j] = sigmoid(z[3 * h + j]);
                }
                let z = gates.row(r);
                let (head, tail) = cells.data_mut().split_at_mut(r * h);
                let c_row = &mut tail[..h];
                let c_prev = prev.map(|po| &head[(po + local) * h..(po + local + 1) * h]);
                let tc_row = cells_tanh.row_mut(r);
                let h_row = hidden.row_mut(r);
                for j in 0..h {
                    let cp = c_prev.map_or(0.0, |row| row[j]);
                    let c = z[h + j] * cp + z[j] * z[2 * h + j];
                    let tc = c.tanh();
                    c_row[j] = c;
                    tc_row[j] = tc;
                    h_row[j] = z[3 * h + j] * tc;
                }
            }
            if !hidden.rows_slice(o, o + a).iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { step: t });
            }
        }
        Ok(LstmCache { input: input.clone(), gates, cells, cells_tanh, hidden })
    }

    /// Backpropagates `d_hidden` (`[total, h]`, gradient of the loss with
    /// respect to every output row) through time. Returns the input
    /// gradient and the parameter gradients.
    pub fn backward(
        &self,
        cache: &LstmCache,
        packing: &Packing,
        d_hidden: &Tensor,
    ) -> (Tensor, LstmLayer) {
        let h = self.hidden_dim();
        let total = packing.total();
        let mut d_z = Tensor::zeros(&[total, 4 * h]);
        let mut dh_acc = d_hidden.clone();
        let mut dc_acc = Tensor::zeros(&[total, h]);

        for t in (0..packing.steps()).rev() {
            let (a, o) = (packing.active(t), packing.offset(t));
            let prev = (t > 0).then(|| packing.offset(t - 1));
            for local in 0..a {
                let r = o + local;
                let z = cache.gates.row(r);
                let tc = cache.cells_tanh.row(r);
                let dh_row = dh_acc.row(r);
                let c_prev = prev.map(|po| cache.cells.row(po + local));
                let (head, tail) = dc_acc.data_mut().split_at_mut(r * h);
                let dc_row = &tail[..h];
                let mut dc_prev = prev.map(|po| &mut head[(po + local) * h..(po + local + 1) * h]);
                let dz = d_z.row_mut(r);
                for j in 0..h {
                    let (i, f, g, og) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                    let dh = dh_row[j];
                    let dc = dc_row[j] + dh * og * (1.0 - tc[j] * tc[j]);
                    let cp = c_prev.map_or(0.0, |row| row[j]);
                    if let Some(row) = dc_prev.as_deref_mut() {
                        row[j] += dc * f;
                    }
                    dz[j] = dc * g * i * (1.0 - i);
                    dz[h + j] = dc * cp * f * (1.0 - f);
                    dz[2 * h + j] = dc * i * (1.0 - g * g);
                    dz[3 * h + j] = dh * tc[j] * og * (1.0 - og);
                }
            }
            if let Some(po) = prev {
                let dz_t = MatRef::new(d_z.rows_slice(o, o + a), a, 4 * h);
                gemm_acc(dz_t, self.recurrent_kernel.view().t(), dh_acc.rows_slice_mut(po, po + a));
            }
        }

        // Hidden state feeding each packed row (zero at t = 0).
        let mut h_prev = Tensor::zeros(&[total, h]);
        for t in 1..packing.steps() {
            let (a, o, po) = (packing.active(t), packing.offset(t), packing.offset(t - 1));
            h_prev.rows_slice_mut(o, o + a).copy_from_slice(cache.hidden.rows_slice(po, po + a));
        }

        let mut grads = LstmLayer::zeros(self.input_dim(), h);
        gemm(1.0, cache.input.view().t(), d_z.view(), 0.0, grads.kernel.data_mut());
        gemm(1.0, h_prev.view().t(), d_z.view(), 0.0, grads.recurrent_kernel.data_mut());
        grads.bias.data_mut().copy_from_slice(&d_z.column_sums());
        let mut d_input = Tensor::zeros(&[total, self.input_dim()]);
        gemm(1.0, d_z.view(), self.kernel.view().t(), 0.0, d_input.data_mut());
        (d_input, grads)
    }
}

impl Parameterized for LstmLayer {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("kernel".into(), &self.kernel),
            ("recurrent_kernel".into(), &self.recurrent_kernel),
            ("bias".into(), &self.bias),
        ]
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("kernel".into(), &mut self.kernel),
            ("recurrent_kernel".into(), &mut self.recurrent_kernel),
            ("bias".into(), &mut self.bias),
        ]
    }
}

/// Single sequence `[T, input_dim]` → hidden states `[T, h]`.
pub fn lstm_forward(x: &Tensor, layer: &LstmLayer) -> Result<Tensor> {
    let packing = Packing::new(&[x.rows()])?;
    Ok(layer.forward(x, &packing)?.hidden)
}

/// Forward and time-reversed passes concatenated per step.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: LstmLayer,
    pub backward: LstmLayer,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
    perm: Vec<usize>,
    /// `[total, 2h]` outputs, forward half first.
    pub output: Tensor,
}

impl BiLstm {
    pub fn new<R: Rng>(rng: &mut R, input_dim: usize, hidden_dim: usize) -> Self {
        let forward = LstmLayer::new(rng, input_dim, hidden_dim);
        let backward = LstmLayer::new(rng, input_dim, hidden_dim);
        Self { forward, backward }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            forward: LstmLayer::zeros(input_dim, hidden_dim),
            backward: LstmLayer::zeros(input_dim, hidden_dim),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    pub fn run(&self, input: &Tensor, packing: &Packing) -> Result<BiLstmCache> {
        let perm = packing.reverse_permutation();
        let fwd = self.forward.forward(input, packing)?;
        let bwd = self.backward.forward(&input.gather_rows(&perm), packing)?;
        let output = fwd.hidden.hconcat(&bwd.hidden.gather_rows(&perm));
        Ok(BiLstmCache { fwd, bwd, perm, output })
    }

    pub fn backward_pass(
        &self,
        cache: &BiLstmCache,
        packing: &Packing,
        d_output: &Tensor,
    ) -> (Tensor, BiLstm) {
        let (d_fwd, d_bwd) = d_output.hsplit(self.hidden_dim());
        let (mut d_in, g_fwd) = self.forward.backward(&cache.fwd, packing, &d_fwd);
        let (d_in_rev, g_bwd) =
            self.backward.backward(&cache.bwd, packing, &d_bwd.gather_rows(&cache.perm));
        d_in.add_assign(&d_in_rev.gather_rows(&cache.perm));
        (d_in, BiLstm { forward: g_fwd, backward: g_bwd })
    }
}

impl Parameterized for BiLstm {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("forward", self.forward.parameters());
        out.extend(prefixed("backward", self.backward.parameters()));
        out
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = prefixed("forward", self.forward.parameters_mut());
        out.extend(prefixed("backward", self.backward.parameters_mut()));
        out
    }
}

pub(crate) fn prefixed<T>(prefix: &str, items: Vec<(String, T)>) -> Vec<(String, T)> {
    items.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

/// Single sequence `[T, input_dim]` → `[T, 2h]`.
pub fn blstm_forward(x: &Tensor, fwd: &LstmLayer, bwd: &LstmLayer) -> Result<Tensor> {
    let packing = Packing::new(&[x.rows()])?;
    let bi = BiLstm { forward: fwd.clone(), backward: bwd.clone() };
    Ok(bi.run(x, &packing)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradients, GRADCHECK_TOLERANCE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_states() {
        let layer = LstmLayer::zeros(3, 4);
        let x = Tensor::matrix(5, 3, (0..15).map(|i| i as f64 * 0.3).collect()).unwrap();
        let h = lstm_forward(&x, &layer).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(LstmLayer::parameter_count(128, 256), 394_240);
        assert_eq!(LstmLayer::zeros(128, 256).count_parameters(), 394_240);
        assert_eq!(BiLstm::zeros(128, 256).count_parameters(), 788_480);
    }

    #[test]
    fn hand_computed_single_step() {
        // input_dim 1, hidden 2, T = 1: only the kernel and bias matter.
        let mut layer = LstmLayer::zeros(1, 2);
        // kernel columns: i0 i1 f0 f1 g0 g1 o0 o1
        layer.kernel.data_mut().copy_from_slice(&[0.5, -0.3, 0.2, 0.1, 0.4, -0.7, 0.9, 0.05]);
        layer.bias.data_mut().copy_from_slice(&[0.1, 0.0, 1.0, 1.0, -0.2, 0.3, 0.0, -0.1]);
        let x = 1.5;
        let x_t = Tensor::matrix(1, 1, vec![x]).unwrap();
        let h = lstm_forward(&x_t, &layer).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let expected = |k: usize| {
            let i = sig(x * [0.5, -0.3][k] + [0.1, 0.0][k]);
            let g = (x * [0.4, -0.7][k] + [-0.2, 0.3][k]).tanh();
            let o = sig(x * [0.9, 0.05][k] + [0.0, -0.1][k]);
            o * (i * g).tanh()
        };
        assert!((h.data()[0] - expected(0)).abs() < 1e-12);
        assert!((h.data()[1] - expected(1)).abs() < 1e-12);
    }

    #[test]
    fn outputs_are_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut layer = LstmLayer::new(&mut rng, 3, 5);
        layer.kernel.scale(20.0);
        let x = crate::nn::init::uniform(&mut rng, &[9, 3], -5.0, 5.0);
        let h = lstm_forward(&x, &layer).unwrap();
        assert!(h.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn palindrome_symmetry_with_tied_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layer = LstmLayer::new(&mut rng, 2, 3);
        let rows = [[0.1, 0.4], [-0.5, 0.2], [0.9, -0.3], [-0.5, 0.2], [0.1, 0.4]];
        let x = Tensor::matrix(5, 2, rows.iter().flatten().copied().collect()).unwrap();
        let out = blstm_forward(&x, &layer, &layer).unwrap();
        for t in 0..5 {
            let a = out.row(t);
            let b = out.row(4 - t);
            assert_eq!(&a[..3], &b[3..]);
            assert_eq!(&a[3..], &b[..3]);
        }
    }

    #[test]
    fn zero_input_nonzero_bias_directions_agree() {
        let mut layer = LstmLayer::zeros(2, 3);
        layer.bias.data_mut().iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * i as f64 - 0.4);
        let x = Tensor::zeros(&[4, 2]);
        let out = blstm_forward(&x, &layer, &layer).unwrap();
        // With U = 0 every step is the closed-form single step.
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let b = layer.bias.data();
        let mut c = [0.0; 3];
        for t in 0..4 {
            for j in 0..3 {
                c[j] = sig(b[3 + j]) * c[j] + sig(b[j]) * b[6 + j].tanh();
            }
            let row = out.row(t);
            assert_eq!(&row[..3], &out.row(3 - t)[3..]);
            for j in 0..3 {
                assert!((row[j] - sig(b[9 + j]) * c[j].tanh()).abs() < 1e-14);
            }
        }
    }

    /// Loss = Σ w ⊙ H over a packed batch; checks every LSTM parameter.
    #[test]
    fn gradient_check_packed_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut layer = LstmLayer::new(&mut rng, 3, 4);
        layer.recurrent_kernel.scale(2.0);
        let packing = Packing::new(&[6, 4, 4, 1]).unwrap();
        let x = crate::nn::init::uniform(&mut rng, &[packing.total(), 3], -1.0, 1.0);
        let w = crate::nn::init::uniform(&mut rng, &[packing.total(), 4], -1.0, 1.0);
        let loss = |l: &LstmLayer| {
            let h = l.forward(&x, &packing).unwrap().hidden;
            h.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let cache = layer.forward(&x, &packing).unwrap();
        let (d_x, grads) = layer.backward(&cache, &packing, &w);
        let report = check_gradients(&mut layer, loss, &grads.parameters_owned(), 1e-5);
        for (name, err) in report {
            assert!(err < GRADCHECK_TOLERANCE, "{name}: {err}");
        }
        // Input gradient by central differences.
        let mut num = Tensor::zeros(x.shape());
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += 1e-5;
            let mut xm = x.clone();
            xm.data_mut()[i] -= 1e-5;
            let f = |xx: &Tensor| {
                let h = layer.forward(xx, &packing).unwrap().hidden;
                h.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            num.data_mut()[i] = (f(&xp) - f(&xm)) / 2e-5;
        }
        assert!(crate::nn::gradcheck::relative_error(d_x.data(), num.data()) < GRADCHECK_TOLERANCE);
    }

    #[test]
    fn gradient_check_bidirectional() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut bi = BiLstm::new(&mut rng, 2, 3);
        let packing = Packing::new(&[5, 3, 2]).unwrap();
        let x = crate::nn::init::uniform(&mut rng, &[packing.total(), 2], -1.0, 1.0);
        let w = crate::nn::init::uniform(&mut rng, &[packing.total(), 6], -1.0, 1.0);
        let loss = |m: &BiLstm| {
            let out = m.run(&x, &packing).unwrap().output;
            out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let cache = bi.run(&x, &packing).unwrap();
        let (_, grads) = bi.backward_pass(&cache, &packing, &w);
        for (name, err) in check_gradients(&mut bi, loss, &grads.parameters_owned(), 1e-5) {
            assert!(err < GRADCHECK_TOLERANCE, "{name}: {err}");
        }
    }
}
