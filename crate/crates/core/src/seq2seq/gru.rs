//! Gated recurrent unit: a single-step cell and a packed bidirectional
//! encoder built from it.
//!
//! Gate layout along the `3u` axis is `[update, reset, candidate]`, and the
//! new state is `(1 − z)·h_prev + z·ĥ` with `ĥ = tanh(x·W_h + (r ⊙ h_prev)·U_h + b_h)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::init::glorot_uniform;
use crate::nn::layers::add_row_bias;
use crate::nn::lstm::prefixed;
use crate::nn::packing::Packing;
use crate::nn::tensor::{gemm, matmul, sigmoid, MatRef};
use crate::nn::{Parameterized, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    /// `[input_dim, 3u]`
    pub kernel: Tensor,
    /// `[u, 3u]`
    pub recurrent_kernel: Tensor,
    /// `[3u]`
    pub bias: Tensor,
}

/// Activations of one step for `a` rows.
#[derive(Debug, Clone)]
pub struct GruStep {
    /// Post-activation `[z, r, ĥ]`, `[a, 3u]`.
    gates: Tensor,
    /// `r ⊙ h_prev`, `[a, u]`.
    reset_state: Tensor,
    /// New state `[a, u]`.
    pub h: Tensor,
}

impl GruCell {
    pub fn new<R: Rng>(rng: &mut R, input_dim: usize, units: usize) -> Self {
        Self {
            kernel: glorot_uniform(rng, input_dim, 3 * units),
            recurrent_kernel: glorot_uniform(rng, units, 3 * units),
            bias: Tensor::zeros(&[3 * units]),
        }
    }

    pub fn zeros(input_dim: usize, units: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[input_dim, 3 * units]),
            recurrent_kernel: Tensor::zeros(&[units, 3 * units]),
            bias: Tensor::zeros(&[3 * units]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.rows()
    }

    pub fn units(&self) -> usize {
        self.recurrent_kernel.rows()
    }

    /// One step for the rows of `x`; a missing `h_prev` means a zero state.
    pub fn step(&self, x: MatRef<'_>, h_prev: Option<MatRef<'_>>) -> Result<GruStep> {
        let (a, u) = (x.rows(), self.units());
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!("gru expects {} inputs, got {}", self.input_dim(), x.cols())));
        }
        let uk = self.recurrent_kernel.view();
        let mut gates = matmul(x, self.kernel.view());
        add_row_bias(&mut gates, self.bias.data());
        if let Some(hp) = h_prev {
            let hu = matmul(hp, uk.cols_range(0, 2 * u));
            for (g, s) in gates.data_mut().chunks_exact_mut(3 * u).zip(hu.data().chunks_exact(2 * u)) {
                g[..2 * u].iter_mut().zip(s).for_each(|(g, s)| *g += s);
            }
        }
        let mut reset_state = Tensor::zeros(&[a, u]);
        for i in 0..a {
            let g = gates.row_mut(i);
            g[..2 * u].iter_mut().for_each(|v| *v = sigmoid(*v));
            if let Some(hp) = h_prev {
                let rs = reset_state.row_mut(i);
                for j in 0..u {
                    rs[j] = g[u + j] * hp.get(i, j);
                }
            }
        }
        if h_prev.is_some() {
            let hc = matmul(reset_state.view(), uk.cols_range(2 * u, u));
            for (g, s) in gates.data_mut().chunks_exact_mut(3 * u).zip(hc.data().chunks_exact(u)) {
                g[2 * u..].iter_mut().zip(s).for_each(|(g, s)| *g += s);
            }
        }
        let mut h = Tensor::zeros(&[a, u]);
        for i in 0..a {
            let g = gates.row_mut(i);
            g[2 * u..].iter_mut().for_each(|v| *v = v.tanh());
            let hr = h.row_mut(i);
            for j in 0..u {
                let hp = h_prev.map_or(0.0, |m| m.get(i, j));
                hr[j] = (1.0 - g[j]) * hp + g[j] * g[2 * u + j];
            }
        }
        if !h.is_finite() {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(GruStep { gates, reset_state, h })
    }

    /// Backward of [`GruCell::step`] for upstream `dh`. Parameter gradients
    /// are added into `grads`; returns `(d_x, d_h_prev)`.
    pub fn step_backward(
        &self,
        x: MatRef<'_>,
        h_prev: Option<MatRef<'_>>,
        st: &GruStep,
        dh: &Tensor,
        grads: &mut GruCell,
    ) -> (Tensor, Option<Tensor>) {
        let (a, u) = (x.rows(), self.units());
        let uk = self.recurrent_kernel.view();
        let mut d_pre = Tensor::zeros(&[a, 3 * u]);
        let mut d_hp = Tensor::zeros(&[a, u]);
        for i in 0..a {
            let g = st.gates.row(i);
            let dhr = dh.row(i);
            let dp = d_pre.row_mut(i);
            let dhp = d_hp.row_mut(i);
            for j in 0..u {
                let (z, hc) = (g[j], g[2 * u + j]);
                let hp = h_prev.map_or(0.0, |m| m.get(i, j));
                let d = dhr[j];
                dhp[j] = d * (1.0 - z);
                dp[j] = d * (hc - hp) * z * (1.0 - z);
                dp[2 * u + j] = d * z * (1.0 - hc * hc);
            }
        }
        let d_cand = MatRef::new(d_pre.data(), a, 3 * u).cols_range(2 * u, u);
        if let Some(hp) = h_prev {
            let d_rs = matmul(d_cand, uk.cols_range(2 * u, u).t());
            let g_c = matmul(st.reset_state.view().t(), d_cand);
            for i in 0..a {
                let g = st.gates.row(i);
                let drs = d_rs.row(i);
                let dp = d_pre.row_mut(i);
                for j in 0..u {
                    let r = g[u + j];
                    dp[u + j] = drs[j] * hp.get(i, j) * r * (1.0 - r);
                }
                let dhp = d_hp.row_mut(i);
                for j in 0..u {
                    dhp[j] += drs[j] * g[u + j];
                }
            }
            let d_zr = MatRef::new(d_pre.data(), a, 3 * u).cols_range(0, 2 * u);
            gemm(1.0, d_zr, uk.cols_range(0, 2 * u).t(), 1.0, d_hp.data_mut());
            let g_zr = matmul(hp.t(), d_zr);
            for (j, row) in grads.recurrent_kernel.data_mut().chunks_exact_mut(3 * u).enumerate() {
                row[..2 * u].iter_mut().zip(g_zr.row(j)).for_each(|(d, s)| *d += s);
                row[2 * u..].iter_mut().zip(g_c.row(j)).for_each(|(d, s)| *d += s);
            }
        }
        gemm(1.0, x.t(), d_pre.view(), 1.0, grads.kernel.data_mut());
        for (b, s) in grads.bias.data_mut().iter_mut().zip(d_pre.column_sums()) {
            *b += s;
        }
        let d_x = matmul(d_pre.view(), self.kernel.view().t());
        (d_x, h_prev.map(|_| d_hp))
    }

    /// `3·((input + u)·u + u)`.
    pub fn parameter_count(input_dim: usize, units: usize) -> usize {
        3 * ((input_dim + units) * units + units)
    }
}

impl Parameterized for GruCell {
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

/// Steps of one direction over a packed batch.
#[derive(Debug, Clone)]
pub struct GruRun {
    input: Tensor,
    steps: Vec<GruStep>,
    /// `[total, u]`
    pub hidden: Tensor,
}

fn block<'a>(t: &'a Tensor, packing: &Packing, step: usize) -> MatRef<'a> {
    let (a, o) = (packing.active(step), packing.offset(step));
    MatRef::new(t.rows_slice(o, o + a), a, t.cols())
}

impl GruCell {
    /// Runs over a packed input `[total, input_dim]` from a zero state.
    pub fn run(&self, input: &Tensor, packing: &Packing) -> Result<GruRun> {
        let u = self.units();
        let mut hidden = Tensor::zeros(&[packing.total(), u]);
        let mut steps = Vec::with_capacity(packing.steps());
        for t in 0..packing.steps() {
            let (a, o) = (packing.active(t), packing.offset(t));
            let prev = (t > 0).then(|| {
                let po = packing.offset(t - 1);
                MatRef::new(hidden.rows_slice(po, po + a), a, u)
            });
            let st = self.step(block(input, packing, t), prev).map_err(|_| Error::NonFinite { step: t })?;
            hidden.rows_slice_mut(o, o + a).copy_from_slice(st.h.data());
            steps.push(st);
        }
        Ok(GruRun { input: input.clone(), steps, hidden })
    }

    /// Backpropagates `d_hidden` (`[total, u]`) through time.
    pub fn run_backward(&self, run: &GruRun, packing: &Packing, d_hidden: &Tensor, grads: &mut GruCell) -> Tensor {
        let u = self.units();
        let mut dh_acc = d_hidden.clone();
        let mut d_input = Tensor::zeros(&[packing.total(), self.input_dim()]);
        for t in (0..packing.steps()).rev() {
            let (a, o) = (packing.active(t), packing.offset(t));
            let prev = (t > 0).then(|| {
                let po = packing.offset(t - 1);
                MatRef::new(run.hidden.rows_slice(po, po + a), a, u)
            });
            let dh = Tensor::from_vec(&[a, u], dh_acc.rows_slice(o, o + a).to_vec()).expect("block shape");
            let (dx, dhp) = self.step_backward(block(&run.input, packing, t), prev, &run.steps[t], &dh, grads);
            d_input.rows_slice_mut(o, o + a).copy_from_slice(dx.data());
            if let Some(dhp) = dhp {
                let po = packing.offset(t - 1);
                for (d, s) in dh_acc.rows_slice_mut(po, po + a).iter_mut().zip(dhp.data()) {
                    *d += s;
                }
            }
        }
        d_input
    }
}

/// Forward and time-reversed GRUs with outputs concatenated per step.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

#[derive(Debug, Clone)]
pub struct BiGruRun {
    fwd: GruRun,
    bwd: GruRun,
    perm: Vec<usize>,
    /// `[total, 2u]`, forward half first.
    pub output: Tensor,
}

impl BiGru {
    pub fn new<R: Rng>(rng: &mut R, input_dim: usize, units: usize) -> Self {
        let forward = GruCell::new(rng, input_dim, units);
        let backward = GruCell::new(rng, input_dim, units);
        Self { forward, backward }
    }

    pub fn zeros(input_dim: usize, units: usize) -> Self {
        Self { forward: GruCell::zeros(input_dim, units), backward: GruCell::zeros(input_dim, units) }
    }

    pub fn units(&self) -> usize {
        self.forward.units()
    }

    pub fn run(&self, input: &Tensor, packing: &Packing) -> Result<BiGruRun> {
        let perm = packing.reverse_permutation();
        let fwd = self.forward.run(input, packing)?;
        let bwd = self.backward.run(&input.gather_rows(&perm), packing)?;
        let output = fwd.hidden.hconcat(&bwd.hidden.gather_rows(&perm));
        Ok(BiGruRun { fwd, bwd, perm, output })
    }

    pub fn run_backward(&self, run: &BiGruRun, packing: &Packing, d_output: &Tensor, grads: &mut BiGru) -> Tensor {
        let (d_fwd, d_bwd) = d_output.hsplit(self.units());
        let mut d_in = self.forward.run_backward(&run.fwd, packing, &d_fwd, &mut grads.forward);
        let d_rev =
            self.backward.run_backward(&run.bwd, packing, &d_bwd.gather_rows(&run.perm), &mut grads.backward);
        d_in.add_assign(&d_rev.gather_rows(&run.perm));
        d_in
    }
}

impl Parameterized for BiGru {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradients, GRADCHECK_TOLERANCE};
    use crate::nn::init::uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_states() {
        let cell = BiGru::zeros(3, 4);
        let packing = Packing::new(&[3, 2]).unwrap();
        let x = Tensor::matrix(5, 3, vec![0.7; 15]).unwrap();
        assert!(cell.run(&x, &packing).unwrap().output.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_count_formula() {
        assert_eq!(GruCell::zeros(128, 512).count_parameters(), GruCell::parameter_count(128, 512));
    }

    #[test]
    fn single_unit_step_by_hand() {
        let cell = GruCell {
            kernel: Tensor::matrix(1, 3, vec![0.5, -0.3, 0.8]).unwrap(),
            recurrent_kernel: Tensor::matrix(1, 3, vec![0.2, 0.4, -0.6]).unwrap(),
            bias: Tensor::from_vec(&[3], vec![0.1, 0.0, -0.2]).unwrap(),
        };
        let (x, hp) = (1.5, 0.3);
        let z = sigmoid(0.5 * x + 0.2 * hp + 0.1);
        let r = sigmoid(-0.3 * x + 0.4 * hp);
        let c = (0.8 * x + -0.6 * r * hp - 0.2).tanh();
        let expected = (1.0 - z) * hp + z * c;
        let xs = [x];
        let hs = [hp];
        let st = cell.step(MatRef::new(&xs, 1, 1), Some(MatRef::new(&hs, 1, 1))).unwrap();
        assert!((st.h.data()[0] - expected).abs() < 1e-12);
    }

    struct Wrapped {
        bi: BiGru,
    }

    impl Parameterized for Wrapped {
        fn parameters(&self) -> Vec<(String, &Tensor)> {
            self.bi.parameters()
        }
        fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
            self.bi.parameters_mut()
        }
    }

    #[test]
    fn bidirectional_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let packing = Packing::new(&[5, 3, 3, 1]).unwrap();
        let x = uniform(&mut rng, &[packing.total(), 3], -1.0, 1.0);
        let proj = uniform(&mut rng, &[packing.total(), 8], -1.0, 1.0);
        let mut model = Wrapped { bi: BiGru::new(&mut rng, 3, 4) };
        for (_, b) in model.bi.parameters_mut().into_iter().filter(|(n, _)| n.ends_with("bias")) {
            b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        let loss = |m: &Wrapped| {
            let out = m.bi.run(&x, &packing).unwrap().output;
            out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let run = model.bi.run(&x, &packing).unwrap();
        let mut grads = BiGru::zeros(3, 4);
        let d_in = model.bi.run_backward(&run, &packing, &proj, &mut grads);
        for (name, err) in check_gradients(&mut model, loss, &grads.parameters_owned(), 1e-5) {
            assert!(err < GRADCHECK_TOLERANCE, "{name}: {err}");
        }
        // Input gradient by central differences.
        let h = 1e-5;
        let mut numeric = vec![0.0; x.len()];
        for (i, n) in numeric.iter_mut().enumerate() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a.data_mut()[i] += h;
            b.data_mut()[i] -= h;
            let f = |inp: &Tensor| {
                let out = model.bi.run(inp, &packing).unwrap().output;
                out.data().iter().zip(proj.data()).map(|(p, q)| p * q).sum::<f64>()
            };
            *n = (f(&a) - f(&b)) / (2.0 * h);
        }
        assert!(crate::nn::gradcheck::relative_error(d_in.data(), &numeric) < GRADCHECK_TOLERANCE);
    }
}
