//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

/// First and second moment estimates for one parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One Adam update of `param` at step `t` (1-based).
pub fn adam_step(
    param: &mut [f64],
    grad: &[f64],
    state: &mut Moments,
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Config("adam step counter starts at 1".into()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(String::new()));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Optimizer state for a whole model.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, moments: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates `params` (in model order) with the aligned `grads`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: Vec<(String, &mut Tensor)>, grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch { left: params.len(), right: grads.len() });
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::Shape(format!("gradient for {name} has wrong size")));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        if self.moments.is_empty() {
            self.moments = grads.iter().map(|g| Moments::zeros(g.len())).collect();
        }
        self.step += 1;
        for ((_, p), (g, state)) in params.into_iter().zip(grads.iter().zip(&mut self.moments)) {
            adam_step(p.data_mut(), g.data(), state, self.step, &self.config)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let cfg = AdamConfig::default();
        let mut p = vec![1.0, 1.0, 1.0];
        let mut st = Moments::zeros(3);
        adam_step(&mut p, &[0.5, -2.0, 1e-3], &mut st, 1, &cfg).unwrap();
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (1.0 + 1e-3)).abs() < 1e-9);
        assert!((p[2] - (1.0 - 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.3, -0.2];
        let mut st = Moments::zeros(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 1, &cfg).unwrap();
        assert_eq!(p, vec![0.3, -0.2]);
        // With history, zero gradients only decay the moments.
        let mut st = Moments { m: vec![1.0, 2.0], v: vec![4.0, 1.0] };
        adam_step(&mut p, &[0.0, 0.0], &mut st, 3, &cfg).unwrap();
        assert_eq!(st.m, vec![0.9, 1.8]);
        assert!((st.v[0] - 4.0 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = AdamConfig::default();
        let mut st = Moments::zeros(1);
        assert!(adam_step(&mut [0.0], &[f64::NAN], &mut st, 1, &cfg).is_err());
        assert!(adam_step(&mut [0.0], &[1.0], &mut st, 0, &cfg).is_err());
    }

    #[test]
    fn deterministic_over_five_steps() {
        let run = || {
            let mut w = Tensor::from_vec(&[4], vec![0.1, -0.4, 0.7, 0.0]).unwrap();
            let mut opt = Adam::new(AdamConfig::default());
            for step in 0..5 {
                // Gradient of Σ (w - target)² with a step-dependent target.
                let g: Vec<f64> =
                    w.data().iter().enumerate().map(|(i, x)| 2.0 * (x - (i + step) as f64 * 0.1)).collect();
                let g = Tensor::from_vec(&[4], g).unwrap();
                opt.step(vec![("w".into(), &mut w)], &[g]).unwrap();
            }
            w
        };
        let (a, b) = (run(), run());
        assert_eq!(
            a.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
