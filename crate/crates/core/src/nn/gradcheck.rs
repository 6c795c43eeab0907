//! Central-difference gradient checking.

use super::{Parameterized, Tensor};

/// Maximum accepted relative error between analytic and numeric gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Default finite-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// `‖a − n‖ / (‖a‖ + ‖n‖)`, or 0 when both are zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if na + nn == 0.0 {
        0.0
    } else {
        diff / (na + nn)
    }
}

/// Numeric gradient of `loss` for every parameter of `model`, by central
/// differences with step `h`. The model is restored afterwards.
pub fn numeric_gradients<M, F>(model: &mut M, mut loss: F, h: f64) -> Vec<Tensor>
where
    M: Parameterized,
    F: FnMut(&M) -> f64,
{
    let shapes: Vec<Vec<usize>> =
        model.parameters().iter().map(|(_, t)| t.shape().to_vec()).collect();
    let mut out: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
    for (k, grad) in out.iter_mut().enumerate() {
        for i in 0..grad.len() {
            let orig = model.parameters()[k].1.data()[i];
            set(model, k, i, orig + h);
            let plus = loss(model);
            set(model, k, i, orig - h);
            let minus = loss(model);
            set(model, k, i, orig);
            grad.data_mut()[i] = (plus - minus) / (2.0 * h);
        }
    }
    out
}

fn set<M: Parameterized>(model: &mut M, k: usize, i: usize, value: f64) {
    model.parameters_mut()[k].1.data_mut()[i] = value;
}

/// Relative error per named parameter between `analytic` (aligned with
/// `model.parameters()`) and central differences.
pub fn check_gradients<M, F>(model: &mut M, loss: F, analytic: &[Tensor], h: f64) -> Vec<(String, f64)>
where
    M: Parameterized,
    F: FnMut(&M) -> f64,
{
    let numeric = numeric_gradients(model, loss, h);
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    names
        .into_iter()
        .zip(analytic.iter().zip(&numeric))
        .map(|(name, (a, n))| (name, relative_error(a.data(), n.data())))
        .collect()
}
