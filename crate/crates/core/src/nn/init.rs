use rand::Rng;

use super::Tensor;

/// Uniform in `[lo, hi)`.
pub fn uniform<R: Rng>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// Glorot/Xavier uniform: limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, &[fan_in, fan_out], -limit, limit)
}

/// Embedding rows are drawn from this symmetric range.
pub const EMBEDDING_INIT_RANGE: f64 = 0.05;
