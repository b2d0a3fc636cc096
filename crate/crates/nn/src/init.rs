//! Parameter initialization.

use crate::scalar::Real;
use crate::tensor::Tensor;
use rand::RngExt;

/// Xavier/Glorot uniform: U(-limit, limit) with limit = sqrt(6/(fan_in+fan_out)).
///
/// Sampling happens in f64 so f32 and f64 models built from the same seed
/// share the same random stream.
pub fn xavier_uniform<F: Real>(
    tensor: &mut Tensor<F>,
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl rand::Rng,
) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in tensor.data_mut() {
        *v = F::from_f64(rng.random_range(-limit..limit));
    }
}
