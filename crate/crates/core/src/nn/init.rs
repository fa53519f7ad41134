//! Seeded weight initialization.

use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Element, Tensor};

/// He-normal initialization: N(0, sqrt(2 / fan_in)), sampled in f64 so the
/// same seed produces the same weights at either precision.
pub fn he_normal<E: Element>(shape: &[usize], fan_in: usize, rng: &mut ChaCha20Rng) -> Tensor<E> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("valid normal");
    let n: usize = shape.iter().product();
    let data: Vec<E> = (0..n)
        .map(|_| E::from_f64(normal.sample(rng)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches length")
}
