//! Neural-network layers with explicit forward/backward passes.
//!
//! Each layer returns a cache from `forward` that its `backward` consumes;
//! parameter gradients accumulate into the tensors' grad slots. There is no
//! graph: composites (the detector stack, the contour network) wire their
//! backward passes by hand and are verified against finite differences.

mod adam;
mod conv;
mod gradcheck;
mod init;
mod norm;
mod pool;
mod sample;

pub use adam::{Adam, AdamConfig};
pub use conv::{col2im, im2col, Conv2d, Conv2dCache};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use init::he_normal;
pub use norm::{BatchNorm2d, BatchNormCache};
pub use pool::{
    max_pool2d, max_pool2d_backward, upsample2x_nearest, upsample2x_nearest_backward, MaxPoolCache,
};
pub use sample::{bilinear_sample, bilinear_sample_backward, BilinearCache};

use crate::tensor::{Element, Tensor};

/// Whether stateful layers (batch norm) use batch or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerMode {
    Train,
    Eval,
}

/// Elementwise max(0, x). Returns the output and the active mask for backward.
pub fn relu<E: Element>(x: &Tensor<E>) -> (Tensor<E>, Vec<bool>) {
    let mask: Vec<bool> = x.data().iter().map(|&v| v > E::ZERO).collect();
    let y = x.map(|v| v.max(E::ZERO));
    (y, mask)
}

/// Routes gradients through the positive cells recorded by [`relu`].
pub fn relu_backward<E: Element>(mask: &[bool], dy: &Tensor<E>) -> Tensor<E> {
    assert_eq!(mask.len(), dy.len(), "relu mask length");
    let data = dy
        .data()
        .iter()
        .zip(mask)
        .map(|(&g, &on)| if on { g } else { E::ZERO })
        .collect();
    Tensor::from_vec(dy.shape(), data).expect("shape preserved")
}

/// In-place relu backward over raw slices (hot path for composites).
pub fn relu_backward_inplace<E: Element>(mask: &[bool], dy: &mut [E]) {
    assert_eq!(mask.len(), dy.len(), "relu mask length");
    for (g, &on) in dy.iter_mut().zip(mask) {
        if !on {
            *g = E::ZERO;
        }
    }
}

/// Logistic sigmoid, elementwise.
pub fn sigmoid<E: Element>(x: &Tensor<E>) -> Tensor<E> {
    x.map(|v| E::ONE / (E::ONE + (-v).exp()))
}
