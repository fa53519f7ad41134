//! Max pooling and nearest-neighbor upsampling.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Argmax indices (flat, into the input) recorded for the backward pass.
#[derive(Debug)]
pub struct MaxPoolCache {
    pub argmax: Vec<usize>,
    in_shape: Vec<usize>,
}

/// Max pool over `[B, C, H, W]`. Ties resolve to the first maximum in
/// row-major window order, so the backward routing is deterministic.
pub fn max_pool2d<E: Element>(
    x: &Tensor<E>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<E>, MaxPoolCache)> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(Error::ShapeMismatch {
            op: "max_pool2d",
            expected: "[B, C, H, W]".to_string(),
            got: format!("{:?}", shape),
        });
    }
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (wh, ww) = window;
    let (sh, sw) = stride;
    if wh > h || ww > w {
        return Err(Error::ShapeMismatch {
            op: "max_pool2d",
            expected: format!("window at most {}x{}", h, w),
            got: format!("{}x{}", wh, ww),
        });
    }
    let ho = (h - wh) / sh + 1;
    let wo = (w - ww) / sw + 1;

    let mut y = vec![E::ZERO; b * c * ho * wo];
    let mut argmax = vec![0usize; b * c * ho * wo];
    for bi in 0..b {
        for ci in 0..c {
            let plane_base = (bi * c + ci) * h * w;
            let out_base = (bi * c + ci) * ho * wo;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = E::neg_infinity();
                    let mut best_idx = 0usize;
                    for ky in 0..wh {
                        for kx in 0..ww {
                            let idx = plane_base + (oy * sh + ky) * w + (ox * sw + kx);
                            let v = x.data()[idx];
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    y[out_base + oy * wo + ox] = best;
                    argmax[out_base + oy * wo + ox] = best_idx;
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(&[b, c, ho, wo], y)?,
        MaxPoolCache {
            argmax,
            in_shape: shape.to_vec(),
        },
    ))
}

/// Scatters output gradients to the recorded argmax cells.
pub fn max_pool2d_backward<E: Element>(cache: &MaxPoolCache, dy: &Tensor<E>) -> Tensor<E> {
    assert_eq!(dy.len(), cache.argmax.len(), "max_pool2d backward shape");
    let mut dx = Tensor::zeros(&cache.in_shape);
    let data = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
        data[idx] += g;
    }
    dx
}

/// Nearest-neighbor 2x upsampling of `[B, C, H, W]`.
pub fn upsample2x_nearest<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(Error::ShapeMismatch {
            op: "upsample2x",
            expected: "[B, C, H, W]".to_string(),
            got: format!("{:?}", shape),
        });
    }
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let mut y = vec![E::ZERO; b * c * 4 * h * w];
    let (ho, wo) = (2 * h, 2 * w);
    for p in 0..b * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut y[p * ho * wo..(p + 1) * ho * wo];
        for oy in 0..ho {
            let sy = oy / 2;
            for ox in 0..wo {
                dst[oy * wo + ox] = src[sy * w + ox / 2];
            }
        }
    }
    Tensor::from_vec(&[b, c, ho, wo], y)
}

/// Sums each 2x2 output block back into its source cell.
pub fn upsample2x_nearest_backward<E: Element>(dy: &Tensor<E>, in_shape: &[usize]) -> Tensor<E> {
    let (b, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    assert_eq!(dy.shape(), &[b, c, 2 * h, 2 * w], "upsample backward shape");
    let (ho, wo) = (2 * h, 2 * w);
    let mut dx = Tensor::zeros(in_shape);
    let data = dx.data_mut();
    for p in 0..b * c {
        let src = &dy.data()[p * ho * wo..(p + 1) * ho * wo];
        let dst = &mut data[p * h * w..(p + 1) * h * w];
        for oy in 0..ho {
            let sy = oy / 2;
            for ox in 0..wo {
                dst[sy * w + ox / 2] += src[oy * wo + ox];
            }
        }
    }
    dx
}
