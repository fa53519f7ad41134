//! 2-D convolution (cross-correlation) via im2col + GEMM.

use crate::error::{Error, Result};
use crate::tensor::{matmul_acc, matmul_nt, matmul_tn, Element, Tensor};

/// Convolution layer over `[B, C_in, H, W]` inputs.
///
/// Weights are `[C_out, C_in, kh, kw]`, cross-correlation convention (no
/// kernel flip). Padding is zero-fill.
#[derive(Debug, Clone)]
pub struct Conv2d<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    in_channels: usize,
    out_channels: usize,
    kernel: (usize, usize),
}

/// Forward cache: the im2col matrices, one `[C_in*kh*kw, Ho*Wo]` block per
/// batch item, plus the input spatial extents for col2im.
#[derive(Debug)]
pub struct Conv2dCache<E: Element> {
    cols: Vec<E>,
    batch: usize,
    in_hw: (usize, usize),
    out_hw: (usize, usize),
}

impl<E: Element> Conv2d<E> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Self {
        let weight =
            Tensor::zeros(&[out_channels, in_channels, kernel.0, kernel.1]).with_grad();
        let bias = Tensor::zeros(&[out_channels]).with_grad();
        Conv2d {
            weight,
            bias,
            stride,
            padding,
            in_channels,
            out_channels,
            kernel,
        }
    }

    /// Convenience constructor for odd kernels with "same" spatial output at
    /// stride 1 (or exact halving at stride 2).
    pub fn same(in_channels: usize, out_channels: usize, k: usize, stride: usize) -> Self {
        assert!(k % 2 == 1, "same-padding convolution requires an odd kernel");
        Self::new(
            in_channels,
            out_channels,
            (k, k),
            (stride, stride),
            (k / 2, k / 2),
        )
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> (usize, usize) {
        self.kernel
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                expected: format!("spatial extent >= kernel {:?} with padding {:?}", self.kernel, self.padding),
                got: format!("input {}x{}", h, w),
            });
        }
        Ok(((h + 2 * ph - kh) / sh + 1, (w + 2 * pw - kw) / sw + 1))
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<(Tensor<E>, Conv2dCache<E>)> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != self.in_channels {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                expected: format!("[B, {}, H, W]", self.in_channels),
                got: format!("{:?}", shape),
            });
        }
        let (b, h, w) = (shape[0], shape[2], shape[3]);
        let (ho, wo) = self.output_hw(h, w)?;
        let (kh, kw) = self.kernel;
        let kk = self.in_channels * kh * kw;
        let out_spatial = ho * wo;

        let mut cols = vec![E::ZERO; b * kk * out_spatial];
        for bi in 0..b {
            im2col(
                &x.data()[bi * self.in_channels * h * w..(bi + 1) * self.in_channels * h * w],
                self.in_channels,
                h,
                w,
                self.kernel,
                self.stride,
                self.padding,
                (ho, wo),
                &mut cols[bi * kk * out_spatial..(bi + 1) * kk * out_spatial],
            );
        }

        let mut y = vec![E::ZERO; b * self.out_channels * out_spatial];
        for bi in 0..b {
            matmul_acc(
                self.out_channels,
                kk,
                out_spatial,
                self.weight.data(),
                &cols[bi * kk * out_spatial..(bi + 1) * kk * out_spatial],
                &mut y[bi * self.out_channels * out_spatial..(bi + 1) * self.out_channels * out_spatial],
                false,
            );
        }
        for bi in 0..b {
            for co in 0..self.out_channels {
                let base = (bi * self.out_channels + co) * out_spatial;
                let bv = self.bias.data()[co];
                for v in &mut y[base..base + out_spatial] {
                    *v += bv;
                }
            }
        }

        let y = Tensor::from_vec(&[b, self.out_channels, ho, wo], y)?;
        Ok((
            y,
            Conv2dCache {
                cols,
                batch: b,
                in_hw: (h, w),
                out_hw: (ho, wo),
            },
        ))
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &Conv2dCache<E>, dy: &Tensor<E>) -> Result<Tensor<E>> {
        let (ho, wo) = cache.out_hw;
        let b = cache.batch;
        let expected = [b, self.out_channels, ho, wo];
        if dy.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "conv2d backward",
                expected: format!("{:?}", expected),
                got: format!("{:?}", dy.shape()),
            });
        }
        let (kh, kw) = self.kernel;
        let kk = self.in_channels * kh * kw;
        let out_spatial = ho * wo;
        let (h, w) = cache.in_hw;

        // dW[Cout, kk] += dY_b[Cout, S] @ cols_b[kk, S]^T; db += row sums.
        {
            let dw = self.weight.grad_mut();
            for bi in 0..b {
                matmul_nt(
                    self.out_channels,
                    out_spatial,
                    kk,
                    &dy.data()[bi * self.out_channels * out_spatial..(bi + 1) * self.out_channels * out_spatial],
                    &cache.cols[bi * kk * out_spatial..(bi + 1) * kk * out_spatial],
                    dw,
                    true,
                );
            }
        }
        {
            let db = self.bias.grad_mut();
            for bi in 0..b {
                for co in 0..self.out_channels {
                    let base = (bi * self.out_channels + co) * out_spatial;
                    let mut s = E::ZERO;
                    for &g in &dy.data()[base..base + out_spatial] {
                        s += g;
                    }
                    db[co] += s;
                }
            }
        }

        // dX_b = col2im(W[Cout, kk]^T @ dY_b[Cout, S])
        let mut dx = vec![E::ZERO; b * self.in_channels * h * w];
        let mut dcols = vec![E::ZERO; kk * out_spatial];
        for bi in 0..b {
            matmul_tn(
                kk,
                self.out_channels,
                out_spatial,
                self.weight.data(),
                &dy.data()[bi * self.out_channels * out_spatial..(bi + 1) * self.out_channels * out_spatial],
                &mut dcols,
                false,
            );
            col2im(
                &dcols,
                self.in_channels,
                h,
                w,
                self.kernel,
                self.stride,
                self.padding,
                (ho, wo),
                &mut dx[bi * self.in_channels * h * w..(bi + 1) * self.in_channels * h * w],
            );
        }
        Tensor::from_vec(&[b, self.in_channels, h, w], dx)
    }

    pub fn zero_grads(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}

/// Unfolds one image `[C, H, W]` into `[C*kh*kw, Ho*Wo]` (zero padding).
#[allow(clippy::too_many_arguments)]
pub fn im2col<E: Element>(
    x: &[E],
    c: usize,
    h: usize,
    w: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
    out_hw: (usize, usize),
    cols: &mut [E],
) {
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    let (ho, wo) = out_hw;
    debug_assert_eq!(cols.len(), c * kh * kw * ho * wo);

    let mut row = 0usize;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let out_row = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    let dst = &mut out_row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(E::ZERO);
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            E::ZERO
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds a `[C*kh*kw, Ho*Wo]` column matrix back into `[C, H, W]`.
#[allow(clippy::too_many_arguments)]
pub fn col2im<E: Element>(
    cols: &[E],
    c: usize,
    h: usize,
    w: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
    out_hw: (usize, usize),
    x: &mut [E],
) {
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    let (ho, wo) = out_hw;
    debug_assert_eq!(cols.len(), c * kh * kw * ho * wo);
    debug_assert_eq!(x.len(), c * h * w);

    let mut row = 0usize;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let col_row = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &col_row[oy * wo..(oy + 1) * wo];
                    for (ox, &s) in src.iter().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += s;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}
