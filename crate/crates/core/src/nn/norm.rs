//! Batch normalization over `[B, C, H, W]`.

use crate::error::{Error, Result};
use crate::nn::LayerMode;
use crate::tensor::{Element, Tensor};

/// Channelwise batch norm with running statistics for eval mode.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<E: Element> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    pub running_mean: Tensor<E>,
    pub running_var: Tensor<E>,
    pub eps: E,
    pub momentum: E,
    channels: usize,
}

#[derive(Debug)]
pub struct BatchNormCache<E: Element> {
    mode: LayerMode,
    xhat: Vec<E>,
    inv_std: Vec<E>, // per channel
    centered: Vec<E>,
    batch_spatial: usize,
    shape: Vec<usize>,
}

impl<E: Element> BatchNorm2d<E> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        assert!(eps > 0.0, "batch norm epsilon must be positive");
        BatchNorm2d {
            gamma: Tensor::filled(&[channels], E::ONE).with_grad(),
            beta: Tensor::zeros(&[channels]).with_grad(),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], E::ONE),
            eps: E::from_f64(eps),
            momentum: E::from_f64(momentum),
            channels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn forward(&mut self, x: &Tensor<E>, mode: LayerMode) -> Result<(Tensor<E>, BatchNormCache<E>)> {
        let shape = x.shape().to_vec();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                expected: format!("[B, {}, H, W]", self.channels),
                got: format!("{:?}", shape),
            });
        }
        let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let n = b * h * w;
        let spatial = h * w;
        let nf = E::from_f64(n as f64);

        let mut y = vec![E::ZERO; x.len()];
        let mut xhat = vec![E::ZERO; x.len()];
        let mut centered = vec![E::ZERO; x.len()];
        let mut inv_std = vec![E::ZERO; c];

        for ci in 0..c {
            let (mean, var) = match mode {
                LayerMode::Train => {
                    let mut sum = E::ZERO;
                    for bi in 0..b {
                        let base = (bi * c + ci) * spatial;
                        for &v in &x.data()[base..base + spatial] {
                            sum += v;
                        }
                    }
                    let mean = sum / nf;
                    let mut sq = E::ZERO;
                    for bi in 0..b {
                        let base = (bi * c + ci) * spatial;
                        for &v in &x.data()[base..base + spatial] {
                            let d = v - mean;
                            sq += d * d;
                        }
                    }
                    let var = sq / nf; // population variance for normalization
                    // running stats use the unbiased estimate
                    let unbiased = if n > 1 {
                        sq / E::from_f64((n - 1) as f64)
                    } else {
                        sq
                    };
                    let m = self.momentum;
                    self.running_mean.data_mut()[ci] =
                        (E::ONE - m) * self.running_mean.data()[ci] + m * mean;
                    self.running_var.data_mut()[ci] =
                        (E::ONE - m) * self.running_var.data()[ci] + m * unbiased;
                    (mean, var)
                }
                LayerMode::Eval => (self.running_mean.data()[ci], self.running_var.data()[ci]),
            };

            let istd = E::ONE / (var + self.eps).sqrt();
            inv_std[ci] = istd;
            let g = self.gamma.data()[ci];
            let bt = self.beta.data()[ci];
            for bi in 0..b {
                let base = (bi * c + ci) * spatial;
                for i in base..base + spatial {
                    let cent = x.data()[i] - mean;
                    let xh = cent * istd;
                    centered[i] = cent;
                    xhat[i] = xh;
                    y[i] = g * xh + bt;
                }
            }
        }

        let y = Tensor::from_vec(&shape, y)?;
        Ok((
            y,
            BatchNormCache {
                mode,
                xhat,
                inv_std,
                centered,
                batch_spatial: n,
                shape,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BatchNormCache<E>, dy: &Tensor<E>) -> Result<Tensor<E>> {
        if dy.shape() != cache.shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "batch_norm backward",
                expected: format!("{:?}", cache.shape),
                got: format!("{:?}", dy.shape()),
            });
        }
        let (b, c, h, w) = (
            cache.shape[0],
            cache.shape[1],
            cache.shape[2],
            cache.shape[3],
        );
        let spatial = h * w;
        let n = cache.batch_spatial;
        let nf = E::from_f64(n as f64);
        let mut dx = vec![E::ZERO; dy.len()];

        for ci in 0..c {
            let g = self.gamma.data()[ci];
            let istd = cache.inv_std[ci];

            let mut dgamma = E::ZERO;
            let mut dbeta = E::ZERO;
            for bi in 0..b {
                let base = (bi * c + ci) * spatial;
                for i in base..base + spatial {
                    dgamma += dy.data()[i] * cache.xhat[i];
                    dbeta += dy.data()[i];
                }
            }
            self.gamma.grad_mut()[ci] += dgamma;
            self.beta.grad_mut()[ci] += dbeta;

            match cache.mode {
                LayerMode::Eval => {
                    // running stats are constants: dx = dy * gamma * inv_std
                    let k = g * istd;
                    for bi in 0..b {
                        let base = (bi * c + ci) * spatial;
                        for i in base..base + spatial {
                            dx[i] = dy.data()[i] * k;
                        }
                    }
                }
                LayerMode::Train => {
                    // dxhat = dy * gamma
                    // dvar  = sum(dxhat * centered) * (-1/2) istd^3
                    // dmean = -istd * sum(dxhat) - 2/n * dvar * sum(centered)
                    let mut sum_dxhat = E::ZERO;
                    let mut sum_dxhat_cent = E::ZERO;
                    let mut sum_cent = E::ZERO;
                    for bi in 0..b {
                        let base = (bi * c + ci) * spatial;
                        for i in base..base + spatial {
                            let dxh = dy.data()[i] * g;
                            sum_dxhat += dxh;
                            sum_dxhat_cent += dxh * cache.centered[i];
                            sum_cent += cache.centered[i];
                        }
                    }
                    let half = E::from_f64(0.5);
                    let two = E::from_f64(2.0);
                    let dvar = -half * istd * istd * istd * sum_dxhat_cent;
                    let dmean = -istd * sum_dxhat - two / nf * dvar * sum_cent;
                    for bi in 0..b {
                        let base = (bi * c + ci) * spatial;
                        for i in base..base + spatial {
                            let dxh = dy.data()[i] * g;
                            dx[i] = dxh * istd
                                + dvar * two * cache.centered[i] / nf
                                + dmean / nf;
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&cache.shape, dx)
    }

    pub fn zero_grads(&mut self) {
        self.gamma.zero_grad();
        self.beta.zero_grad();
    }
}
