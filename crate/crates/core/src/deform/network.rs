//! The contour network: circular-conv backbone blocks with residuals,
//! a fusion stage with a global vertex max, and a three-stage prediction
//! head emitting per-vertex offsets.

use rand_chacha::ChaCha20Rng;

use crate::deform::{CircularConv, SnakeConfig, VertexFeatures};
use crate::error::{Error, Result};
use crate::nn::{max_pool2d, max_pool2d_backward, relu, relu_backward_inplace, MaxPoolCache};
use crate::tensor::{stable_sum, Element, Tensor};

/// Normalization over the vertex axis, per channel, with learned scale and
/// shift. Statistics are accumulated order-independently (sorted sums) so a
/// circular shift of the vertices shifts the output bitwise.
#[derive(Debug, Clone)]
pub struct SeqNorm<E: Element> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    eps: E,
    channels: usize,
}

pub struct SeqNormCache<E: Element> {
    xhat: Vec<E>,
    inv_std: Vec<E>,
    centered: Vec<E>,
    n: usize,
}

impl<E: Element> SeqNorm<E> {
    pub fn new(channels: usize) -> Self {
        SeqNorm {
            gamma: Tensor::filled(&[channels], E::ONE).with_grad(),
            beta: Tensor::zeros(&[channels]).with_grad(),
            eps: E::from_f64(1e-5),
            channels,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<(Tensor<E>, SeqNormCache<E>)> {
        let s = x.shape();
        if s.len() != 2 || s[1] != self.channels {
            return Err(Error::ShapeMismatch {
                op: "seq_norm",
                expected: format!("[N, {}]", self.channels),
                got: format!("{:?}", s),
            });
        }
        let (n, c) = (s[0], s[1]);
        let nf = E::from_f64(n as f64);
        let mut y = vec![E::ZERO; n * c];
        let mut xhat = vec![E::ZERO; n * c];
        let mut centered = vec![E::ZERO; n * c];
        let mut inv_std = vec![E::ZERO; c];
        let mut scratch: Vec<E> = Vec::with_capacity(n);

        for ci in 0..c {
            scratch.clear();
            scratch.extend((0..n).map(|i| x.data()[i * c + ci]));
            let mean = stable_sum(&mut scratch) / nf;
            scratch.clear();
            scratch.extend((0..n).map(|i| {
                let d = x.data()[i * c + ci] - mean;
                d * d
            }));
            let var = stable_sum(&mut scratch) / nf;
            let istd = E::ONE / (var + self.eps).sqrt();
            inv_std[ci] = istd;
            let (g, b) = (self.gamma.data()[ci], self.beta.data()[ci]);
            for i in 0..n {
                let cent = x.data()[i * c + ci] - mean;
                let xh = cent * istd;
                centered[i * c + ci] = cent;
                xhat[i * c + ci] = xh;
                y[i * c + ci] = g * xh + b;
            }
        }
        Ok((
            Tensor::from_vec(s, y)?,
            SeqNormCache {
                xhat,
                inv_std,
                centered,
                n,
            },
        ))
    }

    pub fn backward(&mut self, cache: &SeqNormCache<E>, dy: &Tensor<E>) -> Result<Tensor<E>> {
        let (n, c) = (cache.n, self.channels);
        let nf = E::from_f64(n as f64);
        let mut dx = vec![E::ZERO; n * c];
        for ci in 0..c {
            let g = self.gamma.data()[ci];
            let istd = cache.inv_std[ci];
            let mut dgamma = E::ZERO;
            let mut dbeta = E::ZERO;
            let mut sum_dxhat = E::ZERO;
            let mut sum_dxhat_cent = E::ZERO;
            for i in 0..n {
                let idx = i * c + ci;
                let d = dy.data()[idx];
                dgamma += d * cache.xhat[idx];
                dbeta += d;
                let dxh = d * g;
                sum_dxhat += dxh;
                sum_dxhat_cent += dxh * cache.centered[idx];
            }
            self.gamma.grad_mut()[ci] += dgamma;
            self.beta.grad_mut()[ci] += dbeta;

            let half = E::from_f64(0.5);
            let two = E::from_f64(2.0);
            let dvar = -half * istd * istd * istd * sum_dxhat_cent;
            // centered values sum to ~0; keep the exact term anyway
            let mut sum_cent = E::ZERO;
            for i in 0..n {
                sum_cent += cache.centered[i * c + ci];
            }
            let dmean = -istd * sum_dxhat - two / nf * dvar * sum_cent;
            for i in 0..n {
                let idx = i * c + ci;
                let dxh = dy.data()[idx] * g;
                dx[idx] = dxh * istd + dvar * two * cache.centered[idx] / nf + dmean / nf;
            }
        }
        Tensor::from_vec(&[n, c], dx)
    }

    pub fn zero_grads(&mut self) {
        self.gamma.zero_grad();
        self.beta.zero_grad();
    }
}

struct Block<E: Element> {
    conv: CircularConv<E>,
    norm: SeqNorm<E>,
    residual: bool,
}

struct BlockCache<E: Element> {
    input: Tensor<E>,
    norm: SeqNormCache<E>,
    relu_mask: Vec<bool>,
}

impl<E: Element> Block<E> {
    fn forward(&self, x: &Tensor<E>) -> Result<(Tensor<E>, BlockCache<E>)> {
        let y = self.conv.forward(x)?;
        let (y, norm) = self.norm.forward(&y)?;
        let (mut y, relu_mask) = relu(&y);
        if self.residual {
            for (a, b) in y.data_mut().iter_mut().zip(x.data()) {
                *a += *b;
            }
        }
        Ok((
            y,
            BlockCache {
                input: x.clone(),
                norm,
                relu_mask,
            },
        ))
    }

    fn backward(&mut self, cache: &BlockCache<E>, dy: &Tensor<E>) -> Result<Tensor<E>> {
        let mut d = dy.clone();
        relu_backward_inplace(&cache.relu_mask, d.data_mut());
        let d = self.norm.backward(&cache.norm, &d)?;
        let mut dx = self.conv.backward(&cache.input, &d)?;
        if self.residual {
            for (a, b) in dx.data_mut().iter_mut().zip(dy.data()) {
                *a += *b;
            }
        }
        Ok(dx)
    }
}

/// Backbone + fusion + prediction over `[N, D+2]` vertex features.
pub struct ContourNet<E: Element> {
    pub config: SnakeConfig,
    blocks: Vec<Block<E>>,
    fusion: CircularConv<E>,
    pred1: CircularConv<E>,
    pred2: CircularConv<E>,
    pred3: CircularConv<E>,
    in_dim: usize,
}

pub struct NetCaches<E: Element> {
    blocks: Vec<BlockCache<E>>,
    concat: Tensor<E>,
    fusion_relu: Vec<bool>,
    pool: MaxPoolCache,
    joined: Tensor<E>,
    p1: Tensor<E>,
    p1_relu: Vec<bool>,
    p2: Tensor<E>,
    p2_relu: Vec<bool>,
}

impl<E: Element> ContourNet<E> {
    /// `feature_dim` is the channel count of the shared feature map; block 0
    /// consumes `feature_dim + 2` inputs per vertex.
    pub fn new(config: &SnakeConfig, feature_dim: usize, rng: &mut ChaCha20Rng) -> Self {
        config.validate().expect("contour network config");
        let in_dim = feature_dim + 2;
        let s = config.state_width;
        let mut blocks = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let cin = if i == 0 { in_dim } else { s };
            blocks.push(Block {
                conv: CircularConv::new(cin, s, config.kernel_size, rng),
                norm: SeqNorm::new(s),
                residual: i > 0,
            });
        }
        let fusion = CircularConv::new(config.depth * s, config.fusion_width, 1, rng);
        let pred1 = CircularConv::new(2 * config.fusion_width, config.prediction_width, 1, rng);
        let pred2 = CircularConv::new(config.prediction_width, config.prediction_width, 1, rng);
        let pred3 = CircularConv::new(config.prediction_width, 2, 1, rng);
        ContourNet {
            config: config.clone(),
            blocks,
            fusion,
            pred1,
            pred2,
            pred3,
            in_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Per-vertex offsets `[N, 2]` in stride units.
    pub fn forward(&self, vf: &VertexFeatures<E>) -> Result<(Tensor<E>, NetCaches<E>)> {
        let s = vf.shape();
        if s.len() != 2 || s[1] != self.in_dim {
            return Err(Error::ShapeMismatch {
                op: "snake_forward",
                expected: format!("[N, {}]", self.in_dim),
                got: format!("{:?}", s),
            });
        }
        let n = s[0];
        let width = self.config.state_width;

        let mut block_caches = Vec::with_capacity(self.blocks.len());
        let mut block_outputs: Vec<Tensor<E>> = Vec::with_capacity(self.blocks.len());
        let mut x = vf.clone();
        for block in &self.blocks {
            let (y, cache) = block.forward(&x)?;
            block_caches.push(cache);
            block_outputs.push(y.clone());
            x = y;
        }

        // concat all block outputs per vertex
        let depth = self.blocks.len();
        let mut concat = vec![E::ZERO; n * depth * width];
        for (bi, out) in block_outputs.iter().enumerate() {
            for i in 0..n {
                concat[i * depth * width + bi * width..i * depth * width + (bi + 1) * width]
                    .copy_from_slice(&out.data()[i * width..(i + 1) * width]);
            }
        }
        let concat = Tensor::from_vec(&[n, depth * width], concat)?;

        let fused_raw = self.fusion.forward(&concat)?;
        let (fused, fusion_relu) = relu(&fused_raw);

        // global max over vertices via a full-width pooling window on [1, C, 1, N]
        let fw = self.config.fusion_width;
        let mut transposed = vec![E::ZERO; fw * n];
        for i in 0..n {
            for c in 0..fw {
                transposed[c * n + i] = fused.data()[i * fw + c];
            }
        }
        let tview = Tensor::from_vec(&[1, fw, 1, n], transposed)?;
        let (gmax, pool) = max_pool2d(&tview, (1, n), (1, n))?;

        // join per-vertex features with the broadcast global vector
        let mut joined = vec![E::ZERO; n * 2 * fw];
        for i in 0..n {
            joined[i * 2 * fw..i * 2 * fw + fw]
                .copy_from_slice(&fused.data()[i * fw..(i + 1) * fw]);
            joined[i * 2 * fw + fw..(i + 1) * 2 * fw].copy_from_slice(gmax.data());
        }
        let joined = Tensor::from_vec(&[n, 2 * fw], joined)?;

        let p1_raw = self.pred1.forward(&joined)?;
        let (p1, p1_relu) = relu(&p1_raw);
        let p2_raw = self.pred2.forward(&p1)?;
        let (p2, p2_relu) = relu(&p2_raw);
        let offsets = self.pred3.forward(&p2)?;

        Ok((
            offsets,
            NetCaches {
                blocks: block_caches,
                concat,
                fusion_relu,
                pool,
                joined,
                p1,
                p1_relu,
                p2,
                p2_relu,
            },
        ))
    }

    /// Accumulates parameter grads; returns the vertex-feature gradient.
    pub fn backward(&mut self, caches: &NetCaches<E>, d_offsets: &Tensor<E>) -> Result<Tensor<E>> {
        let n = caches.concat.shape()[0];
        let fw = self.config.fusion_width;
        let width = self.config.state_width;
        let depth = self.blocks.len();

        let mut d = self.pred3.backward(&caches.p2, d_offsets)?;
        relu_backward_inplace(&caches.p2_relu, d.data_mut());
        let mut d = self.pred2.backward(&caches.p1, &d)?;
        relu_backward_inplace(&caches.p1_relu, d.data_mut());
        let d_joined = self.pred1.backward(&caches.joined, &d)?;

        // split join: direct per-vertex part + pooled global part
        let mut d_fused = vec![E::ZERO; n * fw];
        let mut d_gmax = vec![E::ZERO; fw];
        for i in 0..n {
            for c in 0..fw {
                d_fused[i * fw + c] += d_joined.data()[i * 2 * fw + c];
                d_gmax[c] += d_joined.data()[i * 2 * fw + fw + c];
            }
        }
        let d_gmax = Tensor::from_vec(&[1, fw, 1, 1], d_gmax)?;
        let d_trans = max_pool2d_backward(&caches.pool, &d_gmax);
        for c in 0..fw {
            for i in 0..n {
                d_fused[i * fw + c] += d_trans.data()[c * n + i];
            }
        }
        let mut d_fused = Tensor::from_vec(&[n, fw], d_fused)?;
        relu_backward_inplace(&caches.fusion_relu, d_fused.data_mut());
        let d_concat = self.fusion.backward(&caches.concat, &d_fused)?;

        // unstack concat gradient per block
        let mut d_outputs: Vec<Tensor<E>> = (0..depth)
            .map(|bi| {
                let mut g = vec![E::ZERO; n * width];
                for i in 0..n {
                    g[i * width..(i + 1) * width].copy_from_slice(
                        &d_concat.data()
                            [i * depth * width + bi * width..i * depth * width + (bi + 1) * width],
                    );
                }
                Tensor::from_vec(&[n, width], g).expect("block gradient")
            })
            .collect();

        // walk the residual chain backwards
        let mut acc = d_outputs.pop().expect("at least one block");
        for bi in (1..depth).rev() {
            let dx = self.blocks[bi].backward(&caches.blocks[bi], &acc)?;
            let mut next = d_outputs.pop().expect("block gradient");
            for (a, b) in next.data_mut().iter_mut().zip(dx.data()) {
                *a += *b;
            }
            acc = next;
        }
        self.blocks[0].backward(&caches.blocks[0], &acc)
    }

    pub fn zero_grads(&mut self) {
        for b in &mut self.blocks {
            b.conv.zero_grads();
            b.norm.zero_grads();
        }
        self.fusion.zero_grads();
        self.pred1.zero_grads();
        self.pred2.zero_grads();
        self.pred3.zero_grads();
    }

    pub fn named_params(&mut self) -> Vec<(String, &mut Tensor<E>)> {
        let mut out: Vec<(String, &mut Tensor<E>)> = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("snake.block{i}.conv.weight"), &mut b.conv.weight));
            out.push((format!("snake.block{i}.conv.bias"), &mut b.conv.bias));
            out.push((format!("snake.block{i}.norm.gamma"), &mut b.norm.gamma));
            out.push((format!("snake.block{i}.norm.beta"), &mut b.norm.beta));
        }
        out.push(("snake.fusion.weight".to_string(), &mut self.fusion.weight));
        out.push(("snake.fusion.bias".to_string(), &mut self.fusion.bias));
        let preds: [(&str, &mut CircularConv<E>); 3] = [
            ("pred1", &mut self.pred1),
            ("pred2", &mut self.pred2),
            ("pred3", &mut self.pred3),
        ];
        for (name, p) in preds {
            out.push((format!("snake.{name}.weight"), &mut p.weight));
            out.push((format!("snake.{name}.bias"), &mut p.bias));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn toy_config() -> SnakeConfig {
        SnakeConfig {
            vertex_count: 16,
            kernel_size: 9,
            depth: 8,
            state_width: 12,
            fusion_width: 10,
            prediction_width: 8,
            ..SnakeConfig::default()
        }
    }

    fn toy_features(n: usize, d: usize) -> Tensor<f64> {
        Tensor::from_vec(
            &[n, d],
            (0..n * d)
                .map(|i| ((i * 29 % 83) as f64 - 41.0) / 23.0)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_final_stage_gives_zero_offsets() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut net: ContourNet<f64> = ContourNet::new(&toy_config(), 6, &mut rng);
        for v in net.pred3.weight.data_mut() {
            *v = 0.0;
        }
        let vf = toy_features(16, 8);
        let (offsets, _) = net.forward(&vf).unwrap();
        assert!(offsets.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn snake_forward_is_exactly_shift_equivariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let net: ContourNet<f64> = ContourNet::new(&toy_config(), 6, &mut rng);
        let n = 16;
        let vf = toy_features(n, 8);
        let (base, _) = net.forward(&vf).unwrap();
        for s in 1..n {
            let shifted = Tensor::from_vec(
                &[n, 8],
                (0..n)
                    .flat_map(|i| vf.data()[((i + s) % n) * 8..((i + s) % n + 1) * 8].to_vec())
                    .collect(),
            )
            .unwrap();
            let (out, _) = net.forward(&shifted).unwrap();
            for i in 0..n {
                let expect = &base.data()[((i + s) % n) * 2..((i + s) % n + 1) * 2];
                let got = &out.data()[i * 2..(i + 1) * 2];
                assert_eq!(got, expect, "shift {s}, row {i}");
            }
        }
    }

    #[test]
    fn seq_norm_standardizes_per_channel() {
        let norm = SeqNorm::<f64>::new(2);
        let x = Tensor::from_vec(
            &[8, 2],
            (0..16).map(|i| (i as f64 * 1.3).sin() * 4.0 + 2.0).collect(),
        )
        .unwrap();
        let (y, _) = norm.forward(&x).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..8).map(|i| y.data()[i * 2 + c]).collect();
            let mean = vals.iter().sum::<f64>() / 8.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let net: ContourNet<f64> = ContourNet::new(&toy_config(), 6, &mut rng);
        let vf = toy_features(16, 7);
        assert!(net.forward(&vf).is_err());
    }
}
