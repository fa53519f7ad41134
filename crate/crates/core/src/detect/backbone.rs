//! The encoder-decoder backbone and the three head networks.

use rand_chacha::ChaCha20Rng;

use crate::detect::{BackboneConfig, DetectorOutput};
use crate::error::{Error, Result};
use crate::nn::{
    he_normal, relu, relu_backward_inplace, sigmoid, upsample2x_nearest,
    upsample2x_nearest_backward, BatchNorm2d, BatchNormCache, Conv2d, Conv2dCache, LayerMode,
};
use crate::tensor::{Element, Tensor};

/// Conv -> BatchNorm -> ReLU.
#[derive(Debug, Clone)]
struct ConvBlock<E: Element> {
    conv: Conv2d<E>,
    bn: BatchNorm2d<E>,
}

struct ConvBlockCache<E: Element> {
    conv: Conv2dCache<E>,
    bn: BatchNormCache<E>,
    relu_mask: Vec<bool>,
}

impl<E: Element> ConvBlock<E> {
    fn new(cin: usize, cout: usize, k: usize, stride: usize, rng: &mut ChaCha20Rng) -> Self {
        let mut conv = Conv2d::same(cin, cout, k, stride);
        conv.weight = he_normal(&[cout, cin, k, k], cin * k * k, rng).with_grad();
        ConvBlock {
            conv,
            bn: BatchNorm2d::new(cout, 1e-5, 0.1),
        }
    }

    fn forward(&mut self, x: &Tensor<E>, mode: LayerMode) -> Result<(Tensor<E>, ConvBlockCache<E>)> {
        let (y, conv) = self.conv.forward(x)?;
        let (y, bn) = self.bn.forward(&y, mode)?;
        let (y, relu_mask) = relu(&y);
        Ok((y, ConvBlockCache { conv, bn, relu_mask }))
    }

    fn backward(&mut self, cache: &ConvBlockCache<E>, dy: &Tensor<E>) -> Result<Tensor<E>> {
        let mut dy = dy.clone();
        relu_backward_inplace(&cache.relu_mask, dy.data_mut());
        let dy = self.bn.backward(&cache.bn, &dy)?;
        self.conv.backward(&cache.conv, &dy)
    }

    fn zero_grads(&mut self) {
        self.conv.zero_grads();
        self.bn.zero_grads();
    }
}

/// Conv3x3 -> ReLU -> Conv1x1 head.
#[derive(Debug, Clone)]
struct Head<E: Element> {
    conv: Conv2d<E>,
    out: Conv2d<E>,
}

struct HeadCache<E: Element> {
    conv: Conv2dCache<E>,
    relu_mask: Vec<bool>,
    out: Conv2dCache<E>,
}

impl<E: Element> Head<E> {
    fn new(channels: usize, out_channels: usize, out_bias: f64, rng: &mut ChaCha20Rng) -> Self {
        let mut conv = Conv2d::same(channels, channels, 3, 1);
        conv.weight = he_normal(&[channels, channels, 3, 3], channels * 9, rng).with_grad();
        let mut out = Conv2d::same(channels, out_channels, 1, 1);
        out.weight = he_normal(&[out_channels, channels, 1, 1], channels, rng).with_grad();
        for b in out.bias.data_mut() {
            *b = E::from_f64(out_bias);
        }
        Head { conv, out }
    }

    fn forward(&mut self, x: &Tensor<E>) -> Result<(Tensor<E>, HeadCache<E>)> {
        let (y, conv) = self.conv.forward(x)?;
        let (y, relu_mask) = relu(&y);
        let (y, out) = self.out.forward(&y)?;
        Ok((y, HeadCache { conv, relu_mask, out }))
    }

    fn backward(&mut self, cache: &HeadCache<E>, dy: &Tensor<E>) -> Result<Tensor<E>> {
        let mut d = self.out.backward(&cache.out, dy)?;
        relu_backward_inplace(&cache.relu_mask, d.data_mut());
        self.conv.backward(&cache.conv, &d)
    }

    fn zero_grads(&mut self) {
        self.conv.zero_grads();
        self.out.zero_grads();
    }
}

/// The full detector: backbone plus heatmap, offset, and radius heads.
///
/// 96x96 input -> F `[head_channels, 24, 24]` -> heatmap `[C, 24, 24]`,
/// offsets `[2, 24, 24]`, radii `[1, 24, 24]`.
#[derive(Debug, Clone)]
pub struct Detector<E: Element> {
    pub config: BackboneConfig,
    stem: ConvBlock<E>,
    down1: ConvBlock<E>,
    down2: ConvBlock<E>,
    down3: ConvBlock<E>,
    skip: Conv2d<E>,
    fuse: ConvBlock<E>,
    head_hm: Head<E>,
    head_off: Head<E>,
    head_rad: Head<E>,
}

/// Batched raw outputs (pre-sigmoid heatmap) kept for loss computation.
pub struct BatchOutputs<E: Element> {
    pub hm_logits: Tensor<E>,
    pub offsets: Tensor<E>,
    pub radii: Tensor<E>,
    /// Pre-head feature map at stride R, shared with the contour network.
    pub features: Tensor<E>,
}

pub struct DetectorCaches<E: Element> {
    stem: ConvBlockCache<E>,
    down1: ConvBlockCache<E>,
    down2: ConvBlockCache<E>,
    down2_out_shape: Vec<usize>,
    down3: ConvBlockCache<E>,
    down3_out_shape: Vec<usize>,
    skip: Conv2dCache<E>,
    fuse: ConvBlockCache<E>,
    head_hm: HeadCache<E>,
    head_off: HeadCache<E>,
    head_rad: HeadCache<E>,
}

/// Initial bias of the heatmap head: sigmoid(-ln 9) ~= 0.1, keeping the
/// focal loss off the saturated background early in training.
const HEATMAP_PRIOR_BIAS: f64 = -2.1972245773362196;

impl<E: Element> Detector<E> {
    pub fn new(config: &BackboneConfig, rng: &mut ChaCha20Rng) -> Self {
        let [c1, c2, c3] = config.stage_channels;
        let hc = config.head_channels;
        let stem = ConvBlock::new(3, c1, 3, 1, rng);
        let down1 = ConvBlock::new(c1, c1, 3, 2, rng);
        let down2 = ConvBlock::new(c1, c2, 3, 2, rng);
        let down3 = ConvBlock::new(c2, c3, 3, 2, rng);
        let mut skip = Conv2d::same(c2, c3, 1, 1);
        skip.weight = he_normal(&[c3, c2, 1, 1], c2, rng).with_grad();
        let fuse = ConvBlock::new(c3, hc, 3, 1, rng);
        let head_hm = Head::new(hc, config.class_count, HEATMAP_PRIOR_BIAS, rng);
        let head_off = Head::new(hc, 2, 0.0, rng);
        let head_rad = Head::new(hc, 1, 0.0, rng);
        Detector {
            config: config.clone(),
            stem,
            down1,
            down2,
            down3,
            skip,
            fuse,
            head_hm,
            head_off,
            head_rad,
        }
    }

    fn check_input(&self, x: &Tensor<E>) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::ShapeMismatch {
                op: "detector_forward",
                expected: "[B, 3, H, W]".to_string(),
                got: format!("{:?}", s),
            });
        }
        if s[2] % 8 != 0 || s[3] % 8 != 0 {
            return Err(Error::Config(format!(
                "detector input extents must be divisible by 8 (pad the image), got {}x{}",
                s[3], s[2]
            )));
        }
        Ok(())
    }

    /// Batched forward pass keeping every layer cache for backward.
    pub fn forward_batch(
        &mut self,
        x: &Tensor<E>,
        mode: LayerMode,
    ) -> Result<(BatchOutputs<E>, DetectorCaches<E>)> {
        self.check_input(x)?;
        let (s0, stem) = self.stem.forward(x, mode)?;
        let (s1, down1) = self.down1.forward(&s0, mode)?;
        let (s2, down2) = self.down2.forward(&s1, mode)?;
        let (s3, down3) = self.down3.forward(&s2, mode)?;

        let up = upsample2x_nearest(&s3)?;
        let (sk, skip) = self.skip.forward(&s2)?;
        let mut fused_in = up;
        for (a, b) in fused_in.data_mut().iter_mut().zip(sk.data()) {
            *a += *b;
        }
        let (features, fuse) = self.fuse.forward(&fused_in, mode)?;

        let (hm_logits, head_hm) = self.head_hm.forward(&features)?;
        let (offsets, head_off) = self.head_off.forward(&features)?;
        let (radii, head_rad) = self.head_rad.forward(&features)?;

        Ok((
            BatchOutputs {
                hm_logits,
                offsets,
                radii,
                features,
            },
            DetectorCaches {
                stem,
                down1,
                down2,
                down2_out_shape: s2.shape().to_vec(),
                down3,
                down3_out_shape: s3.shape().to_vec(),
                skip,
                fuse,
                head_hm,
                head_off,
                head_rad,
            },
        ))
    }

    /// Backward through heads and backbone. `d_features` carries external
    /// gradient w.r.t. the shared feature map (from the contour network) and
    /// may be zero.
    pub fn backward(
        &mut self,
        caches: &DetectorCaches<E>,
        d_hm_logits: &Tensor<E>,
        d_offsets: &Tensor<E>,
        d_radii: &Tensor<E>,
        d_features: &Tensor<E>,
    ) -> Result<()> {
        let mut df = self.head_hm.backward(&caches.head_hm, d_hm_logits)?;
        let d_off = self.head_off.backward(&caches.head_off, d_offsets)?;
        let d_rad = self.head_rad.backward(&caches.head_rad, d_radii)?;
        for ((a, b), c) in df
            .data_mut()
            .iter_mut()
            .zip(d_off.data())
            .zip(d_rad.data())
        {
            *a += *b + *c;
        }
        for (a, b) in df.data_mut().iter_mut().zip(d_features.data()) {
            *a += *b;
        }

        let d_fused = self.fuse.backward(&caches.fuse, &df)?;
        let d_s2_skip = self.skip.backward(&caches.skip, &d_fused)?;
        let d_s3 = upsample2x_nearest_backward(&d_fused, &caches.down3_out_shape);
        let mut d_s2 = self.down3.backward(&caches.down3, &d_s3)?;
        debug_assert_eq!(d_s2.shape(), caches.down2_out_shape.as_slice());
        for (a, b) in d_s2.data_mut().iter_mut().zip(d_s2_skip.data()) {
            *a += *b;
        }
        let d_s1 = self.down2.backward(&caches.down2, &d_s2)?;
        let d_s0 = self.down1.backward(&caches.down1, &d_s1)?;
        self.stem.backward(&caches.stem, &d_s0)?;
        Ok(())
    }

    /// Deterministic single-image inference; returns the sigmoid heatmap
    /// output plus the shared feature map `[head_channels, H/R, W/R]`.
    pub fn forward_eval(&mut self, image: &Tensor<E>) -> Result<(DetectorOutput<E>, Tensor<E>)> {
        let s = image.shape();
        if s.len() != 3 {
            return Err(Error::ShapeMismatch {
                op: "detector_forward",
                expected: "[3, H, W]".to_string(),
                got: format!("{:?}", s),
            });
        }
        let batched = image.clone().reshaped(&[1, s[0], s[1], s[2]])?;
        let (out, _) = self.forward_batch(&batched, LayerMode::Eval)?;
        let (gh, gw) = (out.hm_logits.shape()[2], out.hm_logits.shape()[3]);
        let c = self.config.class_count;
        let heatmap = sigmoid(&out.hm_logits).reshaped(&[c, gh, gw])?;
        let offsets = out.offsets.reshaped(&[2, gh, gw])?;
        let radii = out.radii.reshaped(&[1, gh, gw])?;
        let features = out
            .features
            .reshaped(&[self.config.head_channels, gh, gw])?;
        Ok((
            DetectorOutput {
                heatmap,
                offsets,
                radii,
            },
            features,
        ))
    }

    pub fn zero_grads(&mut self) {
        self.stem.zero_grads();
        self.down1.zero_grads();
        self.down2.zero_grads();
        self.down3.zero_grads();
        self.skip.zero_grads();
        self.fuse.zero_grads();
        self.head_hm.zero_grads();
        self.head_off.zero_grads();
        self.head_rad.zero_grads();
    }

    /// Stable-ordered (name, tensor) pairs for the optimizer and checkpoints.
    pub fn named_params(&mut self) -> Vec<(String, &mut Tensor<E>)> {
        let mut out: Vec<(String, &mut Tensor<E>)> = Vec::new();
        let blocks: [(&str, &mut ConvBlock<E>); 5] = [
            ("stem", &mut self.stem),
            ("down1", &mut self.down1),
            ("down2", &mut self.down2),
            ("down3", &mut self.down3),
            ("fuse", &mut self.fuse),
        ];
        for (name, b) in blocks {
            out.push((format!("detector.{name}.conv.weight"), &mut b.conv.weight));
            out.push((format!("detector.{name}.conv.bias"), &mut b.conv.bias));
            out.push((format!("detector.{name}.bn.gamma"), &mut b.bn.gamma));
            out.push((format!("detector.{name}.bn.beta"), &mut b.bn.beta));
        }
        out.push(("detector.skip.weight".to_string(), &mut self.skip.weight));
        out.push(("detector.skip.bias".to_string(), &mut self.skip.bias));
        let heads: [(&str, &mut Head<E>); 3] = [
            ("head_hm", &mut self.head_hm),
            ("head_off", &mut self.head_off),
            ("head_rad", &mut self.head_rad),
        ];
        for (name, h) in heads {
            out.push((format!("detector.{name}.conv.weight"), &mut h.conv.weight));
            out.push((format!("detector.{name}.conv.bias"), &mut h.conv.bias));
            out.push((format!("detector.{name}.out.weight"), &mut h.out.weight));
            out.push((format!("detector.{name}.out.bias"), &mut h.out.bias));
        }
        out
    }

    /// Batch-norm running statistics (checkpointed but not optimized).
    pub fn named_buffers(&mut self) -> Vec<(String, &mut Tensor<E>)> {
        let mut out: Vec<(String, &mut Tensor<E>)> = Vec::new();
        let blocks: [(&str, &mut ConvBlock<E>); 5] = [
            ("stem", &mut self.stem),
            ("down1", &mut self.down1),
            ("down2", &mut self.down2),
            ("down3", &mut self.down3),
            ("fuse", &mut self.fuse),
        ];
        for (name, b) in blocks {
            out.push((
                format!("detector.{name}.bn.running_mean"),
                &mut b.bn.running_mean,
            ));
            out.push((
                format!("detector.{name}.bn.running_var"),
                &mut b.bn.running_var,
            ));
        }
        out
    }
}
