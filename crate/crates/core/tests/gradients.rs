//! Finite-difference verification of every layer's backward pass and of the
//! composite detector and contour-network stacks, all at 64-bit precision.

mod common;

use common::{probe_values, weighted_sum};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use circleseg::data::CenterTarget;
use circleseg::deform::{
    contour_loss_with_grads, deform, deform_backward, CircularConv, ContourLossKind, ContourNet,
    SeqNorm, SnakeConfig,
};
use circleseg::detect::{focal_loss_with_grad, l1_at_centers, BackboneConfig, Detector};
use circleseg::geom::{circle_contour, Circle};
use circleseg::nn::{
    bilinear_sample, bilinear_sample_backward, grad_check, max_pool2d, max_pool2d_backward,
    sigmoid, BatchNorm2d, Conv2d, GradCheckConfig, LayerMode,
};
use circleseg::tensor::Tensor;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn random_tensor(shape: &[usize], salt: u64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, probe_values(n, salt)).unwrap()
}

// ---------------------------------------------------------------- conv2d

struct ConvProblem {
    conv: Conv2d<f64>,
    x: Tensor<f64>,
    probe: Vec<f64>,
}

impl ConvProblem {
    fn loss(&mut self) -> f64 {
        let (y, _) = self.conv.forward(&self.x).unwrap();
        weighted_sum(y.data(), &self.probe)
    }

    fn analytic(&mut self) -> Vec<(String, Vec<f64>)> {
        self.conv.zero_grads();
        let (y, cache) = self.conv.forward(&self.x).unwrap();
        let dy = Tensor::from_vec(y.shape(), self.probe.clone()).unwrap();
        let dx = self.conv.backward(&cache, &dy).unwrap();
        vec![
            ("x".to_string(), dx.data().to_vec()),
            ("weight".to_string(), self.conv.weight.grad().to_vec()),
            ("bias".to_string(), self.conv.bias.grad().to_vec()),
        ]
    }
}

#[test]
fn conv2d_backward_matches_finite_differences() {
    let mut conv = Conv2d::<f64>::same(2, 3, 3, 1);
    let mut r = rng(1);
    conv.weight = circleseg::nn::he_normal(&[3, 2, 3, 3], 18, &mut r).with_grad();
    let x = random_tensor(&[1, 2, 5, 5], 10);
    let (y, _) = conv.forward(&x).unwrap();
    let probe = probe_values(y.len(), 99);
    let mut p = ConvProblem { conv, x, probe };

    let report = grad_check(
        &mut p,
        &[("x", 50), ("weight", 54), ("bias", 3)],
        |s, name, i| match name {
            "x" => s.x.data()[i],
            "weight" => s.conv.weight.data()[i],
            _ => s.conv.bias.data()[i],
        },
        |s, name, i, v| match name {
            "x" => s.x.data_mut()[i] = v,
            "weight" => s.conv.weight.data_mut()[i] = v,
            _ => s.conv.bias.data_mut()[i] = v,
        },
        |s| s.loss(),
        |s| s.analytic(),
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-4), "worst: {}", report.worst);
}

#[test]
fn strided_conv_backward_matches_finite_differences() {
    let mut conv = Conv2d::<f64>::same(2, 2, 3, 2);
    let mut r = rng(2);
    conv.weight = circleseg::nn::he_normal(&[2, 2, 3, 3], 18, &mut r).with_grad();
    let x = random_tensor(&[2, 2, 6, 6], 11);
    let (y, _) = conv.forward(&x).unwrap();
    let probe = probe_values(y.len(), 98);
    let mut p = ConvProblem { conv, x, probe };
    let report = grad_check(
        &mut p,
        &[("x", 144), ("weight", 36), ("bias", 2)],
        |s, name, i| match name {
            "x" => s.x.data()[i],
            "weight" => s.conv.weight.data()[i],
            _ => s.conv.bias.data()[i],
        },
        |s, name, i, v| match name {
            "x" => s.x.data_mut()[i] = v,
            "weight" => s.conv.weight.data_mut()[i] = v,
            _ => s.conv.bias.data_mut()[i] = v,
        },
        |s| s.loss(),
        |s| s.analytic(),
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-4), "worst: {}", report.worst);
}

#[test]
fn linear_conv1x1_gradient_is_machine_exact() {
    // a 1x1 convolution is linear, so central differences are exact up to
    // rounding: the relative error must sit at the 1e-8 scale, not 1e-4
    let mut conv = Conv2d::<f64>::same(3, 2, 1, 1);
    let mut r = rng(3);
    conv.weight = circleseg::nn::he_normal(&[2, 3, 1, 1], 3, &mut r).with_grad();
    let x = random_tensor(&[1, 3, 4, 4], 12);
    let (y, _) = conv.forward(&x).unwrap();
    let probe = probe_values(y.len(), 97);
    let mut p = ConvProblem { conv, x, probe };
    let report = grad_check(
        &mut p,
        &[("x", 48), ("weight", 6), ("bias", 2)],
        |s, name, i| match name {
            "x" => s.x.data()[i],
            "weight" => s.conv.weight.data()[i],
            _ => s.conv.bias.data()[i],
        },
        |s, name, i, v| match name {
            "x" => s.x.data_mut()[i] = v,
            "weight" => s.conv.weight.data_mut()[i] = v,
            _ => s.conv.bias.data_mut()[i] = v,
        },
        |s| s.loss(),
        |s| s.analytic(),
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-8), "worst: {}", report.worst);
}

// ------------------------------------------------------------ batch norm

struct BnProblem {
    bn: BatchNorm2d<f64>,
    x: Tensor<f64>,
    probe: Vec<f64>,
}

impl BnProblem {
    fn loss(&mut self) -> f64 {
        let (y, _) = self.bn.forward(&self.x, LayerMode::Train).unwrap();
        weighted_sum(y.data(), &self.probe)
    }
    fn analytic(&mut self) -> Vec<(String, Vec<f64>)> {
        self.bn.zero_grads();
        let (y, cache) = self.bn.forward(&self.x, LayerMode::Train).unwrap();
        let dy = Tensor::from_vec(y.shape(), self.probe.clone()).unwrap();
        let dx = self.bn.backward(&cache, &dy).unwrap();
        vec![
            ("x".to_string(), dx.data().to_vec()),
            ("gamma".to_string(), self.bn.gamma.grad().to_vec()),
            ("beta".to_string(), self.bn.beta.grad().to_vec()),
        ]
    }
}

#[test]
fn batch_norm_backward_matches_finite_differences() {
    let mut bn = BatchNorm2d::<f64>::new(3, 1e-5, 0.1);
    for (i, g) in bn.gamma.data_mut().iter_mut().enumerate() {
        *g = 1.0 + 0.2 * i as f64;
    }
    let x = random_tensor(&[2, 3, 4, 4], 13);
    let probe = probe_values(x.len(), 96);
    let mut p = BnProblem { bn, x, probe };
    let report = grad_check(
        &mut p,
        &[("x", 96), ("gamma", 3), ("beta", 3)],
        |s, name, i| match name {
            "x" => s.x.data()[i],
            "gamma" => s.bn.gamma.data()[i],
            _ => s.bn.beta.data()[i],
        },
        |s, name, i, v| match name {
            "x" => s.x.data_mut()[i] = v,
            "gamma" => s.bn.gamma.data_mut()[i] = v,
            _ => s.bn.beta.data_mut()[i] = v,
        },
        |s| s.loss(),
        |s| s.analytic(),
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-4), "worst: {}", report.worst);
}

// ------------------------------------------------------------ max pooling

#[test]
fn max_pool_backward_matches_finite_differences_at_strict_maxima() {
    // distinct values keep every window's max strict, away from tie points
    let x = Tensor::from_vec(
        &[1, 2, 4, 4],
        (0..32).map(|i| ((i * 23 + 7) % 31) as f64 + i as f64 * 0.01).collect(),
    )
    .unwrap();
    let probe = probe_values(8, 95);

    struct PoolProblem {
        x: Tensor<f64>,
        probe: Vec<f64>,
    }
    let mut p = PoolProblem { x, probe };
    let report = grad_check(
        &mut p,
        &[("x", 32)],
        |s, _, i| s.x.data()[i],
        |s, _, i, v| s.x.data_mut()[i] = v,
        |s| {
            let (y, _) = max_pool2d(&s.x, (2, 2), (2, 2)).unwrap();
            weighted_sum(y.data(), &s.probe)
        },
        |s| {
            let (y, cache) = max_pool2d(&s.x, (2, 2), (2, 2)).unwrap();
            let dy = Tensor::from_vec(y.shape(), s.probe.clone()).unwrap();
            let dx = max_pool2d_backward(&cache, &dy);
            vec![("x".to_string(), dx.data().to_vec())]
        },
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-8), "worst: {}", report.worst);
}

// ------------------------------------------------------- bilinear sampling

#[test]
fn bilinear_sample_coordinate_gradients_match_finite_differences() {
    // interior, off-lattice points (the op is piecewise linear with kinks at
    // integer coordinates, which the spec excludes)
    struct SampleProblem {
        f: Tensor<f64>,
        pts: Vec<(f64, f64)>,
        probe: Vec<f64>,
    }
    impl SampleProblem {
        fn points(&self) -> Vec<(f64, f64)> {
            self.pts.clone()
        }
    }
    let f = random_tensor(&[3, 6, 7], 14);
    let pts = vec![(1.3, 2.7), (4.6, 0.4), (2.2, 3.9), (5.1, 4.3)];
    let probe = probe_values(pts.len() * 3, 94);
    let mut p = SampleProblem { f, pts, probe };

    let report = grad_check(
        &mut p,
        &[("f", 126), ("pts", 8)],
        |s, name, i| match name {
            "f" => s.f.data()[i],
            _ => {
                let (x, y) = s.pts[i / 2];
                if i % 2 == 0 {
                    x
                } else {
                    y
                }
            }
        },
        |s, name, i, v| match name {
            "f" => s.f.data_mut()[i] = v,
            _ => {
                let pt = &mut s.pts[i / 2];
                if i % 2 == 0 {
                    pt.0 = v;
                } else {
                    pt.1 = v;
                }
            }
        },
        |s| {
            let (y, _) = bilinear_sample(&s.f, &s.points()).unwrap();
            weighted_sum(y.data(), &s.probe)
        },
        |s| {
            let pts = s.points();
            let (y, cache) = bilinear_sample(&s.f, &pts).unwrap();
            let dy = Tensor::from_vec(y.shape(), s.probe.clone()).unwrap();
            let mut df = Tensor::zeros(s.f.shape());
            let dp = bilinear_sample_backward(&s.f, &cache, &dy, &mut df);
            let mut flat = Vec::new();
            for (gx, gy) in dp {
                flat.push(gx);
                flat.push(gy);
            }
            vec![("f".to_string(), df.data().to_vec()), ("pts".to_string(), flat)]
        },
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-4), "worst: {}", report.worst);
}

// ------------------------------------------------- focal loss through sigmoid

#[test]
fn focal_loss_gradient_matches_finite_differences() {
    struct FocalProblem {
        logits: Tensor<f64>,
        target: Tensor<f64>,
    }
    impl FocalProblem {
        fn loss(&mut self) -> f64 {
            let pred = sigmoid(&self.logits);
            circleseg::detect::focal_loss(&pred, &self.target).unwrap()
        }
    }
    let logits = random_tensor(&[1, 4, 4], 15);
    let mut target_vals = probe_values(16, 93)
        .into_iter()
        .map(|v| (v * 0.5 + 0.5).clamp(0.0, 0.999))
        .collect::<Vec<_>>();
    target_vals[5] = 1.0; // one center cell
    target_vals[10] = 1.0;
    let target = Tensor::from_vec(&[1, 4, 4], target_vals).unwrap();
    let mut p = FocalProblem { logits, target };

    let report = grad_check(
        &mut p,
        &[("logits", 16)],
        |s, _, i| s.logits.data()[i],
        |s, _, i, v| s.logits.data_mut()[i] = v,
        |s| s.loss(),
        |s| {
            let pred = sigmoid(&s.logits);
            let (_, grad) = focal_loss_with_grad(&pred, &s.target, true).unwrap();
            let g = grad.unwrap();
            // chain through sigmoid: dL/dz = dL/dp * p (1 - p)
            let dz: Vec<f64> = g
                .data()
                .iter()
                .zip(pred.data())
                .map(|(&gp, &pv)| gp * pv * (1.0 - pv))
                .collect();
            vec![("logits".to_string(), dz)]
        },
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-4), "worst: {}", report.worst);
}

#[test]
fn center_l1_gradient_matches_finite_differences() {
    struct L1Problem {
        pred: Tensor<f64>,
        centers: Vec<CenterTarget>,
    }
    let mut pred = random_tensor(&[2, 4, 4], 16);
    for v in pred.data_mut() {
        *v += 3.0; // keep every |pred - target| away from the kink at 0
    }
    let centers = vec![
        CenterTarget {
            class_id: 0,
            cell_x: 1,
            cell_y: 2,
            offset: [0.25, 0.5],
            radius_cells: 2.0,
        },
        CenterTarget {
            class_id: 0,
            cell_x: 3,
            cell_y: 0,
            offset: [0.75, 0.125],
            radius_cells: 1.5,
        },
    ];
    let mut p = L1Problem { pred, centers };
    let report = grad_check(
        &mut p,
        &[("pred", 32)],
        |s, _, i| s.pred.data()[i],
        |s, _, i, v| s.pred.data_mut()[i] = v,
        |s| l1_at_centers(&s.pred, &s.centers, |c| vec![c.offset[0], c.offset[1]], None),
        |s| {
            let mut g = Tensor::zeros(s.pred.shape());
            l1_at_centers(&s.pred, &s.centers, |c| vec![c.offset[0], c.offset[1]], Some(&mut g));
            vec![("pred".to_string(), g.data().to_vec())]
        },
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-8), "worst: {}", report.worst);
}

// -------------------------------------------------- sequence layers (snake)

#[test]
fn circular_conv_backward_matches_finite_differences() {
    struct CcProblem {
        conv: CircularConv<f64>,
        seq: Tensor<f64>,
        probe: Vec<f64>,
    }
    let mut r = rng(17);
    let conv = CircularConv::<f64>::new(3, 4, 9, &mut r);
    let seq = random_tensor(&[16, 3], 40);
    let probe = probe_values(64, 90);
    let mut p = CcProblem { conv, seq, probe };
    let report = grad_check(
        &mut p,
        &[("seq", 48), ("weight", 108), ("bias", 4)],
        |s, name, i| match name {
            "seq" => s.seq.data()[i],
            "weight" => s.conv.weight.data()[i],
            _ => s.conv.bias.data()[i],
        },
        |s, name, i, v| match name {
            "seq" => s.seq.data_mut()[i] = v,
            "weight" => s.conv.weight.data_mut()[i] = v,
            _ => s.conv.bias.data_mut()[i] = v,
        },
        |s| {
            let y = s.conv.forward(&s.seq).unwrap();
            weighted_sum(y.data(), &s.probe)
        },
        |s| {
            s.conv.zero_grads();
            let y = s.conv.forward(&s.seq).unwrap();
            let dy = Tensor::from_vec(y.shape(), s.probe.clone()).unwrap();
            let dseq = s.conv.backward(&s.seq, &dy).unwrap();
            vec![
                ("seq".to_string(), dseq.data().to_vec()),
                ("weight".to_string(), s.conv.weight.grad().to_vec()),
                ("bias".to_string(), s.conv.bias.grad().to_vec()),
            ]
        },
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-4), "worst: {}", report.worst);
}

#[test]
fn seq_norm_backward_matches_finite_differences() {
    struct NormProblem {
        norm: SeqNorm<f64>,
        x: Tensor<f64>,
        probe: Vec<f64>,
    }
    let norm = SeqNorm::<f64>::new(5);
    let x = random_tensor(&[12, 5], 18);
    let probe = probe_values(60, 92);
    let mut p = NormProblem { norm, x, probe };
    let report = grad_check(
        &mut p,
        &[("x", 60), ("gamma", 5), ("beta", 5)],
        |s, name, i| match name {
            "x" => s.x.data()[i],
            "gamma" => s.norm.gamma.data()[i],
            _ => s.norm.beta.data()[i],
        },
        |s, name, i, v| match name {
            "x" => s.x.data_mut()[i] = v,
            "gamma" => s.norm.gamma.data_mut()[i] = v,
            _ => s.norm.beta.data_mut()[i] = v,
        },
        |s| {
            let (y, _) = s.norm.forward(&s.x).unwrap();
            weighted_sum(y.data(), &s.probe)
        },
        |s| {
            s.norm.zero_grads();
            let (y, cache) = s.norm.forward(&s.x).unwrap();
            let dy = Tensor::from_vec(y.shape(), s.probe.clone()).unwrap();
            let dx = s.norm.backward(&cache, &dy).unwrap();
            vec![
                ("x".to_string(), dx.data().to_vec()),
                ("gamma".to_string(), s.norm.gamma.grad().to_vec()),
                ("beta".to_string(), s.norm.beta.grad().to_vec()),
            ]
        },
        &GradCheckConfig::default(),
    );
    assert!(report.passes(1e-4), "worst: {}", report.worst);
}

#[test]
fn contour_network_backward_matches_finite_differences() {
    // toy config: N=16, feature dim 6 (+2 coordinate channels)
    struct SnakeProblem {
        net: ContourNet<f64>,
        vf: Tensor<f64>,
        probe: Vec<f64>,
    }
    impl SnakeProblem {
        fn tensor_mut(&mut self, name: &str) -> &mut Tensor<f64> {
            if name == "vf" {
                return &mut self.vf;
            }
            self.net
                .named_params()
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .unwrap()
        }
    }

    let cfg = SnakeConfig {
        vertex_count: 16,
        kernel_size: 9,
        depth: 8,
        state_width: 10,
        fusion_width: 8,
        prediction_width: 8,
        ..SnakeConfig::default()
    };
    let mut r = rng(19);
    let mut net = ContourNet::<f64>::new(&cfg, 6, &mut r);
    // jitter every parameter (biases are zero-initialized, which would park
    // dead-channel pre-activations exactly on the relu kink)
    for (salt, (_, t)) in net.named_params().into_iter().enumerate() {
        let jitter = probe_values(t.len(), 7000 + salt as u64);
        for (v, j) in t.data_mut().iter_mut().zip(jitter) {
            *v += 0.05 * j;
        }
    }
    let names: Vec<String> = net.named_params().iter().map(|(n, _)| n.clone()).collect();
    let vf = random_tensor(&[16, 8], 20);
    let probe = probe_values(32, 91);
    let mut p = SnakeProblem { net, vf, probe };

    let mut tensors: Vec<(&str, usize)> = vec![("vf", 128)];
    let lens: Vec<(String, usize)> = {
        let params = p.net.named_params();
        params.iter().map(|(n, t)| (n.clone(), t.len())).collect()
    };
    for (n, l) in &lens {
        let idx = names.iter().position(|x| x == n).unwrap();
        tensors.push((names[idx].as_str(), *l));
    }

    let report = grad_check(
        &mut p,
        &tensors,
        |s, name, i| s.tensor_mut(name).data()[i],
        |s, name, i, v| s.tensor_mut(name).data_mut()[i] = v,
        |s| {
            let (y, _) = s.net.forward(&s.vf).unwrap();
            weighted_sum(y.data(), &s.probe)
        },
        |s| {
            s.net.zero_grads();
            let (y, caches) = s.net.forward(&s.vf).unwrap();
            let dy = Tensor::from_vec(y.shape(), s.probe.clone()).unwrap();
            let dvf = s.net.backward(&caches, &dy).unwrap();
            let mut out = vec![("vf".to_string(), dvf.data().to_vec())];
            for (n, t) in s.net.named_params() {
                out.push((n, t.grad().to_vec()));
            }
            out
        },
        &GradCheckConfig {
            max_coords_per_tensor: Some(12),
            ..GradCheckConfig::default()
        },
    );
    assert!(report.passes(1e-4), "worst: {}", report.worst);
}

// ----------------------------------------------------- composite detector

struct DetectorProblem {
    det: Detector<f64>,
    x: Tensor<f64>,
    probes: [Vec<f64>; 4],
}

impl DetectorProblem {
    fn tensor_mut(&mut self, name: &str) -> &mut Tensor<f64> {
        if name == "x" {
            return &mut self.x;
        }
        self.det
            .named_params()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .unwrap()
    }

    fn loss(&mut self) -> f64 {
        let (out, _) = self.det.forward_batch(&self.x, LayerMode::Train).unwrap();
        weighted_sum(out.hm_logits.data(), &self.probes[0])
            + weighted_sum(out.offsets.data(), &self.probes[1])
            + weighted_sum(out.radii.data(), &self.probes[2])
            + weighted_sum(out.features.data(), &self.probes[3])
    }

    fn analytic(&mut self) -> Vec<(String, Vec<f64>)> {
        self.det.zero_grads();
        let (out, caches) = self.det.forward_batch(&self.x, LayerMode::Train).unwrap();
        let d_hm = Tensor::from_vec(out.hm_logits.shape(), self.probes[0].clone()).unwrap();
        let d_off = Tensor::from_vec(out.offsets.shape(), self.probes[1].clone()).unwrap();
        let d_rad = Tensor::from_vec(out.radii.shape(), self.probes[2].clone()).unwrap();
        let d_f = Tensor::from_vec(out.features.shape(), self.probes[3].clone()).unwrap();
        self.det.backward(&caches, &d_hm, &d_off, &d_rad, &d_f).unwrap();
        self.det
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.grad().to_vec()))
            .collect()
    }
}

#[test]
fn detector_stack_backward_matches_finite_differences() {
    let cfg = BackboneConfig {
        stage_channels: [4, 6, 8],
        head_channels: 8,
        class_count: 2,
    };
    let mut r = rng(23);
    let mut det = Detector::<f64>::new(&cfg, &mut r);
    let x = random_tensor(&[1, 3, 16, 16], 24);
    let (out, _) = det.forward_batch(&x, LayerMode::Train).unwrap();
    let probes = [
        probe_values(out.hm_logits.len(), 80),
        probe_values(out.offsets.len(), 81),
        probe_values(out.radii.len(), 82),
        probe_values(out.features.len(), 83),
    ];
    let names: Vec<(String, usize)> = det
        .named_params()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let mut p = DetectorProblem { det, x, probes };
    let tensors: Vec<(&str, usize)> = names.iter().map(|(n, l)| (n.as_str(), *l)).collect();

    let report = grad_check(
        &mut p,
        &tensors,
        |s, name, i| s.tensor_mut(name).data()[i],
        |s, name, i, v| s.tensor_mut(name).data_mut()[i] = v,
        |s| s.loss(),
        |s| s.analytic(),
        &GradCheckConfig {
            max_coords_per_tensor: Some(8),
            ..GradCheckConfig::default()
        },
    );
    assert!(report.passes(1e-4), "worst: {}", report.worst);
}

// ------------------------------------- end to end: contour loss -> backbone

struct EndToEndProblem {
    det: Detector<f64>,
    snake: ContourNet<f64>,
    x: Tensor<f64>,
    proposal: circleseg::geom::Contour,
    gt: circleseg::geom::Contour,
}

impl EndToEndProblem {
    fn loss(&mut self) -> f64 {
        let (out, _) = self.det.forward_batch(&self.x, LayerMode::Train).unwrap();
        let f = out
            .features
            .clone()
            .reshaped(&[out.features.shape()[1], out.features.shape()[2], out.features.shape()[3]])
            .unwrap();
        let (iterates, _) = deform(&self.snake, &self.proposal, &f, 4).unwrap();
        contour_loss_with_grads(&iterates, &self.gt, ContourLossKind::L1)
            .unwrap()
            .0
    }

    fn analytic(&mut self) -> Vec<(String, Vec<f64>)> {
        self.det.zero_grads();
        self.snake.zero_grads();
        let (out, caches) = self.det.forward_batch(&self.x, LayerMode::Train).unwrap();
        let fshape = out.features.shape().to_vec();
        let f = out
            .features
            .clone()
            .reshaped(&[fshape[1], fshape[2], fshape[3]])
            .unwrap();
        let (iterates, dcaches) = deform(&self.snake, &self.proposal, &f, 4).unwrap();
        let (_, grads) =
            contour_loss_with_grads(&iterates, &self.gt, ContourLossKind::L1).unwrap();
        let mut d_f = Tensor::zeros(f.shape());
        deform_backward(&mut self.snake, &f, &dcaches, &grads, &mut d_f).unwrap();
        let d_f = d_f.reshaped(&fshape).unwrap();
        let zero_hm = Tensor::zeros(out.hm_logits.shape());
        let zero_off = Tensor::zeros(out.offsets.shape());
        let zero_rad = Tensor::zeros(out.radii.shape());
        self.det
            .backward(&caches, &zero_hm, &zero_off, &zero_rad, &d_f)
            .unwrap();
        self.det
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.grad().to_vec()))
            .collect()
    }
}

#[test]
fn contour_loss_reaches_backbone_parameters_with_correct_gradients() {
    let cfg = BackboneConfig {
        stage_channels: [4, 6, 8],
        head_channels: 6,
        class_count: 1,
    };
    let snake_cfg = SnakeConfig {
        vertex_count: 16,
        kernel_size: 5,
        depth: 3,
        state_width: 8,
        fusion_width: 8,
        prediction_width: 8,
        ..SnakeConfig::default()
    };
    let mut r = rng(31);
    let mut det = Detector::<f64>::new(&cfg, &mut r);
    let mut snake = ContourNet::<f64>::new(&snake_cfg, 6, &mut r);
    // shrink predicted offsets so no L1 coordinate difference crosses zero
    for (name, t) in snake.named_params() {
        if name.starts_with("snake.pred3") {
            for v in t.data_mut() {
                *v *= 0.01;
            }
        }
    }
    let x = random_tensor(&[1, 3, 16, 16], 35);
    // proposal and ground truth offset so every coordinate diff stays >= 0.5
    let proposal = circle_contour(&Circle::new(8.0, 8.0, 4.0), 16);
    let gt = circle_contour(&Circle::new(9.7, 6.7, 4.6), 16);

    let names: Vec<(String, usize)> = det
        .named_params()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let mut p = EndToEndProblem {
        det,
        snake,
        x,
        proposal,
        gt,
    };
    let tensors: Vec<(&str, usize)> = names.iter().map(|(n, l)| (n.as_str(), *l)).collect();
    let report = grad_check(
        &mut p,
        &tensors,
        |s, name, i| s.tensor_mut_det(name).data()[i],
        |s, name, i, v| s.tensor_mut_det(name).data_mut()[i] = v,
        |s| s.loss(),
        |s| s.analytic(),
        &GradCheckConfig {
            max_coords_per_tensor: Some(6),
            ..GradCheckConfig::default()
        },
    );
    assert!(report.passes(1e-3), "worst: {}", report.worst);
}

impl EndToEndProblem {
    fn tensor_mut_det(&mut self, name: &str) -> &mut Tensor<f64> {
        self.det
            .named_params()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .unwrap()
    }
}
