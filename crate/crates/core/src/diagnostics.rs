//! Gradient self-checks behind the `grad-check` subcommand: every layer and
//! the composite stacks verified against central finite differences at
//! 64-bit precision.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::deform::{CircularConv, ContourNet, SeqNorm, SnakeConfig};
use crate::detect::{BackboneConfig, Detector};
use crate::nn::{
    bilinear_sample, bilinear_sample_backward, grad_check, he_normal, BatchNorm2d, Conv2d,
    GradCheckConfig, GradCheckReport, LayerMode,
};
use crate::tensor::Tensor;

/// Tolerances: exact-gradient layers sit at 1e-8, smooth compositions at
/// 1e-4 (the composite stack bound used by the acceptance suite).
pub struct SuiteEntry {
    pub name: &'static str,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

fn pseudo(n: usize, salt: u64) -> Vec<f64> {
    let mut state = salt.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    (0..n)
        .map(|_| {
            state ^= state >> 30;
            state = state.wrapping_mul(0xBF58476D1CE4E5B9);
            state ^= state >> 27;
            state = state.wrapping_mul(0x94D049BB133111EB);
            state ^= state >> 31;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

fn check_conv() -> GradCheckReport {
    struct P {
        conv: Conv2d<f64>,
        x: Tensor<f64>,
        probe: Vec<f64>,
    }
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut conv = Conv2d::same(2, 3, 3, 1);
    conv.weight = he_normal(&[3, 2, 3, 3], 18, &mut rng).with_grad();
    let x = Tensor::from_vec(&[1, 2, 5, 5], pseudo(50, 1)).unwrap();
    let probe = pseudo(75, 2);
    let mut p = P { conv, x, probe };
    grad_check(
        &mut p,
        &[("x", 50), ("weight", 54), ("bias", 3)],
        |s, n, i| match n {
            "x" => s.x.data()[i],
            "weight" => s.conv.weight.data()[i],
            _ => s.conv.bias.data()[i],
        },
        |s, n, i, v| match n {
            "x" => s.x.data_mut()[i] = v,
            "weight" => s.conv.weight.data_mut()[i] = v,
            _ => s.conv.bias.data_mut()[i] = v,
        },
        |s| {
            let (y, _) = s.conv.forward(&s.x).unwrap();
            y.data().iter().zip(&s.probe).map(|(a, b)| a * b).sum()
        },
        |s| {
            s.conv.zero_grads();
            let (y, cache) = s.conv.forward(&s.x).unwrap();
            let dy = Tensor::from_vec(y.shape(), s.probe.clone()).unwrap();
            let dx = s.conv.backward(&cache, &dy).unwrap();
            vec![
                ("x".to_string(), dx.data().to_vec()),
                ("weight".to_string(), s.conv.weight.grad().to_vec()),
                ("bias".to_string(), s.conv.bias.grad().to_vec()),
            ]
        },
        &GradCheckConfig::default(),
    )
}

fn check_batch_norm() -> GradCheckReport {
    struct P {
        bn: BatchNorm2d<f64>,
        x: Tensor<f64>,
        probe: Vec<f64>,
    }
    let bn = BatchNorm2d::new(3, 1e-5, 0.1);
    let x = Tensor::from_vec(&[2, 3, 4, 4], pseudo(96, 3)).unwrap();
    let probe = pseudo(96, 4);
    let mut p = P { bn, x, probe };
    grad_check(
        &mut p,
        &[("x", 96), ("gamma", 3), ("beta", 3)],
        |s, n, i| match n {
            "x" => s.x.data()[i],
            "gamma" => s.bn.gamma.data()[i],
            _ => s.bn.beta.data()[i],
        },
        |s, n, i, v| match n {
            "x" => s.x.data_mut()[i] = v,
            "gamma" => s.bn.gamma.data_mut()[i] = v,
            _ => s.bn.beta.data_mut()[i] = v,
        },
        |s| {
            let (y, _) = s.bn.forward(&s.x, LayerMode::Train).unwrap();
            y.data().iter().zip(&s.probe).map(|(a, b)| a * b).sum()
        },
        |s| {
            s.bn.zero_grads();
            let (y, cache) = s.bn.forward(&s.x, LayerMode::Train).unwrap();
            let dy = Tensor::from_vec(y.shape(), s.probe.clone()).unwrap();
            let dx = s.bn.backward(&cache, &dy).unwrap();
            vec![
                ("x".to_string(), dx.data().to_vec()),
                ("gamma".to_string(), s.bn.gamma.grad().to_vec()),
                ("beta".to_string(), s.bn.beta.grad().to_vec()),
            ]
        },
        &GradCheckConfig::default(),
    )
}

fn check_bilinear() -> GradCheckReport {
    struct P {
        f: Tensor<f64>,
        pts: Vec<(f64, f64)>,
        probe: Vec<f64>,
    }
    let f = Tensor::from_vec(&[2, 6, 7], pseudo(84, 5)).unwrap();
    let pts = vec![(1.3, 2.7), (4.6, 0.4), (2.2, 3.9)];
    let probe = pseudo(6, 6);
    let mut p = P { f, pts, probe };
    grad_check(
        &mut p,
        &[("f", 84), ("pts", 6)],
        |s, n, i| match n {
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
        |s, n, i, v| match n {
            "f" => s.f.data_mut()[i] = v,
            _ => {
                if i % 2 == 0 {
                    s.pts[i / 2].0 = v;
                } else {
                    s.pts[i / 2].1 = v;
                }
            }
        },
        |s| {
            let (y, _) = bilinear_sample(&s.f, &s.pts).unwrap();
            y.data().iter().zip(&s.probe).map(|(a, b)| a * b).sum()
        },
        |s| {
            let (y, cache) = bilinear_sample(&s.f, &s.pts).unwrap();
            let dy = Tensor::from_vec(y.shape(), s.probe.clone()).unwrap();
            let mut df = Tensor::zeros(s.f.shape());
            let dp = bilinear_sample_backward(&s.f, &cache, &dy, &mut df);
            vec![
                ("f".to_string(), df.data().to_vec()),
                (
                    "pts".to_string(),
                    dp.iter().flat_map(|&(a, b)| [a, b]).collect(),
                ),
            ]
        },
        &GradCheckConfig::default(),
    )
}

fn check_circular_conv() -> GradCheckReport {
    struct P {
        conv: CircularConv<f64>,
        seq: Tensor<f64>,
        probe: Vec<f64>,
    }
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    let conv = CircularConv::new(3, 4, 9, &mut rng);
    let seq = Tensor::from_vec(&[16, 3], pseudo(48, 7)).unwrap();
    let probe = pseudo(64, 8);
    let mut p = P { conv, seq, probe };
    grad_check(
        &mut p,
        &[("seq", 48), ("weight", 108), ("bias", 4)],
        |s, n, i| match n {
            "seq" => s.seq.data()[i],
            "weight" => s.conv.weight.data()[i],
            _ => s.conv.bias.data()[i],
        },
        |s, n, i, v| match n {
            "seq" => s.seq.data_mut()[i] = v,
            "weight" => s.conv.weight.data_mut()[i] = v,
            _ => s.conv.bias.data_mut()[i] = v,
        },
        |s| {
            let y = s.conv.forward(&s.seq).unwrap();
            y.data().iter().zip(&s.probe).map(|(a, b)| a * b).sum()
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
    )
}

fn check_seq_norm() -> GradCheckReport {
    struct P {
        norm: SeqNorm<f64>,
        x: Tensor<f64>,
        probe: Vec<f64>,
    }
    let norm = SeqNorm::new(5);
    let x = Tensor::from_vec(&[12, 5], pseudo(60, 9)).unwrap();
    let probe = pseudo(60, 10);
    let mut p = P { norm, x, probe };
    grad_check(
        &mut p,
        &[("x", 60), ("gamma", 5), ("beta", 5)],
        |s, n, i| match n {
            "x" => s.x.data()[i],
            "gamma" => s.norm.gamma.data()[i],
            _ => s.norm.beta.data()[i],
        },
        |s, n, i, v| match n {
            "x" => s.x.data_mut()[i] = v,
            "gamma" => s.norm.gamma.data_mut()[i] = v,
            _ => s.norm.beta.data_mut()[i] = v,
        },
        |s| {
            let (y, _) = s.norm.forward(&s.x).unwrap();
            y.data().iter().zip(&s.probe).map(|(a, b)| a * b).sum()
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
    )
}

fn check_contour_network(coords_per_tensor: usize) -> GradCheckReport {
    struct P {
        net: ContourNet<f64>,
        vf: Tensor<f64>,
        probe: Vec<f64>,
    }
    impl P {
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
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let mut net = ContourNet::new(&cfg, 6, &mut rng);
    for (salt, (_, t)) in net.named_params().into_iter().enumerate() {
        let jitter = pseudo(t.len(), 9000 + salt as u64);
        for (v, j) in t.data_mut().iter_mut().zip(jitter) {
            *v += 0.05 * j;
        }
    }
    let lens: Vec<(String, usize)> = net
        .named_params()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let vf = Tensor::from_vec(&[16, 8], pseudo(128, 11)).unwrap();
    let probe = pseudo(32, 12);
    let mut p = P { net, vf, probe };
    let mut tensors: Vec<(&str, usize)> = vec![("vf", 128)];
    for (n, l) in &lens {
        tensors.push((n.as_str(), *l));
    }
    grad_check(
        &mut p,
        &tensors,
        |s, n, i| s.tensor_mut(n).data()[i],
        |s, n, i, v| s.tensor_mut(n).data_mut()[i] = v,
        |s| {
            let (y, _) = s.net.forward(&s.vf).unwrap();
            y.data().iter().zip(&s.probe).map(|(a, b)| a * b).sum()
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
            max_coords_per_tensor: Some(coords_per_tensor),
            ..GradCheckConfig::default()
        },
    )
}

fn check_detector(coords_per_tensor: usize) -> GradCheckReport {
    struct P {
        det: Detector<f64>,
        x: Tensor<f64>,
        probes: [Vec<f64>; 4],
    }
    impl P {
        fn tensor_mut(&mut self, name: &str) -> &mut Tensor<f64> {
            self.det
                .named_params()
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .unwrap()
        }
    }
    let cfg = BackboneConfig {
        stage_channels: [4, 6, 8],
        head_channels: 8,
        class_count: 2,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(104);
    let mut det = Detector::new(&cfg, &mut rng);
    let x = Tensor::from_vec(&[1, 3, 16, 16], pseudo(768, 13)).unwrap();
    let (out, _) = det.forward_batch(&x, LayerMode::Train).unwrap();
    let probes = [
        pseudo(out.hm_logits.len(), 14),
        pseudo(out.offsets.len(), 15),
        pseudo(out.radii.len(), 16),
        pseudo(out.features.len(), 17),
    ];
    let lens: Vec<(String, usize)> = det
        .named_params()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let mut p = P { det, x, probes };
    let tensors: Vec<(&str, usize)> = lens.iter().map(|(n, l)| (n.as_str(), *l)).collect();
    grad_check(
        &mut p,
        &tensors,
        |s, n, i| s.tensor_mut(n).data()[i],
        |s, n, i, v| s.tensor_mut(n).data_mut()[i] = v,
        |s| {
            let (out, _) = s.det.forward_batch(&s.x, LayerMode::Train).unwrap();
            out.hm_logits.data().iter().zip(&s.probes[0]).map(|(a, b)| a * b).sum::<f64>()
                + out.offsets.data().iter().zip(&s.probes[1]).map(|(a, b)| a * b).sum::<f64>()
                + out.radii.data().iter().zip(&s.probes[2]).map(|(a, b)| a * b).sum::<f64>()
                + out.features.data().iter().zip(&s.probes[3]).map(|(a, b)| a * b).sum::<f64>()
        },
        |s| {
            s.det.zero_grads();
            let (out, caches) = s.det.forward_batch(&s.x, LayerMode::Train).unwrap();
            let d_hm = Tensor::from_vec(out.hm_logits.shape(), s.probes[0].clone()).unwrap();
            let d_off = Tensor::from_vec(out.offsets.shape(), s.probes[1].clone()).unwrap();
            let d_rad = Tensor::from_vec(out.radii.shape(), s.probes[2].clone()).unwrap();
            let d_f = Tensor::from_vec(out.features.shape(), s.probes[3].clone()).unwrap();
            s.det.backward(&caches, &d_hm, &d_off, &d_rad, &d_f).unwrap();
            s.det
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.grad().to_vec()))
                .collect()
        },
        &GradCheckConfig {
            max_coords_per_tensor: Some(coords_per_tensor),
            ..GradCheckConfig::default()
        },
    )
}

/// Runs the full gradient suite. `quick` probes fewer coordinates per
/// tensor in the composite stacks.
pub fn run_gradient_suite(quick: bool) -> Vec<SuiteEntry> {
    let coords = if quick { 4 } else { 12 };
    vec![
        SuiteEntry {
            name: "conv2d",
            tolerance: 1e-4,
            report: check_conv(),
        },
        SuiteEntry {
            name: "batch_norm",
            tolerance: 1e-4,
            report: check_batch_norm(),
        },
        SuiteEntry {
            name: "bilinear_sample",
            tolerance: 1e-4,
            report: check_bilinear(),
        },
        SuiteEntry {
            name: "circular_conv",
            tolerance: 1e-4,
            report: check_circular_conv(),
        },
        SuiteEntry {
            name: "seq_norm",
            tolerance: 1e-4,
            report: check_seq_norm(),
        },
        SuiteEntry {
            name: "contour_network",
            tolerance: 1e-4,
            report: check_contour_network(coords),
        },
        SuiteEntry {
            name: "detector_stack",
            tolerance: 1e-4,
            report: check_detector(coords),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        for entry in run_gradient_suite(true) {
            assert!(
                entry.report.passes(entry.tolerance),
                "{}: {}",
                entry.name,
                entry.report.worst
            );
        }
    }
}
