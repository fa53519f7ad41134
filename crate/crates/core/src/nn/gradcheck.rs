//! Central finite-difference verification of analytic gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;


#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Base step; actual step is `step * max(1, |x|)` per coordinate.
    pub step: f64,
    /// When set, at most this many coordinates are probed per tensor
    /// (deterministically subsampled). Large composites need this to keep
    /// the check inside its runtime budget; every tensor is still touched.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            max_coords_per_tensor: None,
            seed: 0x5eed,
        }
    }
}

/// Worst relative error over all probed coordinates, with its location.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: String,
    pub coords_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Checks analytic gradients of a scalar loss against central differences.
///
/// `state` owns the fragment under test (parameters plus any inputs whose
/// gradients should be verified), exposed as named f64 tensors:
///
/// - `tensors`: names and lengths of every tensor to probe
/// - `read`/`write`: coordinate access by `(name, flat index)`
/// - `loss`: forward pass only
/// - `analytic`: forward + backward, returning the gradient for each name
///
/// The relative error per coordinate is `|a - n| / max(|a|, |n|, 1)`.
pub fn grad_check<T>(
    state: &mut T,
    tensors: &[(&str, usize)],
    read: impl Fn(&mut T, &str, usize) -> f64,
    write: impl Fn(&mut T, &str, usize, f64),
    mut loss: impl FnMut(&mut T) -> f64,
    mut analytic: impl FnMut(&mut T) -> Vec<(String, Vec<f64>)>,
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    let grads = analytic(state);
    let grad_of = |name: &str| -> &[f64] {
        grads
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g.as_slice())
            .unwrap_or_else(|| panic!("analytic gradients missing tensor {name}"))
    };

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        coords_checked: 0,
    };

    for &(name, len) in tensors {
        let g = grad_of(name);
        assert_eq!(g.len(), len, "gradient length for {name}");
        let coords: Vec<usize> = match cfg.max_coords_per_tensor {
            Some(k) if len > k => {
                let mut picked: Vec<usize> = (0..k).map(|_| rng.random_range(0..len)).collect();
                picked.sort_unstable();
                picked.dedup();
                picked
            }
            _ => (0..len).collect(),
        };

        for &i in &coords {
            let x0 = read(state, name, i);
            let h = cfg.step * x0.abs().max(1.0);
            write(state, name, i, x0 + h);
            let lp = loss(state);
            write(state, name, i, x0 - h);
            let lm = loss(state);
            write(state, name, i, x0);

            let numeric = (lp - lm) / (2.0 * h);
            let aval = g[i];
            let rel = (aval - numeric).abs() / aval.abs().max(numeric.abs()).max(1.0);
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = format!(
                    "{name}[{i}]: analytic {aval:.6e}, numeric {numeric:.6e}"
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    // scalar quadratic: loss = sum(w * x^2), dloss/dx = 2 w x
    struct Quad {
        w: f64,
        x: Vec<f64>,
    }

    #[test]
    fn quadratic_passes() {
        let mut q = Quad {
            w: 1.5,
            x: vec![0.3, -1.2, 2.0],
        };
        let report = grad_check(
            &mut q,
            &[("x", 3)],
            |s, _, i| s.x[i],
            |s, _, i, v| s.x[i] = v,
            |s| s.w * s.x.iter().map(|v| v * v).sum::<f64>(),
            |s| vec![("x".to_string(), s.x.iter().map(|v| 2.0 * s.w * v).collect())],
            &GradCheckConfig::default(),
        );
        assert!(report.passes(1e-8), "max err {}", report.max_rel_err);
        assert_eq!(report.coords_checked, 3);
    }

    #[test]
    fn wrong_gradient_is_caught_and_located() {
        let mut q = Quad {
            w: 1.0,
            x: vec![1.0, 1.0],
        };
        let report = grad_check(
            &mut q,
            &[("x", 2)],
            |s, _, i| s.x[i],
            |s, _, i, v| s.x[i] = v,
            |s| s.x.iter().map(|v| v * v).sum::<f64>(),
            |s| vec![("x".to_string(), vec![2.0 * s.x[0], 3.5 * s.x[1]])],
            &GradCheckConfig::default(),
        );
        assert!(!report.passes(1e-4));
        assert!(report.worst.contains("x[1]"), "worst: {}", report.worst);
    }

    #[test]
    fn subsampling_caps_probed_coordinates() {
        let mut q = Quad {
            w: 2.0,
            x: (0..100).map(|i| i as f64 * 0.01 + 0.1).collect(),
        };
        let report = grad_check(
            &mut q,
            &[("x", 100)],
            |s, _, i| s.x[i],
            |s, _, i, v| s.x[i] = v,
            |s| s.w * s.x.iter().map(|v| v * v).sum::<f64>(),
            |s| vec![("x".to_string(), s.x.iter().map(|v| 2.0 * s.w * v).collect())],
            &GradCheckConfig {
                max_coords_per_tensor: Some(10),
                ..GradCheckConfig::default()
            },
        );
        assert!(report.coords_checked <= 10);
        assert!(report.passes(1e-8));
    }
}
