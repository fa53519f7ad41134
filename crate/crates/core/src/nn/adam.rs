//! Adam optimizer with bias correction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: step count plus first/second moments per parameter name.
#[derive(Debug, Clone)]
pub struct Adam<E: Element> {
    pub config: AdamConfig,
    step: u64,
    moments: HashMap<String, (Vec<E>, Vec<E>)>,
}

impl<E: Element> Adam<E> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every named parameter, consuming the gradients
    /// accumulated in their grad slots. Non-finite gradients abort with the
    /// offending parameter's name.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor<E>)]) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let lr = E::from_f64(self.config.lr);
        let b1 = E::from_f64(self.config.beta1);
        let b2 = E::from_f64(self.config.beta2);
        let eps = E::from_f64(self.config.eps);
        let bc1 = E::ONE - b1.powi(t);
        let bc2 = E::ONE - b2.powi(t);

        for (name, tensor) in params.iter_mut() {
            let n = tensor.len();
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![E::ZERO; n], vec![E::ZERO; n]));
            if m.len() != n {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    expected: format!("moment length {} for {}", m.len(), name),
                    got: format!("parameter length {}", n),
                });
            }
            // split borrows: read grads, then update data
            let mut updates = vec![E::ZERO; n];
            {
                let g = tensor.grad();
                for i in 0..n {
                    let gi = g[i];
                    if !gi.is_finite() {
                        return Err(Error::NonFinite {
                            context: format!("gradient of parameter {name}[{i}]"),
                        });
                    }
                    m[i] = b1 * m[i] + (E::ONE - b1) * gi;
                    v[i] = b2 * v[i] + (E::ONE - b2) * gi * gi;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    updates[i] = lr * mhat / (vhat.sqrt() + eps);
                }
            }
            let data = tensor.data_mut();
            for i in 0..n {
                data[i] -= updates[i];
            }
        }
        Ok(())
    }

    /// Serializes `(step, per-name moments)` for checkpointing, in the given
    /// parameter order.
    pub fn export(&self, order: &[String]) -> (u64, Vec<(Vec<E>, Vec<E>)>) {
        let moments = order
            .iter()
            .map(|name| self.moments.get(name).cloned().unwrap_or_default())
            .collect();
        (self.step, moments)
    }

    pub fn restore(&mut self, step: u64, order: &[String], moments: Vec<(Vec<E>, Vec<E>)>) {
        self.step = step;
        self.moments = order.iter().cloned().zip(moments).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64, g: f64) -> Tensor<f64> {
        let mut t = Tensor::from_vec(&[1], vec![v]).unwrap().with_grad();
        t.grad_mut()[0] = g;
        t
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = one_param(1.5, 0.0);
        adam.step(&mut [("p".to_string(), &mut p)]).unwrap();
        assert_eq!(p.data()[0], 1.5);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // hand evaluation: m=0.1, v=0.001, mhat=1, vhat=1,
        // delta = lr * 1 / (1 + eps) ~= lr
        let cfg = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg);
        let mut p = one_param(0.0, 1.0);
        adam.step(&mut [("p".to_string(), &mut p)]).unwrap();
        let delta = -p.data()[0];
        assert!((delta - 1e-3).abs() < 1e-9, "delta = {delta}");
    }

    #[test]
    fn identical_inputs_give_bitwise_identical_updates() {
        let mk = || {
            let mut adam = Adam::new(AdamConfig::default());
            let mut p = one_param(0.25, -0.7);
            for _ in 0..5 {
                adam.step(&mut [("p".to_string(), &mut p)]).unwrap();
                p.grad_mut()[0] = -0.7;
            }
            p.data()[0]
        };
        assert_eq!(mk().to_bits(), mk().to_bits());
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = one_param(0.0, f64::NAN);
        let err = adam
            .step(&mut [("head.weight".to_string(), &mut p)])
            .unwrap_err()
            .to_string();
        assert!(err.contains("head.weight"), "message was: {err}");
    }
}
