//! Detection losses: penalty-reduced focal loss on the heatmap plus L1
//! regression at ground-truth center cells.

use crate::data::CenterTarget;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

const ALPHA: i32 = 2;
const BETA: i32 = 4;
const CLAMP: f64 = 1e-6;

/// Loss weights of the combined detection objective.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub radius: f64,
    pub offset: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            radius: 0.1,
            offset: 1.0,
        }
    }
}

/// `L_det = L_k + lambda_radius * L_radius + lambda_off * L_off`.
pub fn total_detection_loss(l_k: f64, l_radius: f64, l_off: f64, w: &LossWeights) -> f64 {
    l_k + w.radius * l_radius + w.offset * l_off
}

/// Penalty-reduced pixelwise focal loss between a sigmoid heatmap and
/// Gaussian-splatted targets, normalized by the number of target-1 cells
/// (or 1 when there are none). Predictions are clamped to
/// `[1e-6, 1 - 1e-6]` before the logs.
pub fn focal_loss<E: Element>(pred: &Tensor<E>, target: &Tensor<E>) -> Result<f64> {
    Ok(focal_loss_with_grad(pred, target, false)?.0)
}

/// Focal loss plus (optionally) its gradient w.r.t. the sigmoid output.
pub fn focal_loss_with_grad<E: Element>(
    pred: &Tensor<E>,
    target: &Tensor<E>,
    with_grad: bool,
) -> Result<(f64, Option<Tensor<E>>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "focal_loss",
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", pred.shape()),
        });
    }
    let n_centers = target.data().iter().filter(|v| v.to_f64() == 1.0).count();
    let norm = (n_centers.max(1)) as f64;

    let mut loss = 0.0;
    let mut grad = if with_grad {
        Some(vec![E::ZERO; pred.len()])
    } else {
        None
    };
    for i in 0..pred.len() {
        let y = target.data()[i].to_f64();
        let p = pred.data()[i].to_f64().clamp(CLAMP, 1.0 - CLAMP);
        if y == 1.0 {
            let q = 1.0 - p;
            loss -= q.powi(ALPHA) * p.ln();
            if let Some(g) = grad.as_mut() {
                let d = ALPHA as f64 * q.powi(ALPHA - 1) * p.ln() - q.powi(ALPHA) / p;
                g[i] = E::from_f64(d / norm);
            }
        } else {
            let w = (1.0 - y).powi(BETA);
            loss -= w * p.powi(ALPHA) * (1.0 - p).ln();
            if let Some(g) = grad.as_mut() {
                let d = -w * (ALPHA as f64 * p.powi(ALPHA - 1) * (1.0 - p).ln()
                    - p.powi(ALPHA) / (1.0 - p));
                g[i] = E::from_f64(d / norm);
            }
        }
    }
    loss /= norm;
    let grad = match grad {
        Some(g) => Some(Tensor::from_vec(pred.shape(), g)?),
        None => None,
    };
    Ok((loss, grad))
}

/// Mean L1 error evaluated only at ground-truth center cells, over a
/// `[K, gh, gw]` prediction plane (K = 2 for offsets, 1 for radii).
/// Returns the loss and fills `d_pred` (same shape) when provided.
/// With no centers, both are zero.
pub fn l1_at_centers<E: Element>(
    pred: &Tensor<E>,
    centers: &[CenterTarget],
    select: impl Fn(&CenterTarget) -> Vec<f64>,
    mut d_pred: Option<&mut Tensor<E>>,
) -> f64 {
    if centers.is_empty() {
        return 0.0;
    }
    let shape = pred.shape();
    let (k, gh, gw) = (shape[0], shape[1], shape[2]);
    let norm = centers.len() as f64;
    let mut loss = 0.0;
    for c in centers {
        let targets = select(c);
        debug_assert_eq!(targets.len(), k);
        for (ki, &t) in targets.iter().enumerate() {
            let idx = ki * gh * gw + c.cell_y * gw + c.cell_x;
            let diff = pred.data()[idx].to_f64() - t;
            loss += diff.abs();
            if let Some(g) = d_pred.as_deref_mut() {
                let s = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                g.data_mut()[idx] += E::from_f64(s / norm);
            }
        }
    }
    loss / norm
}
