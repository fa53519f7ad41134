//! Iterative contour deformation and the per-iterate distance loss.

use crate::deform::{
    extract_vertex_features, vertex_features_backward, ContourLossKind, ContourNet, NetCaches,
    VertexFeatureCache,
};
use crate::error::{Error, Result};
use crate::geom::Contour;
use crate::tensor::{Element, Tensor};

struct IterCache<E: Element> {
    feat: VertexFeatureCache<E>,
    net: NetCaches<E>,
}

pub struct DeformCaches<E: Element> {
    iters: Vec<IterCache<E>>,
}

/// Repeats {extract features -> regress offsets -> move vertices} for the
/// configured number of iterations. Offsets are predicted in stride units
/// and scaled by `stride` when applied. Returns every iterate (the last one
/// is the final contour) plus the caches for backward.
pub fn deform<E: Element>(
    net: &ContourNet<E>,
    initial: &Contour,
    features: &Tensor<E>,
    stride: usize,
) -> Result<(Vec<Contour>, DeformCaches<E>)> {
    let n = net.config.vertex_count;
    if initial.len() != n {
        return Err(Error::ShapeMismatch {
            op: "deform",
            expected: format!("{n}-vertex initial contour"),
            got: format!("{} vertices", initial.len()),
        });
    }
    let mut iterates = Vec::with_capacity(net.config.iterations);
    let mut caches = Vec::with_capacity(net.config.iterations);
    let mut current = initial.clone();
    for _ in 0..net.config.iterations {
        let (vf, feat) = extract_vertex_features(features, &current, stride)?;
        let (offsets, net_caches) = net.forward(&vf)?;
        let mut next = current.clone();
        for (i, v) in next.vertices.iter_mut().enumerate() {
            v[0] += offsets.data()[i * 2].to_f64() * stride as f64;
            v[1] += offsets.data()[i * 2 + 1].to_f64() * stride as f64;
        }
        next.validate()?;
        iterates.push(next.clone());
        caches.push(IterCache {
            feat,
            net: net_caches,
        });
        current = next;
    }
    Ok((iterates, DeformCaches { iters: caches }))
}

/// Backpropagates per-iterate vertex gradients (input-pixel units) through
/// the deformation chain: through each offset regression into the network
/// parameters and the shared feature map, and through the identity path
/// into earlier iterates. Returns the gradient w.r.t. the initial vertices.
pub fn deform_backward<E: Element>(
    net: &mut ContourNet<E>,
    features: &Tensor<E>,
    caches: &DeformCaches<E>,
    d_iterates: &[Vec<[f64; 2]>],
    d_features: &mut Tensor<E>,
) -> Result<Vec<[f64; 2]>> {
    let t_count = caches.iters.len();
    assert_eq!(d_iterates.len(), t_count, "one gradient set per iterate");
    let n = net.config.vertex_count;

    let mut carry = vec![[0.0f64; 2]; n];
    for t in (0..t_count).rev() {
        // total gradient w.r.t. the vertices produced by iteration t
        let mut g = d_iterates[t].clone();
        for (gi, ci) in g.iter_mut().zip(&carry) {
            gi[0] += ci[0];
            gi[1] += ci[1];
        }

        // v_t = v_{t-1} + stride * offsets
        let stride = caches.iters[t].feat_stride();
        let d_offsets = Tensor::from_vec(
            &[n, 2],
            g.iter()
                .flat_map(|v| [E::from_f64(v[0] * stride), E::from_f64(v[1] * stride)])
                .collect(),
        )?;
        let d_vf = net.backward(&caches.iters[t].net, &d_offsets)?;
        let d_vin =
            vertex_features_backward(features, &caches.iters[t].feat, &d_vf, d_features)?;

        // identity path plus the feature-extraction path
        for ((c, gi), di) in carry.iter_mut().zip(&g).zip(&d_vin) {
            c[0] = gi[0] + di[0];
            c[1] = gi[1] + di[1];
        }
    }
    Ok(carry)
}

impl<E: Element> IterCache<E> {
    fn feat_stride(&self) -> f64 {
        self.feat.stride()
    }
}

/// Sum over iterates of the mean per-vertex distance to the index-matched
/// ground-truth vertex. L1 is `|dx| + |dy|`; the smooth variant is Huber
/// with delta = 1 px per coordinate.
pub fn contour_loss(iterates: &[Contour], gt: &Contour, kind: ContourLossKind) -> Result<f64> {
    Ok(contour_loss_with_grads(iterates, gt, kind)?.0)
}

/// Loss plus per-iterate vertex gradients in pixel units.
pub fn contour_loss_with_grads(
    iterates: &[Contour],
    gt: &Contour,
    kind: ContourLossKind,
) -> Result<(f64, Vec<Vec<[f64; 2]>>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(iterates.len());
    for it in iterates {
        if it.len() != gt.len() {
            return Err(Error::ShapeMismatch {
                op: "contour_loss",
                expected: format!("{} ground-truth vertices", gt.len()),
                got: format!("{} contour vertices", it.len()),
            });
        }
        let n = it.len() as f64;
        let mut g = vec![[0.0f64; 2]; it.len()];
        for (i, (v, t)) in it.vertices.iter().zip(&gt.vertices).enumerate() {
            for axis in 0..2 {
                let d = v[axis] - t[axis];
                match kind {
                    ContourLossKind::L1 => {
                        total += d.abs() / n;
                        g[i][axis] = d.signum() / n;
                    }
                    ContourLossKind::SmoothL1 => {
                        if d.abs() <= 1.0 {
                            total += 0.5 * d * d / n;
                            g[i][axis] = d / n;
                        } else {
                            total += (d.abs() - 0.5) / n;
                            g[i][axis] = d.signum() / n;
                        }
                    }
                }
            }
        }
        grads.push(g);
    }
    Ok((total, grads))
}
