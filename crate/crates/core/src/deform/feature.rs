//! Per-vertex feature extraction: bilinear samples of the shared feature
//! map concatenated with centroid-relative vertex coordinates.

use crate::deform::VertexFeatures;
use crate::error::Result;
use crate::geom::Contour;
use crate::nn::{bilinear_sample, bilinear_sample_backward, BilinearCache};
use crate::tensor::{Element, Tensor};

pub struct VertexFeatureCache<E: Element> {
    bilinear: BilinearCache<E>,
    n: usize,
    feature_dim: usize,
    stride: f64,
}

impl<E: Element> VertexFeatureCache<E> {
    pub(crate) fn stride(&self) -> f64 {
        self.stride
    }
}

/// Builds `[N, D+2]` rows: D feature channels sampled at `vertex / stride`
/// (clamped bilinear), then the vertex's coordinates relative to the
/// contour's own centroid, in stride units. Differentiable w.r.t. both the
/// feature map and the vertex positions.
pub fn extract_vertex_features<E: Element>(
    features: &Tensor<E>,
    contour: &Contour,
    stride: usize,
) -> Result<(VertexFeatures<E>, VertexFeatureCache<E>)> {
    let d = features.shape()[0];
    let n = contour.vertices.len();
    let s = stride as f64;
    let points: Vec<(E, E)> = contour
        .vertices
        .iter()
        .map(|v| (E::from_f64(v[0] / s), E::from_f64(v[1] / s)))
        .collect();
    let (sampled, bilinear) = bilinear_sample(features, &points)?;

    let centroid = contour.vertex_centroid();
    let mut rows = vec![E::ZERO; n * (d + 2)];
    for i in 0..n {
        rows[i * (d + 2)..i * (d + 2) + d]
            .copy_from_slice(&sampled.data()[i * d..(i + 1) * d]);
        rows[i * (d + 2) + d] = E::from_f64((contour.vertices[i][0] - centroid[0]) / s);
        rows[i * (d + 2) + d + 1] = E::from_f64((contour.vertices[i][1] - centroid[1]) / s);
    }
    Ok((
        Tensor::from_vec(&[n, d + 2], rows)?,
        VertexFeatureCache {
            bilinear,
            n,
            feature_dim: d,
            stride: s,
        },
    ))
}

/// Backward of [`extract_vertex_features`]: accumulates into `d_features`
/// and returns per-vertex position gradients in input-pixel units.
pub fn vertex_features_backward<E: Element>(
    features: &Tensor<E>,
    cache: &VertexFeatureCache<E>,
    d_rows: &Tensor<E>,
    d_features: &mut Tensor<E>,
) -> Result<Vec<[f64; 2]>> {
    let (n, d) = (cache.n, cache.feature_dim);
    debug_assert_eq!(d_rows.shape(), &[n, d + 2]);

    let mut d_sampled = vec![E::ZERO; n * d];
    for i in 0..n {
        d_sampled[i * d..(i + 1) * d]
            .copy_from_slice(&d_rows.data()[i * (d + 2)..i * (d + 2) + d]);
    }
    let d_sampled = Tensor::from_vec(&[n, d], d_sampled)?;
    let d_points = bilinear_sample_backward(features, &cache.bilinear, &d_sampled, d_features);

    // coordinate channels: c_i = (v_i - mean(v)) / stride, so
    // dL/dv_j = (g_j - mean(g)) / stride with g the coordinate-channel grads,
    // plus the sampling gradient at p = v / stride.
    let mut gx_sum = 0.0;
    let mut gy_sum = 0.0;
    for i in 0..n {
        gx_sum += d_rows.data()[i * (d + 2) + d].to_f64();
        gy_sum += d_rows.data()[i * (d + 2) + d + 1].to_f64();
    }
    let (gx_mean, gy_mean) = (gx_sum / n as f64, gy_sum / n as f64);

    let mut d_vertices = vec![[0.0f64; 2]; n];
    for i in 0..n {
        let gx = d_rows.data()[i * (d + 2) + d].to_f64();
        let gy = d_rows.data()[i * (d + 2) + d + 1].to_f64();
        d_vertices[i][0] = (d_points[i].0.to_f64() + gx - gx_mean) / cache.stride;
        d_vertices[i][1] = (d_points[i].1.to_f64() + gy - gy_mean) / cache.stride;
    }
    Ok(d_vertices)
}
