//! Bilinear feature sampling, differentiable in both the feature map and the
//! sample coordinates.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Per-point interpolation state for the backward pass.
#[derive(Debug)]
pub struct BilinearCache<E: Element> {
    taps: Vec<PointTaps<E>>,
    feature_shape: Vec<usize>,
}

#[derive(Debug)]
struct PointTaps<E: Element> {
    x0: usize,
    y0: usize,
    fx: E,
    fy: E,
    // coordinate gradients vanish where the sample point was clamped
    dx_active: bool,
    dy_active: bool,
}

/// Samples `feature [C, H, W]` at the given points, returning `[P, C]`.
///
/// Coordinates are in feature-map units with integer pixel centers.
/// Out-of-bounds points are clamped to the valid rectangle, which keeps the
/// value (and a zero coordinate gradient) defined everywhere.
pub fn bilinear_sample<E: Element>(
    feature: &Tensor<E>,
    points: &[(E, E)],
) -> Result<(Tensor<E>, BilinearCache<E>)> {
    let shape = feature.shape();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "bilinear_sample",
            expected: "[C, H, W]".to_string(),
            got: format!("{:?}", shape),
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let max_x = E::from_f64((w - 1) as f64);
    let max_y = E::from_f64((h - 1) as f64);

    let mut out = vec![E::ZERO; points.len() * c];
    let mut taps = Vec::with_capacity(points.len());
    for (pi, &(x, y)) in points.iter().enumerate() {
        let dx_active = x > E::ZERO && x < max_x;
        let dy_active = y > E::ZERO && y < max_y;
        let xc = x.max(E::ZERO).min(max_x);
        let yc = y.max(E::ZERO).min(max_y);

        let mut x0 = xc.to_f64().floor() as usize;
        let mut y0 = yc.to_f64().floor() as usize;
        if w > 1 && x0 >= w - 1 {
            x0 = w - 2;
        }
        if h > 1 && y0 >= h - 1 {
            y0 = h - 2;
        }
        let fx = xc - E::from_f64(x0 as f64);
        let fy = yc - E::from_f64(y0 as f64);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);

        let w00 = (E::ONE - fx) * (E::ONE - fy);
        let w01 = fx * (E::ONE - fy);
        let w10 = (E::ONE - fx) * fy;
        let w11 = fx * fy;
        for ci in 0..c {
            let plane = &feature.data()[ci * h * w..(ci + 1) * h * w];
            out[pi * c + ci] = plane[y0 * w + x0] * w00
                + plane[y0 * w + x1] * w01
                + plane[y1 * w + x0] * w10
                + plane[y1 * w + x1] * w11;
        }
        taps.push(PointTaps {
            x0,
            y0,
            fx,
            fy,
            dx_active,
            dy_active,
        });
    }
    Ok((
        Tensor::from_vec(&[points.len(), c], out)?,
        BilinearCache {
            taps,
            feature_shape: shape.to_vec(),
        },
    ))
}

/// Backward for [`bilinear_sample`]: scatters `d_out [P, C]` into the feature
/// gradient and returns per-point coordinate gradients.
pub fn bilinear_sample_backward<E: Element>(
    feature: &Tensor<E>,
    cache: &BilinearCache<E>,
    d_out: &Tensor<E>,
    d_feature: &mut Tensor<E>,
) -> Vec<(E, E)> {
    let (c, h, w) = (
        cache.feature_shape[0],
        cache.feature_shape[1],
        cache.feature_shape[2],
    );
    assert_eq!(d_out.shape(), &[cache.taps.len(), c], "bilinear d_out shape");
    assert_eq!(
        d_feature.shape(),
        cache.feature_shape.as_slice(),
        "bilinear d_feature shape"
    );

    let mut d_points = vec![(E::ZERO, E::ZERO); cache.taps.len()];
    for (pi, tap) in cache.taps.iter().enumerate() {
        let x1 = (tap.x0 + 1).min(w - 1);
        let y1 = (tap.y0 + 1).min(h - 1);
        let (fx, fy) = (tap.fx, tap.fy);
        let w00 = (E::ONE - fx) * (E::ONE - fy);
        let w01 = fx * (E::ONE - fy);
        let w10 = (E::ONE - fx) * fy;
        let w11 = fx * fy;

        let mut gx = E::ZERO;
        let mut gy = E::ZERO;
        for ci in 0..c {
            let g = d_out.data()[pi * c + ci];
            let plane_base = ci * h * w;
            {
                let grad = d_feature.data_mut();
                grad[plane_base + tap.y0 * w + tap.x0] += g * w00;
                grad[plane_base + tap.y0 * w + x1] += g * w01;
                grad[plane_base + y1 * w + tap.x0] += g * w10;
                grad[plane_base + y1 * w + x1] += g * w11;
            }
            let plane = &feature.data()[plane_base..plane_base + h * w];
            let v00 = plane[tap.y0 * w + tap.x0];
            let v01 = plane[tap.y0 * w + x1];
            let v10 = plane[y1 * w + tap.x0];
            let v11 = plane[y1 * w + x1];
            gx += g * ((v01 - v00) * (E::ONE - fy) + (v11 - v10) * fy);
            gy += g * ((v10 - v00) * (E::ONE - fx) + (v11 - v01) * fx);
        }
        d_points[pi] = (
            if tap.dx_active { gx } else { E::ZERO },
            if tap.dy_active { gy } else { E::ZERO },
        );
    }
    d_points
}
