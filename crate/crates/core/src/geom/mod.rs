//! Exact and sampled 2-D geometry in the image frame (y grows downward).
//!
//! All coordinates are real pixels with integer pixel centers: pixel `(i, j)`
//! sits at real `(i as f64, j as f64)`. "Clockwise" means clockwise as
//! displayed on screen, which makes the shoelace sum positive.
//!
//! Every operation here is a pure function on immutable inputs.

mod circle;
mod contour;
mod mask;
mod mec;
mod rotate;

pub use circle::{circle_contour, circle_iou};
pub use contour::{ellipse_axis_ratio, sample_contour};
pub use mask::{mask_dice, Mask};
pub use mec::{min_enclosing_circle, MIN_CIRCLE_RADIUS};
pub use rotate::{rotate90_circle, rotate90_contour, rotate90_mask, rotate90_point, rotate90_tensor, Turn};

use crate::error::{Error, Result};

/// A circle in pixel units: center plus radius — the 2-DoF object
/// representation used for both detection and contour proposals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Circle { cx, cy, r }
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.r * self.r
    }

    pub fn contains(&self, p: [f64; 2], slack: f64) -> bool {
        let dx = p[0] - self.cx;
        let dy = p[1] - self.cy;
        dx * dx + dy * dy <= (self.r + slack) * (self.r + slack)
    }

    pub fn is_valid(&self) -> bool {
        self.cx.is_finite() && self.cy.is_finite() && self.r.is_finite() && self.r > 0.0
    }
}

/// An ordered, implicitly closed ring of vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub vertices: Vec<[f64; 2]>,
}

impl Contour {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Contour { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// At least 3 finite vertices.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "contour needs >= 3 vertices, got {}",
                self.vertices.len()
            )));
        }
        if self
            .vertices
            .iter()
            .any(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(Error::DegenerateGeometry(
                "contour has non-finite vertex".to_string(),
            ));
        }
        Ok(())
    }

    /// Shoelace area; positive for screen-clockwise rings in the y-down frame.
    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            sum += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * sum
    }

    pub fn perimeter(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut p = 0.0;
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            p += (b[0] - a[0]).hypot(b[1] - a[1]);
        }
        p
    }

    /// Mean of the vertices (used as the local frame for feature extraction).
    pub fn vertex_centroid(&self) -> [f64; 2] {
        let n = self.vertices.len().max(1) as f64;
        let mut c = [0.0, 0.0];
        for v in &self.vertices {
            c[0] += v[0];
            c[1] += v[1];
        }
        [c[0] / n, c[1] / n]
    }

    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY, f64::INFINITY];
        let mut hi = [f64::NEG_INFINITY, f64::NEG_INFINITY];
        for v in &self.vertices {
            lo[0] = lo[0].min(v[0]);
            lo[1] = lo[1].min(v[1]);
            hi[0] = hi[0].max(v[0]);
            hi[1] = hi[1].max(v[1]);
        }
        (lo, hi)
    }
}
