//! Minimal enclosing circle, deterministic incremental variant.
//!
//! Same structure as the classic randomized algorithm but processing points
//! in their given order, so identical inputs always produce identical
//! circles. Inputs here are small (annotation polygons), where the loss of
//! the randomized expected-linear bound is irrelevant.

use crate::error::{Error, Result};

use super::Circle;

/// Radius assigned to degenerate inputs (single or coincident points), so
/// downstream radius regression always sees r > 0.
pub const MIN_CIRCLE_RADIUS: f64 = 0.5;

const EPS: f64 = 1e-12;

fn contains(c: &Circle, p: [f64; 2]) -> bool {
    let dx = p[0] - c.cx;
    let dy = p[1] - c.cy;
    dx.hypot(dy) <= c.r * (1.0 + EPS) + EPS
}

fn circle_from_two(a: [f64; 2], b: [f64; 2]) -> Circle {
    let cx = 0.5 * (a[0] + b[0]);
    let cy = 0.5 * (a[1] + b[1]);
    let r = (a[0] - cx).hypot(a[1] - cy).max((b[0] - cx).hypot(b[1] - cy));
    Circle::new(cx, cy, r)
}

/// Circumscribed circle; None when the points are (near-)collinear.
fn circle_from_three(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<Circle> {
    // relative to a midpoint for numerical stability
    let ox = (a[0].min(b[0]).min(c[0]) + a[0].max(b[0]).max(c[0])) / 2.0;
    let oy = (a[1].min(b[1]).min(c[1]) + a[1].max(b[1]).max(c[1])) / 2.0;
    let (ax, ay) = (a[0] - ox, a[1] - oy);
    let (bx, by) = (b[0] - ox, b[1] - oy);
    let (cx, cy) = (c[0] - ox, c[1] - oy);
    let d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
    if d.abs() < 1e-14 {
        return None;
    }
    let ux = ((ax * ax + ay * ay) * (by - cy)
        + (bx * bx + by * by) * (cy - ay)
        + (cx * cx + cy * cy) * (ay - by))
        / d;
    let uy = ((ax * ax + ay * ay) * (cx - bx)
        + (bx * bx + by * by) * (ax - cx)
        + (cx * cx + cy * cy) * (bx - ax))
        / d;
    let center = [ux + ox, uy + oy];
    let r = (a[0] - center[0])
        .hypot(a[1] - center[1])
        .max((b[0] - center[0]).hypot(b[1] - center[1]))
        .max((c[0] - center[0]).hypot(c[1] - center[1]));
    Some(Circle::new(center[0], center[1], r))
}

fn circle_with_two_boundary(points: &[[f64; 2]], p: [f64; 2], q: [f64; 2]) -> Circle {
    let base = circle_from_two(p, q);
    let mut left: Option<Circle> = None;
    let mut right: Option<Circle> = None;
    let (px, py) = (q[0] - p[0], q[1] - p[1]);

    for &r in points {
        if contains(&base, r) {
            continue;
        }
        let cross = px * (r[1] - p[1]) - py * (r[0] - p[0]);
        let Some(c) = circle_from_three(p, q, r) else {
            continue;
        };
        let c_cross = px * (c.cy - p[1]) - py * (c.cx - p[0]);
        if cross > 0.0 {
            if left.is_none() || c_cross > px * (left.unwrap().cy - p[1]) - py * (left.unwrap().cx - p[0]) {
                left = Some(c);
            }
        } else if cross < 0.0 {
            if right.is_none()
                || c_cross < px * (right.unwrap().cy - p[1]) - py * (right.unwrap().cx - p[0])
            {
                right = Some(c);
            }
        }
    }

    match (left, right) {
        (None, None) => base,
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (Some(l), Some(r)) => {
            if l.r <= r.r {
                l
            } else {
                r
            }
        }
    }
}

fn circle_with_one_boundary(points: &[[f64; 2]], p: [f64; 2]) -> Circle {
    let mut c = Circle::new(p[0], p[1], 0.0);
    for (i, &q) in points.iter().enumerate() {
        if contains(&c, q) {
            continue;
        }
        c = if c.r == 0.0 {
            circle_from_two(p, q)
        } else {
            circle_with_two_boundary(&points[..=i], p, q)
        };
    }
    c
}

/// Smallest circle containing all points, processed in input order.
///
/// Degenerate inputs (one point, coincident points) return the declared
/// minimum radius [`MIN_CIRCLE_RADIUS`]; the radius never comes back smaller
/// than that.
pub fn min_enclosing_circle(points: &[[f64; 2]]) -> Result<Circle> {
    if points.is_empty() {
        return Err(Error::DegenerateGeometry(
            "minimal enclosing circle of an empty point set".to_string(),
        ));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::DegenerateGeometry(
            "minimal enclosing circle of non-finite points".to_string(),
        ));
    }

    let mut c = Circle::new(points[0][0], points[0][1], 0.0);
    for (i, &p) in points.iter().enumerate().skip(1) {
        if !contains(&c, p) {
            c = circle_with_one_boundary(&points[..=i], p);
        }
    }
    c.r = c.r.max(MIN_CIRCLE_RADIUS);
    Ok(c)
}
