//! Circle overlap and circle-to-contour conversion.

use std::f64::consts::PI;

use super::{Circle, Contour};

/// Intersection-over-union of two discs via the closed-form lens area.
pub fn circle_iou(a: &Circle, b: &Circle) -> f64 {
    let d = (a.cx - b.cx).hypot(a.cy - b.cy);
    let (r1, r2) = (a.r, b.r);
    let inter = if d >= r1 + r2 {
        0.0
    } else if d <= (r1 - r2).abs() {
        let rm = r1.min(r2);
        PI * rm * rm
    } else {
        // sum of the two circular segments minus the kite
        let cos1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0);
        let cos2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0);
        let a1 = r1 * r1 * cos1.acos();
        let a2 = r2 * r2 * cos2.acos();
        let k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
        a1 + a2 - 0.5 * k.max(0.0).sqrt()
    };
    let union = PI * r1 * r1 + PI * r2 * r2 - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// N vertices uniformly spaced on the circle, starting at the topmost point
/// and proceeding clockwise in the y-down frame:
/// `v_i = (cx + r sin t, cy - r cos t)`, `t = 2 pi i / n`.
pub fn circle_contour(c: &Circle, n: usize) -> Contour {
    assert!(n >= 3, "circle contour needs at least 3 vertices");
    let mut vertices = Vec::with_capacity(n);
    for i in 0..n {
        let t = 2.0 * PI * i as f64 / n as f64;
        vertices.push([c.cx + c.r * t.sin(), c.cy - c.r * t.cos()]);
    }
    Contour::new(vertices)
}
