//! Initial contour proposals from detected circles.

use crate::error::Result;
use crate::geom::{circle_contour, sample_contour, Circle, Contour};

use super::ProposalMode;

/// Builds the N-vertex initial contour for a detection.
///
/// Circle mode samples the detected circle directly. The octagon baseline
/// rebuilds the legacy box-lineage proposal: from the circle's four extreme
/// points, each side of the bounding box contributes a segment of half-width
/// r/4 centered on its extreme point, and the resulting octagon is resampled
/// to N vertices.
pub fn propose_contour(det: &Circle, n: usize, mode: ProposalMode) -> Result<Contour> {
    match mode {
        ProposalMode::Circle => Ok(circle_contour(det, n)),
        ProposalMode::OctagonBaseline => {
            let (cx, cy, r) = (det.cx, det.cy, det.r);
            let q = r / 4.0;
            let octagon = Contour::new(vec![
                [cx - q, cy - r],
                [cx + q, cy - r],
                [cx + r, cy - q],
                [cx + r, cy + q],
                [cx + q, cy + r],
                [cx - q, cy + r],
                [cx - r, cy + q],
                [cx - r, cy - q],
            ]);
            sample_contour(&octagon, n)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_mode_starts_topmost_with_n_vertices() {
        let c = Circle::new(48.0, 48.0, 20.0);
        let contour = propose_contour(&c, 128, ProposalMode::Circle).unwrap();
        assert_eq!(contour.len(), 128);
        assert_eq!(contour.vertices[0], [48.0, 28.0]);
        for v in &contour.vertices {
            let d = (v[0] - 48.0).hypot(v[1] - 48.0);
            assert!((d - 20.0).abs() < 1e-9);
        }
    }

    #[test]
    fn octagon_mode_leaves_the_circle() {
        let c = Circle::new(48.0, 48.0, 20.0);
        let contour = propose_contour(&c, 128, ProposalMode::OctagonBaseline).unwrap();
        assert_eq!(contour.len(), 128);
        // corners of the octagon cut inside the circle
        let off_circle = contour
            .vertices
            .iter()
            .filter(|v| {
                let d = (v[0] - 48.0).hypot(v[1] - 48.0);
                (d - 20.0).abs() > 0.5
            })
            .count();
        assert!(off_circle > 32, "only {off_circle} vertices off the circle");
        // but every vertex stays within the bounding box of the circle
        for v in &contour.vertices {
            assert!(v[0] >= 28.0 - 1e-9 && v[0] <= 68.0 + 1e-9);
            assert!(v[1] >= 28.0 - 1e-9 && v[1] <= 68.0 + 1e-9);
        }
    }

    #[test]
    fn octagon_vertices_lie_on_octagon_perimeter() {
        let c = Circle::new(0.0, 0.0, 8.0);
        let contour = propose_contour(&c, 64, ProposalMode::OctagonBaseline).unwrap();
        // every sampled vertex satisfies max(|x|,|y|) = 8 (box side) or lies
        // on a diagonal chamfer |x| + |y| = 10
        for v in &contour.vertices {
            let on_side = (v[0].abs() - 8.0).abs() < 1e-9 || (v[1].abs() - 8.0).abs() < 1e-9;
            let on_chamfer = ((v[0].abs() + v[1].abs()) - 10.0).abs() < 1e-9;
            assert!(on_side || on_chamfer, "vertex {v:?} off the octagon");
        }
    }
}
