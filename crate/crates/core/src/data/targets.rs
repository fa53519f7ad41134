//! Training-target rendering: Gaussian center heatmaps plus per-center
//! offset and radius regression targets on the stride-R lattice.

use crate::data::InstanceAnnotation;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// One supervised center cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterTarget {
    pub class_id: usize,
    pub cell_x: usize,
    pub cell_y: usize,
    /// Fractional part of the downsampled center.
    pub offset: [f64; 2],
    /// Ground-truth radius in stride units.
    pub radius_cells: f64,
}

#[derive(Debug, Clone)]
pub struct Targets<E: Element> {
    /// `[C, H/R, W/R]`, values in [0, 1]; overlapping splats combine by max.
    pub heatmap: Tensor<E>,
    /// `[2, H/R, W/R]`, filled at center cells.
    pub offsets: Tensor<E>,
    /// `[1, H/R, W/R]`, filled at center cells.
    pub radii: Tensor<E>,
    pub centers: Vec<CenterTarget>,
}

/// Gaussian kernel width: radius-proportional, never below one cell.
pub fn gaussian_sigma(radius_px: f64, stride: usize) -> f64 {
    (radius_px / (3.0 * stride as f64)).max(1.0)
}

/// Splats every annotation onto the downsampled lattice.
///
/// The Gaussian is centered at the integer-floored downsampled center so the
/// center cell holds exactly 1.0; the fractional remainder becomes the
/// offset target, which makes decoding recover the exact center.
pub fn make_training_targets<E: Element>(
    annotations: &[InstanceAnnotation],
    class_count: usize,
    image_size: (usize, usize),
    stride: usize,
) -> Result<Targets<E>> {
    let (w, h) = image_size;
    if stride == 0 || w % stride != 0 || h % stride != 0 {
        return Err(Error::Config(format!(
            "stride {stride} must divide image extents {w}x{h}"
        )));
    }
    let (gw, gh) = (w / stride, h / stride);
    let mut heatmap = Tensor::<E>::zeros(&[class_count, gh, gw]);
    let mut offsets = Tensor::<E>::zeros(&[2, gh, gw]);
    let mut radii = Tensor::<E>::zeros(&[1, gh, gw]);
    let mut centers = Vec::with_capacity(annotations.len());

    for ann in annotations {
        if ann.class_id >= class_count {
            return Err(Error::Config(format!(
                "annotation class {} outside [0, {class_count})",
                ann.class_id
            )));
        }
        let (cx, cy) = (ann.circle.cx, ann.circle.cy);
        if cx < 0.0 || cy < 0.0 || cx > (w - 1) as f64 || cy > (h - 1) as f64 {
            return Err(Error::Config(format!(
                "object center ({cx}, {cy}) outside {w}x{h} image"
            )));
        }
        let down = [cx / stride as f64, cy / stride as f64];
        let cell = [
            (down[0].floor() as usize).min(gw - 1),
            (down[1].floor() as usize).min(gh - 1),
        ];
        let offset = [down[0] - cell[0] as f64, down[1] - cell[1] as f64];
        let radius_cells = ann.circle.r / stride as f64;
        let sigma = gaussian_sigma(ann.circle.r, stride);

        // truncated splat: beyond 3 sigma the kernel is < 1.2e-2 of peak
        let reach = (3.0 * sigma).ceil() as isize;
        let hm = heatmap.data_mut();
        for dy in -reach..=reach {
            let y = cell[1] as isize + dy;
            if y < 0 || y >= gh as isize {
                continue;
            }
            for dx in -reach..=reach {
                let x = cell[0] as isize + dx;
                if x < 0 || x >= gw as isize {
                    continue;
                }
                let d2 = (dx * dx + dy * dy) as f64;
                let v = (-d2 / (2.0 * sigma * sigma)).exp();
                let idx = ann.class_id * gh * gw + y as usize * gw + x as usize;
                if v > hm[idx].to_f64() {
                    hm[idx] = E::from_f64(v);
                }
            }
        }

        let ci = cell[1] * gw + cell[0];
        offsets.data_mut()[ci] = E::from_f64(offset[0]);
        offsets.data_mut()[gh * gw + ci] = E::from_f64(offset[1]);
        radii.data_mut()[ci] = E::from_f64(radius_cells);
        centers.push(CenterTarget {
            class_id: ann.class_id,
            cell_x: cell[0],
            cell_y: cell[1],
            offset,
            radius_cells,
        });
    }

    Ok(Targets {
        heatmap,
        offsets,
        radii,
        centers,
    })
}
