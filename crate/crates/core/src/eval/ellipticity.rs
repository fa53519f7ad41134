//! Object-roundness analysis: mean minor/major axis ratio of the ground
//! truth versus detection and segmentation AP.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{average_precision, coco_thresholds, IouKind, Scene};
use crate::geom::ellipse_axis_ratio;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EllipticityPoint {
    pub mean_axis_ratio: f64,
    pub detection_ap: Option<f64>,
    pub segmentation_ap: Option<f64>,
}

/// One sweep point: mean ellipse axis ratio over the ground truth plus the
/// threshold-swept AP pair on the same scenes.
pub fn ellipticity_point(scenes: &[Scene], class_count: usize) -> Result<EllipticityPoint> {
    let mut ratios = Vec::new();
    for scene in scenes {
        for gt in &scene.ground_truth {
            ratios.push(ellipse_axis_ratio(&gt.boundary)?);
        }
    }
    let mean_axis_ratio = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    let thresholds = coco_thresholds();
    let det = average_precision(scenes, class_count, IouKind::Circle, &thresholds)?;
    let seg = average_precision(scenes, class_count, IouKind::Mask, &thresholds)?;
    Ok(EllipticityPoint {
        mean_axis_ratio,
        detection_ap: det.ap,
        segmentation_ap: seg.ap,
    })
}
