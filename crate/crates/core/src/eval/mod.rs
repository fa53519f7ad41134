//! Scoring: average precision over circle IoU (detection) and mask IoU
//! (segmentation), instance-matched Dice, rotation consistency, ellipticity
//! analysis, and report emission.

mod ap;
mod dice;
mod ellipticity;
mod report;
mod results;
mod rotation;
mod svg;

pub use ap::{average_precision, match_detections, pr_curve_at_50, ApTable, IouKind, MatchResult, PrPoint};
pub use dice::{mean_dice, pixel_union_dice};
pub use ellipticity::{ellipticity_point, EllipticityPoint};
pub use report::{emit_report, load_report, EvalReport, REPORT_SCHEMA_VERSION};
pub use results::{load_results, save_results, RESULTS_SCHEMA_VERSION};
pub use rotation::{rotation_consistency, RotationConsistency, SegmentationModel};
pub use svg::{box_plot_svg, line_plot_svg};

use crate::data::InstanceAnnotation;
use crate::geom::{Circle, Contour, Mask};

/// COCO area buckets: small < 32^2, medium in [32^2, 96^2).
pub const SMALL_AREA: f64 = 32.0 * 32.0;
pub const MEDIUM_AREA: f64 = 96.0 * 96.0;

/// IoU thresholds 0.50:0.05:0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// One predicted instance.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub class_id: usize,
    pub score: f64,
    pub circle: Circle,
    pub contour: Contour,
}

/// One image's worth of ground truth and predictions.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image_id: u32,
    pub width: usize,
    pub height: usize,
    pub ground_truth: Vec<InstanceAnnotation>,
    pub predictions: Vec<Prediction>,
}

impl Scene {
    pub fn gt_mask(&self, idx: usize) -> crate::error::Result<Mask> {
        Mask::from_contour(&self.ground_truth[idx].boundary, self.width, self.height)
    }

    pub fn pred_mask(&self, idx: usize) -> crate::error::Result<Mask> {
        Mask::from_contour(&self.predictions[idx].contour, self.width, self.height)
    }
}
