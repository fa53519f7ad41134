//! Bounding-circle detection: shared backbone, heatmap/offset/radius heads,
//! training losses, and peak decoding.

mod backbone;
mod decode;
mod loss;

pub use backbone::{BatchOutputs, Detector, DetectorCaches};
pub use decode::{decode_detections, rotate_detector_output};
pub use loss::{focal_loss, focal_loss_with_grad, l1_at_centers, total_detection_loss, LossWeights};

use serde::{Deserialize, Serialize};

use crate::geom::Circle;
use crate::tensor::{Element, Tensor};

/// Feature stride of the decoded output lattice.
pub const OUTPUT_STRIDE: usize = 4;

/// Radius floor applied when decoding, guarding the degenerate-circle case.
pub const MIN_DECODED_RADIUS: f64 = 0.5;

/// Backbone shape: three stride-2 stages (internal stride 8) decoded back to
/// stride 4 through one upsampling stage fused with the stride-4 skip.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct BackboneConfig {
    pub stage_channels: [usize; 3],
    pub head_channels: usize,
    pub class_count: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            stage_channels: [16, 32, 64],
            head_channels: 64,
            class_count: 1,
        }
    }
}

/// Single-image detector output on the stride-R lattice.
#[derive(Debug, Clone)]
pub struct DetectorOutput<E: Element> {
    /// `[C, H/R, W/R]`, after sigmoid.
    pub heatmap: Tensor<E>,
    /// `[2, H/R, W/R]`: x then y offset channels.
    pub offsets: Tensor<E>,
    /// `[1, H/R, W/R]`, in stride units.
    pub radii: Tensor<E>,
}

/// A decoded object: class, bounding circle in input coordinates, and the
/// peak score.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub circle: Circle,
    pub score: f64,
}
