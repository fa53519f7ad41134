//! Contour proposal and learned deformation.
//!
//! A detected circle becomes an N-vertex proposal; per-vertex features
//! (bilinear samples of the shared feature map plus centroid-relative
//! coordinates) feed a circular-convolution network that regresses vertex
//! offsets over three iterations.

mod circconv;
mod deformer;
mod feature;
mod network;
mod propose;

pub use circconv::CircularConv;
pub use deformer::{contour_loss, contour_loss_with_grads, deform, deform_backward, DeformCaches};
pub use feature::{extract_vertex_features, vertex_features_backward, VertexFeatureCache};
pub use network::{ContourNet, NetCaches, SeqNorm};
pub use propose::propose_contour;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-vertex input rows `[N, D + 2]`: D sampled feature channels followed
/// by the vertex's centroid-relative coordinates in stride units.
pub type VertexFeatures<E> = Tensor<E>;

/// How the initial contour is built from a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalMode {
    /// N points uniformly on the detected circle (the pipeline default).
    Circle,
    /// Octagon through the circle's four extreme points, resampled to N
    /// (comparison harness only).
    OctagonBaseline,
}

/// Per-iterate distance penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContourLossKind {
    /// Plain L1, as the iterative loss is written.
    L1,
    /// Smooth-L1 (Huber, delta = 1 px) variant.
    SmoothL1,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SnakeConfig {
    pub vertex_count: usize,
    /// Circular-convolution kernel size (odd).
    pub kernel_size: usize,
    /// Number of backbone blocks.
    pub depth: usize,
    pub state_width: usize,
    pub fusion_width: usize,
    pub prediction_width: usize,
    pub iterations: usize,
    pub mode: ProposalMode,
    pub loss: ContourLossKind,
}

impl Default for SnakeConfig {
    fn default() -> Self {
        SnakeConfig {
            vertex_count: 128,
            kernel_size: 9,
            depth: 8,
            state_width: 64,
            fusion_width: 128,
            prediction_width: 64,
            iterations: 3,
            mode: ProposalMode::Circle,
            loss: ContourLossKind::L1,
        }
    }
}

impl SnakeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "circular-conv kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".to_string()));
        }
        if self.vertex_count < 4 || self.kernel_size / 2 >= self.vertex_count {
            return Err(Error::Config(format!(
                "vertex count {} too small for kernel {}",
                self.vertex_count, self.kernel_size
            )));
        }
        if self.depth == 0 || self.state_width == 0 || self.fusion_width == 0 {
            return Err(Error::Config("zero-width contour network".to_string()));
        }
        Ok(())
    }
}
