//! Synthetic ball-shaped-object datasets and training targets.

mod manifest;
mod pngio;
mod synth;
mod targets;

pub use manifest::{load_manifest, save_manifest};
pub use pngio::{load_png, save_png};
pub use synth::{generate_dataset, generate_image, GenReport};
pub use targets::{make_training_targets, CenterTarget, Targets};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{min_enclosing_circle, Circle, Contour, Mask};

/// One ground-truth object: class, boundary polygon, and the derived
/// bounding circle and rasterized area.
#[derive(Debug, Clone)]
pub struct InstanceAnnotation {
    pub class_id: usize,
    pub boundary: Contour,
    /// Minimal enclosing circle of the boundary vertices.
    pub circle: Circle,
    /// Rasterized mask area in px^2 at the owning image's extents.
    pub mask_area: f64,
}

impl InstanceAnnotation {
    pub fn new(
        class_id: usize,
        boundary: Contour,
        image_width: usize,
        image_height: usize,
    ) -> Result<Self> {
        boundary.validate()?;
        let circle = min_enclosing_circle(&boundary.vertices)?;
        let mask = Mask::from_contour(&boundary, image_width, image_height)?;
        Ok(InstanceAnnotation {
            class_id,
            boundary,
            circle,
            mask_area: mask.area() as f64,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub id: u32,
    pub file_path: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone)]
pub struct AnnotationRecord {
    pub image_id: u32,
    pub annotation: InstanceAnnotation,
}

/// One split's worth of images and annotations.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub split: String,
    pub class_names: Vec<String>,
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<AnnotationRecord>,
}

impl DatasetManifest {
    pub fn annotations_for(&self, image_id: u32) -> Vec<&InstanceAnnotation> {
        self.annotations
            .iter()
            .filter(|a| a.image_id == image_id)
            .map(|a| &a.annotation)
            .collect()
    }
}

/// Relative weights of the three synthetic shape families.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ShapeWeights {
    pub disk: f64,
    pub ellipse: f64,
    pub blob: f64,
}

impl Default for ShapeWeights {
    fn default() -> Self {
        ShapeWeights {
            disk: 0.34,
            ellipse: 0.33,
            blob: 0.33,
        }
    }
}

/// Synthetic dataset recipe. All randomness derives from `seed`, with each
/// image drawing from its own stream, so generation is order-independent.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub objects_per_image: (usize, usize),
    pub shape_weights: ShapeWeights,
    pub radius_range: (f64, f64),
    /// Minor/major axis ratio drawn for ellipse objects.
    pub axis_ratio_range: (f64, f64),
    /// Max |a_k| of the radial perturbation r(t) = r0 (1 + sum a_k cos(k t + p_k)).
    pub blob_amplitude: f64,
    /// 0 disables background texture; 1 is maximally noisy.
    pub background_texture: f64,
    /// Max allowed pairwise mask IoU between objects in one image.
    pub overlap_cap: f64,
    pub class_count: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 96,
            height: 96,
            objects_per_image: (1, 5),
            shape_weights: ShapeWeights::default(),
            radius_range: (7.0, 15.0),
            axis_ratio_range: (0.55, 0.9),
            blob_amplitude: 0.2,
            background_texture: 0.25,
            overlap_cap: 0.05,
            class_count: 1,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.width == 0 || self.height == 0 || self.width % 8 != 0 || self.height % 8 != 0 {
            return fail(format!(
                "image extents must be positive multiples of 8, got {}x{}",
                self.width, self.height
            ));
        }
        if self.objects_per_image.0 > self.objects_per_image.1 {
            return fail(format!(
                "objects_per_image range is empty: {:?}",
                self.objects_per_image
            ));
        }
        let w = self.shape_weights;
        if w.disk < 0.0 || w.ellipse < 0.0 || w.blob < 0.0 {
            return fail("shape weights must be non-negative".to_string());
        }
        if (w.disk + w.ellipse + w.blob - 1.0).abs() > 1e-9 {
            return fail(format!(
                "shape weights must sum to 1, got {}",
                w.disk + w.ellipse + w.blob
            ));
        }
        if !(self.radius_range.0 <= self.radius_range.1) || self.radius_range.0 < 2.0 {
            return fail(format!("invalid radius range {:?}", self.radius_range));
        }
        if !(self.axis_ratio_range.0 <= self.axis_ratio_range.1)
            || self.axis_ratio_range.0 <= 0.0
            || self.axis_ratio_range.1 > 1.0
        {
            return fail(format!(
                "axis ratio range must lie in (0, 1]: {:?}",
                self.axis_ratio_range
            ));
        }
        if !(0.0..=0.2).contains(&self.blob_amplitude) {
            return fail(format!(
                "blob amplitude must lie in [0, 0.2], got {}",
                self.blob_amplitude
            ));
        }
        if !(0.0..=1.0).contains(&self.background_texture) {
            return fail(format!(
                "background texture must lie in [0, 1], got {}",
                self.background_texture
            ));
        }
        if !(0.0..1.0).contains(&self.overlap_cap) {
            return fail(format!(
                "overlap cap must lie in [0, 1), got {}",
                self.overlap_cap
            ));
        }
        if self.class_count == 0 {
            return fail("class_count must be at least 1".to_string());
        }
        let max_r = self.radius_range.1 * (1.0 + self.blob_amplitude * 2.0);
        if 2.0 * (max_r + 3.0) >= self.width.min(self.height) as f64 {
            return fail(format!(
                "radius range {:?} does not fit a {}x{} image",
                self.radius_range, self.width, self.height
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        SynthConfig::default().validate().unwrap();
    }

    #[test]
    fn overlap_cap_out_of_range_is_rejected() {
        let cfg = SynthConfig {
            overlap_cap: 1.5,
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn weights_must_sum_to_one() {
        let cfg = SynthConfig {
            shape_weights: ShapeWeights {
                disk: 0.5,
                ellipse: 0.5,
                blob: 0.5,
            },
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn annotation_circle_contains_boundary() {
        let boundary = Contour::new(vec![[10.0, 10.0], [30.0, 12.0], [25.0, 30.0], [8.0, 24.0]]);
        let ann = InstanceAnnotation::new(0, boundary, 96, 96).unwrap();
        for v in &ann.boundary.vertices {
            assert!(ann.circle.contains(*v, 1e-9));
        }
        assert!(ann.mask_area > 0.0);
    }
}
