//! Rotation consistency: agreement between predictions on an image and
//! back-rotated predictions on its quarter-turned copy.
//!
//! Quarter turns are exact on the pixel lattice, so any disagreement comes
//! from the model, not from resampling.

use crate::error::Result;
use crate::eval::Prediction;
use crate::geom::{mask_dice, rotate90_circle, rotate90_contour, rotate90_tensor, Mask, Turn};
use crate::tensor::Tensor;

/// Anything that maps an image to instance predictions.
pub trait SegmentationModel {
    fn predict(&mut self, image: &Tensor<f32>) -> Result<Vec<Prediction>>;
}

#[derive(Debug, Clone)]
pub struct RotationConsistency {
    /// Mean over scored images of the pairwise-Dice agreement.
    pub score: f64,
    /// Images skipped because neither orientation produced predictions.
    pub skipped_images: usize,
    pub scored_images: usize,
}

/// Runs the model on each image and on its 90-degree rotation, maps the
/// rotated predictions back, pairs the two sets greedily by mask IoU, and
/// averages Dice over pairs; unpaired predictions from either side count 0.
pub fn rotation_consistency(
    model: &mut dyn SegmentationModel,
    images: &[Tensor<f32>],
) -> Result<RotationConsistency> {
    let mut total = 0.0;
    let mut scored = 0usize;
    let mut skipped = 0usize;
    for image in images {
        let (h, w) = (image.shape()[1], image.shape()[2]);
        let straight = model.predict(image)?;
        let rotated_img = rotate90_tensor(image, Turn::Ccw);
        let rotated = model.predict(&rotated_img)?;
        // map predictions from the rotated frame (extents h x w) back
        let mapped: Vec<Prediction> = rotated
            .into_iter()
            .map(|p| Prediction {
                class_id: p.class_id,
                score: p.score,
                circle: rotate90_circle(&p.circle, h, w, Turn::Cw),
                contour: rotate90_contour(&p.contour, h, w, Turn::Cw),
            })
            .collect();

        if straight.is_empty() && mapped.is_empty() {
            skipped += 1;
            continue;
        }
        total += pairwise_agreement(&straight, &mapped, w, h)?;
        scored += 1;
    }
    Ok(RotationConsistency {
        score: if scored == 0 { 0.0 } else { total / scored as f64 },
        skipped_images: skipped,
        scored_images: scored,
    })
}

/// Greedy IoU pairing between two prediction sets; mean Dice with unpaired
/// entries from either side contributing 0.
fn pairwise_agreement(a: &[Prediction], b: &[Prediction], w: usize, h: usize) -> Result<f64> {
    let a_masks: Vec<Mask> = a
        .iter()
        .map(|p| Mask::from_contour(&p.contour, w, h))
        .collect::<Result<_>>()?;
    let b_masks: Vec<Mask> = b
        .iter()
        .map(|p| Mask::from_contour(&p.contour, w, h))
        .collect::<Result<_>>()?;

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, am) in a_masks.iter().enumerate() {
        for (j, bm) in b_masks.iter().enumerate() {
            if a[i].class_id != b[j].class_id {
                continue;
            }
            let iou = am.iou(bm);
            if iou > 0.0 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut dice_sum = 0.0;
    let mut paired = 0usize;
    for (_, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        dice_sum += mask_dice(&a_masks[i], &b_masks[j])?;
        paired += 1;
    }
    let denom = a.len() + b.len() - paired;
    Ok(if denom == 0 { 1.0 } else { dice_sum / denom as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{circle_contour, Circle};

    /// Fixed predictions in whatever frame the input arrives in; rotating
    /// the stored contours alongside the image makes the model perfectly
    /// consistent.
    struct OracleModel {
        contours: Vec<crate::geom::Contour>,
        circles: Vec<Circle>,
        extents: (usize, usize),
    }

    impl SegmentationModel for OracleModel {
        fn predict(&mut self, image: &Tensor<f32>) -> Result<Vec<Prediction>> {
            let (h, w) = (image.shape()[1], image.shape()[2]);
            let rotated = (w, h) != (self.extents.0, self.extents.1);
            Ok(self
                .contours
                .iter()
                .zip(&self.circles)
                .map(|(c, circ)| {
                    if rotated {
                        Prediction {
                            class_id: 0,
                            score: 1.0,
                            circle: rotate90_circle(circ, self.extents.0, self.extents.1, Turn::Ccw),
                            contour: rotate90_contour(c, self.extents.0, self.extents.1, Turn::Ccw),
                        }
                    } else {
                        Prediction {
                            class_id: 0,
                            score: 1.0,
                            circle: *circ,
                            contour: c.clone(),
                        }
                    }
                })
                .collect())
        }
    }

    #[test]
    fn ground_truth_model_scores_exactly_one() {
        let circles = vec![Circle::new(20.0, 24.0, 8.0), Circle::new(60.5, 40.25, 10.0)];
        let contours = circles.iter().map(|c| circle_contour(c, 64)).collect();
        let mut model = OracleModel {
            contours,
            circles,
            extents: (96, 80),
        };
        let image = Tensor::zeros(&[3, 80, 96]);
        let rc = rotation_consistency(&mut model, &[image]).unwrap();
        assert_eq!(rc.score, 1.0);
        assert_eq!(rc.scored_images, 1);
        assert_eq!(rc.skipped_images, 0);
    }

    struct OnlyStraightModel;
    impl SegmentationModel for OnlyStraightModel {
        fn predict(&mut self, image: &Tensor<f32>) -> Result<Vec<Prediction>> {
            let (h, w) = (image.shape()[1], image.shape()[2]);
            if w == h {
                // answers only in one orientation of a non-square pair
                return Ok(vec![]);
            }
            if w > h {
                let c = Circle::new(20.0, 10.0, 6.0);
                Ok(vec![Prediction {
                    class_id: 0,
                    score: 1.0,
                    circle: c,
                    contour: circle_contour(&c, 32),
                }])
            } else {
                Ok(vec![])
            }
        }
    }

    #[test]
    fn predictions_on_one_side_only_score_zero() {
        let image = Tensor::zeros(&[3, 32, 64]);
        let rc = rotation_consistency(&mut OnlyStraightModel, &[image]).unwrap();
        assert_eq!(rc.score, 0.0);
        assert_eq!(rc.scored_images, 1);
    }

    struct SilentModel;
    impl SegmentationModel for SilentModel {
        fn predict(&mut self, _image: &Tensor<f32>) -> Result<Vec<Prediction>> {
            Ok(vec![])
        }
    }

    #[test]
    fn silent_images_are_skipped_and_recorded() {
        let image = Tensor::zeros(&[3, 16, 16]);
        let rc = rotation_consistency(&mut SilentModel, &[image]).unwrap();
        assert_eq!(rc.scored_images, 0);
        assert_eq!(rc.skipped_images, 1);
    }
}
