//! Dice scoring of predicted instances against ground truth.

use crate::error::Result;
use crate::eval::Scene;
use crate::geom::{mask_dice, Mask};

/// Instance-matched Dice: per scene, predictions match unclaimed same-class
/// ground truth greedily (score order) at mask IoU >= 0.5; the score is the
/// mean Dice over all ground-truth objects across the scenes, with
/// unmatched ground truth contributing 0. Returns the mean plus the
/// per-image means (boxplot data), skipping images without ground truth.
pub fn mean_dice(scenes: &[Scene]) -> Result<(f64, Vec<f64>)> {
    let mut total = 0.0;
    let mut count = 0usize;
    let mut per_image = Vec::new();
    for scene in scenes {
        let ng = scene.ground_truth.len();
        if ng == 0 {
            continue;
        }
        let gt_masks: Vec<Mask> = (0..ng).map(|g| scene.gt_mask(g)).collect::<Result<_>>()?;
        let pred_masks: Vec<Mask> = (0..scene.predictions.len())
            .map(|d| scene.pred_mask(d))
            .collect::<Result<_>>()?;

        let mut order: Vec<usize> = (0..scene.predictions.len()).collect();
        order.sort_by(|&a, &b| {
            scene.predictions[b]
                .score
                .total_cmp(&scene.predictions[a].score)
                .then(a.cmp(&b))
        });

        let mut claimed = vec![false; ng];
        let mut image_total = 0.0;
        for &d in &order {
            let mut best: Option<(usize, f64)> = None;
            for g in 0..ng {
                if claimed[g] || scene.ground_truth[g].class_id != scene.predictions[d].class_id {
                    continue;
                }
                let iou = pred_masks[d].iou(&gt_masks[g]);
                if iou >= 0.5 && best.map_or(true, |(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                claimed[g] = true;
                image_total += mask_dice(&pred_masks[d], &gt_masks[g])?;
            }
        }
        total += image_total;
        count += ng;
        per_image.push(image_total / ng as f64);
    }
    let mean = if count == 0 { 0.0 } else { total / count as f64 };
    Ok((mean, per_image))
}

/// Semantic (pixel-union) Dice: the union of all predicted masks against
/// the union of all ground-truth masks, with pixel counts pooled across
/// scenes before the final ratio. Emitted alongside the instance-matched
/// score for comparison.
pub fn pixel_union_dice(scenes: &[Scene]) -> Result<f64> {
    let (mut inter, mut total) = (0u64, 0u64);
    for scene in scenes {
        let gt_union = Mask::from_contours(
            &scene.ground_truth.iter().map(|g| &g.boundary).collect::<Vec<_>>(),
            scene.width,
            scene.height,
        )?;
        let pred_union = Mask::from_contours(
            &scene.predictions.iter().map(|p| &p.contour).collect::<Vec<_>>(),
            scene.width,
            scene.height,
        )?;
        inter += gt_union.intersection_area(&pred_union) as u64;
        total += (gt_union.area() + pred_union.area()) as u64;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InstanceAnnotation;
    use crate::eval::Prediction;
    use crate::geom::{circle_contour, Circle};

    fn scene(gts: &[(f64, f64, f64)], preds: &[(f64, f64, f64, f64)]) -> Scene {
        Scene {
            image_id: 0,
            width: 96,
            height: 96,
            ground_truth: gts
                .iter()
                .map(|&(x, y, r)| {
                    InstanceAnnotation::new(0, circle_contour(&Circle::new(x, y, r), 64), 96, 96)
                        .unwrap()
                })
                .collect(),
            predictions: preds
                .iter()
                .map(|&(x, y, r, s)| Prediction {
                    class_id: 0,
                    score: s,
                    circle: Circle::new(x, y, r),
                    contour: circle_contour(&Circle::new(x, y, r), 64),
                })
                .collect(),
        }
    }

    #[test]
    fn identical_predictions_score_one() {
        let s = scene(
            &[(30.0, 30.0, 10.0), (70.0, 60.0, 8.0)],
            &[(30.0, 30.0, 10.0, 0.9), (70.0, 60.0, 8.0, 0.8)],
        );
        let (dice, per_image) = mean_dice(&[s.clone()]).unwrap();
        assert_eq!(dice, 1.0);
        assert_eq!(per_image, vec![1.0]);
        assert_eq!(pixel_union_dice(&[s]).unwrap(), 1.0);
    }

    #[test]
    fn no_predictions_score_zero() {
        let s = scene(&[(30.0, 30.0, 10.0)], &[]);
        let (dice, _) = mean_dice(&[s]).unwrap();
        assert_eq!(dice, 0.0);
    }

    #[test]
    fn half_matched_scores_half() {
        let s = scene(
            &[(25.0, 25.0, 10.0), (70.0, 70.0, 10.0)],
            &[(25.0, 25.0, 10.0, 0.9)],
        );
        let (dice, _) = mean_dice(&[s]).unwrap();
        assert!((dice - 0.5).abs() < 1e-12);
    }

    #[test]
    fn below_iou_threshold_contributes_zero() {
        // far-off prediction: IoU < 0.5 so no match at all
        let s = scene(&[(25.0, 25.0, 8.0)], &[(60.0, 60.0, 8.0, 0.9)]);
        let (dice, _) = mean_dice(&[s]).unwrap();
        assert_eq!(dice, 0.0);
    }
}
