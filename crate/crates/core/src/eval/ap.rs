//! COCO-protocol average precision.
//!
//! Matching is greedy per detection in descending score order (score ties
//! break by detection index): each detection takes the unmatched same-class,
//! same-image ground truth with the highest IoU >= threshold. For
//! area-bucketed metrics, out-of-bucket ground truth is ignored rather than
//! counted: detections whose match is ignored drop out of the
//! precision-recall curve entirely. Precision is interpolated at 101 recall
//! points and averaged over the 0.50:0.05:0.95 thresholds; classwise values
//! average over classes that have ground truth.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{Scene, MEDIUM_AREA, SMALL_AREA};
use crate::geom::{circle_iou, Mask};

/// Which overlap geometry drives the matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IouKind {
    /// Closed-form disc overlap of predicted vs ground-truth circles;
    /// areas are pi r^2.
    Circle,
    /// Rasterized contour masks; areas are set-pixel counts.
    Mask,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// The AP table: overall (threshold-swept), the two named thresholds, and
/// the area buckets. `None` marks buckets with no ground truth.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ApTable {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
}

/// Match outcome at one threshold, in score order.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Per detection (score-ordered): matched GT index and IoU, or None.
    pub detection_matches: Vec<Option<(usize, f64)>>,
    /// Score-ordered detection scores.
    pub scores: Vec<f64>,
    /// Per ground truth: matched flag.
    pub gt_matched: Vec<bool>,
}

/// Pairwise IoU between all predictions and ground truth of one scene.
struct SceneOverlaps {
    /// `iou[d][g]`
    iou: Vec<Vec<f64>>,
    det_scores: Vec<f64>,
    det_class: Vec<usize>,
    gt_class: Vec<usize>,
    gt_area: Vec<f64>,
}

fn scene_overlaps(scene: &Scene, kind: IouKind) -> Result<SceneOverlaps> {
    let (nd, ng) = (scene.predictions.len(), scene.ground_truth.len());
    let mut iou = vec![vec![0.0; ng]; nd];
    match kind {
        IouKind::Circle => {
            for (d, pred) in scene.predictions.iter().enumerate() {
                for (g, gt) in scene.ground_truth.iter().enumerate() {
                    iou[d][g] = circle_iou(&pred.circle, &gt.circle);
                }
            }
        }
        IouKind::Mask => {
            let gt_masks: Vec<Mask> = (0..ng).map(|g| scene.gt_mask(g)).collect::<Result<_>>()?;
            for (d, _) in scene.predictions.iter().enumerate() {
                let dm = scene.pred_mask(d)?;
                for (g, gm) in gt_masks.iter().enumerate() {
                    iou[d][g] = dm.iou(gm);
                }
            }
        }
    }
    let gt_area = scene
        .ground_truth
        .iter()
        .map(|g| match kind {
            IouKind::Circle => g.circle.area(),
            IouKind::Mask => g.mask_area,
        })
        .collect();
    Ok(SceneOverlaps {
        iou,
        det_scores: scene.predictions.iter().map(|p| p.score).collect(),
        det_class: scene.predictions.iter().map(|p| p.class_id).collect(),
        gt_class: scene.ground_truth.iter().map(|g| g.class_id).collect(),
        gt_area,
    })
}

/// Greedy matcher over one scene and class at one IoU threshold. On IoU
/// ties an in-range ground truth wins over an ignored one; remaining ties
/// go to the lower GT index.
pub fn match_detections(
    iou: &[Vec<f64>],
    det_scores: &[f64],
    det_sel: &[usize],
    gt_sel: &[usize],
    threshold: f64,
    gt_in_range: &[bool],
) -> MatchResult {
    let mut order: Vec<usize> = det_sel.to_vec();
    order.sort_by(|&a, &b| det_scores[b].total_cmp(&det_scores[a]).then(a.cmp(&b)));

    let mut gt_matched = vec![false; gt_sel.len()];
    let mut detection_matches = Vec::with_capacity(order.len());
    let mut scores = Vec::with_capacity(order.len());
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (slot, &g) in gt_sel.iter().enumerate() {
            if gt_matched[slot] {
                continue;
            }
            let v = iou[d][g];
            if v >= threshold {
                let better = match best {
                    None => true,
                    Some((bslot, bv)) => {
                        v > bv || (v == bv && gt_in_range[slot] && !gt_in_range[bslot])
                    }
                };
                if better {
                    best = Some((slot, v));
                }
            }
        }
        if let Some((slot, _)) = best {
            gt_matched[slot] = true;
        }
        detection_matches.push(best);
        scores.push(det_scores[d]);
    }
    MatchResult {
        detection_matches,
        scores,
        gt_matched,
    }
}

/// AP for one class at one threshold and area range over all scenes, or
/// None when the range holds no ground truth.
fn ap_single(
    scenes: &[SceneOverlaps],
    class_id: usize,
    threshold: f64,
    area_range: (f64, f64),
) -> Option<f64> {
    // gather per-scene match flags, then merge detections across scenes
    // by score for the global PR curve
    let mut merged: Vec<(f64, usize, usize, Option<bool>)> = Vec::new(); // (score, scene, idx, flag)
    let mut n_pos = 0usize;
    for (si, s) in scenes.iter().enumerate() {
        let det_sel: Vec<usize> = (0..s.det_class.len())
            .filter(|&d| s.det_class[d] == class_id)
            .collect();
        let gt_sel: Vec<usize> = (0..s.gt_class.len())
            .filter(|&g| s.gt_class[g] == class_id)
            .collect();
        let in_range: Vec<bool> = gt_sel
            .iter()
            .map(|&g| s.gt_area[g] >= area_range.0 && s.gt_area[g] < area_range.1)
            .collect();
        n_pos += in_range.iter().filter(|&&b| b).count();

        let m = match_detections(&s.iou, &s.det_scores, &det_sel, &gt_sel, threshold, &in_range);
        for (k, dm) in m.detection_matches.iter().enumerate() {
            let flag = match dm {
                Some((slot, _)) if in_range[*slot] => Some(true),
                Some(_) => None, // matched an out-of-range GT: ignored
                None => Some(false),
            };
            merged.push((m.scores[k], si, k, flag));
        }
    }
    if n_pos == 0 {
        return None;
    }

    merged.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut curve: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, _, _, flag) in &merged {
        match flag {
            Some(true) => tp += 1,
            Some(false) => fp += 1,
            None => continue,
        }
        curve.push((tp as f64 / n_pos as f64, tp as f64 / (tp + fp) as f64));
    }

    // 101-point interpolation via a running max from the high-recall end
    let mut interp = curve.clone();
    for i in (0..interp.len().saturating_sub(1)).rev() {
        interp[i].1 = interp[i].1.max(interp[i + 1].1);
    }
    let mut ap = 0.0;
    let mut j = 0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        while j < interp.len() && interp[j].0 < r - 1e-12 {
            j += 1;
        }
        if j < interp.len() {
            ap += interp[j].1;
        }
    }
    Some(ap / 101.0)
}

fn mean_over(values: Vec<Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.into_iter().flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Classwise mean AP at one threshold and range.
fn ap_at(
    scenes: &[SceneOverlaps],
    class_count: usize,
    threshold: f64,
    range: (f64, f64),
) -> Option<f64> {
    mean_over(
        (0..class_count)
            .map(|c| ap_single(scenes, c, threshold, range))
            .collect(),
    )
}

/// The full AP table over the given scenes.
pub fn average_precision(
    scenes: &[Scene],
    class_count: usize,
    kind: IouKind,
    thresholds: &[f64],
) -> Result<ApTable> {
    let overlaps: Vec<SceneOverlaps> = scenes
        .iter()
        .map(|s| scene_overlaps(s, kind))
        .collect::<Result<_>>()?;
    let full = (0.0, f64::INFINITY);
    let small = (0.0, SMALL_AREA);
    let medium = (SMALL_AREA, MEDIUM_AREA);

    let swept = |range: (f64, f64)| {
        mean_over(
            thresholds
                .iter()
                .map(|&t| ap_at(&overlaps, class_count, t, range))
                .collect(),
        )
    };
    Ok(ApTable {
        ap: swept(full),
        ap50: ap_at(&overlaps, class_count, 0.5, full),
        ap75: ap_at(&overlaps, class_count, 0.75, full),
        ap_s: swept(small),
        ap_m: swept(medium),
    })
}

/// The detection-kind precision-recall curve at IoU 0.5 (for plotting).
pub fn pr_curve_at_50(scenes: &[Scene], class_count: usize, kind: IouKind) -> Result<Vec<PrPoint>> {
    let overlaps: Vec<SceneOverlaps> = scenes
        .iter()
        .map(|s| scene_overlaps(s, kind))
        .collect::<Result<_>>()?;
    // single merged curve over all classes: pool detections, count positives
    let mut merged: Vec<(f64, usize, usize, Option<bool>)> = Vec::new();
    let mut n_pos = 0usize;
    for c in 0..class_count {
        for (si, s) in overlaps.iter().enumerate() {
            let det_sel: Vec<usize> = (0..s.det_class.len())
                .filter(|&d| s.det_class[d] == c)
                .collect();
            let gt_sel: Vec<usize> = (0..s.gt_class.len())
                .filter(|&g| s.gt_class[g] == c)
                .collect();
            let in_range = vec![true; gt_sel.len()];
            n_pos += gt_sel.len();
            let m = match_detections(&s.iou, &s.det_scores, &det_sel, &gt_sel, 0.5, &in_range);
            for (k, dm) in m.detection_matches.iter().enumerate() {
                merged.push((m.scores[k], si, k, dm.map(|_| true).or(Some(false))));
            }
        }
    }
    if n_pos == 0 {
        return Ok(Vec::new());
    }
    merged.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, _, _, flag) in merged {
        match flag {
            Some(true) => tp += 1,
            _ => fp += 1,
        }
        out.push(PrPoint {
            recall: tp as f64 / n_pos as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(out)
}
