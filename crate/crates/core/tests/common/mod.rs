//! Shared helpers for the integration suites: deterministic probe vectors,
//! a Monte-Carlo circle-overlap estimator, and an independent brute-force
//! average-precision evaluator. The oracles here deliberately avoid the
//! library's own code paths they are checking.

#![allow(dead_code)]

use circleseg::detect::Detection;
use circleseg::geom::{circle_iou, mask_dice, Circle, Mask};

/// Deterministic pseudo-random values in [-1, 1] (splitmix-style), used to
/// turn tensor outputs into a scalar probe loss.
pub fn probe_values(n: usize, salt: u64) -> Vec<f64> {
    let mut state = salt.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    (0..n)
        .map(|_| {
            state ^= state >> 30;
            state = state.wrapping_mul(0xBF58476D1CE4E5B9);
            state ^= state >> 27;
            state = state.wrapping_mul(0x94D049BB133111EB);
            state ^= state >> 31;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

pub fn weighted_sum(data: &[f64], probe: &[f64]) -> f64 {
    data.iter().zip(probe).map(|(a, b)| a * b).sum()
}

/// Monte-Carlo estimate of circle IoU: uniform samples over the joint
/// bounding box, counting membership in each disc directly.
pub fn monte_carlo_circle_iou(a: &Circle, b: &Circle, samples: usize, seed: u64) -> f64 {
    let x0 = (a.cx - a.r).min(b.cx - b.r);
    let x1 = (a.cx + a.r).max(b.cx + b.r);
    let y0 = (a.cy - a.r).min(b.cy - b.r);
    let y1 = (a.cy + a.r).max(b.cy + b.r);
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(7);
    let mut next = || {
        state ^= state >> 30;
        state = state.wrapping_mul(0xBF58476D1CE4E5B9);
        state ^= state >> 27;
        state = state.wrapping_mul(0x94D049BB133111EB);
        state ^= state >> 31;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let (mut inter, mut union) = (0u64, 0u64);
    for _ in 0..samples {
        let x = x0 + next() * (x1 - x0);
        let y = y0 + next() * (y1 - y0);
        let in_a = (x - a.cx).powi(2) + (y - a.cy).powi(2) <= a.r * a.r;
        let in_b = (x - b.cx).powi(2) + (y - b.cy).powi(2) <= b.r * b.r;
        if in_a && in_b {
            inter += 1;
        }
        if in_a || in_b {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Ground truth for the reference evaluator.
pub struct RefGt {
    pub image_id: usize,
    pub class_id: usize,
    pub circle: Circle,
    pub area: f64,
}

pub struct RefDet {
    pub image_id: usize,
    pub class_id: usize,
    pub circle: Circle,
    pub score: f64,
}

/// COCO thresholds 0.50:0.05:0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Brute-force average precision over circle IoU at one threshold: greedy
/// matching in score order (ties by insertion index), then a direct scan of
/// the 101-point interpolated precision-recall curve with no accumulation
/// shortcuts. `area_range` filters ground truth; detections whose best
/// leftover overlap is with an out-of-range GT are ignored, COCO-style.
pub fn reference_ap_single(
    dets: &[RefDet],
    gts: &[RefGt],
    class_id: usize,
    threshold: f64,
    area_range: (f64, f64),
) -> Option<f64> {
    let in_range = |g: &RefGt| g.area >= area_range.0 && g.area < area_range.1;
    let gts_class: Vec<&RefGt> = gts.iter().filter(|g| g.class_id == class_id).collect();
    let n_pos = gts_class.iter().filter(|g| in_range(g)).count();
    if n_pos == 0 {
        return None;
    }

    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].class_id == class_id)
        .collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));

    let mut gt_used = vec![false; gts_class.len()];
    // per detection: Some(true)=TP, Some(false)=FP, None=ignored
    let mut flags: Vec<Option<bool>> = Vec::with_capacity(order.len());
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts_class.iter().enumerate() {
            if gt.image_id != det.image_id || gt_used[gi] {
                continue;
            }
            let iou = circle_iou(&det.circle, &gt.circle);
            if iou >= threshold {
                let better = match best {
                    None => true,
                    Some((bgi, biou)) => {
                        // prefer higher IoU; on exact ties prefer in-range GT
                        iou > biou || (iou == biou && in_range(gts_class[gi]) && !in_range(gts_class[bgi]))
                    }
                };
                if better {
                    best = Some((gi, iou));
                }
            }
        }
        match best {
            Some((gi, _)) => {
                gt_used[gi] = true;
                if in_range(gts_class[gi]) {
                    flags.push(Some(true));
                } else {
                    flags.push(None); // matched an ignored GT
                }
            }
            None => flags.push(Some(false)),
        }
    }

    // precision/recall prefix curve over scored detections
    let mut curve: Vec<(f64, f64)> = Vec::new(); // (recall, precision)
    let (mut tp, mut fp) = (0usize, 0usize);
    for f in &flags {
        match f {
            Some(true) => tp += 1,
            Some(false) => fp += 1,
            None => continue,
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        curve.push((recall, precision));
    }

    // 101-point interpolation: p(r) = max precision at recall >= r
    let mut ap = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let p = curve
            .iter()
            .filter(|(rec, _)| *rec >= r - 1e-12)
            .map(|(_, prec)| *prec)
            .fold(0.0, f64::max);
        ap += p;
    }
    Some(ap / 101.0)
}

/// Mean over classes (with GT present) and thresholds.
pub fn reference_ap(
    dets: &[RefDet],
    gts: &[RefGt],
    class_count: usize,
    thresholds: &[f64],
    area_range: (f64, f64),
) -> Option<f64> {
    let mut per_class = Vec::new();
    for c in 0..class_count {
        let mut vals = Vec::new();
        let mut any = false;
        for &t in thresholds {
            if let Some(ap) = reference_ap_single(dets, gts, c, t, area_range) {
                vals.push(ap);
                any = true;
            }
        }
        if any {
            per_class.push(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    if per_class.is_empty() {
        None
    } else {
        Some(per_class.iter().sum::<f64>() / per_class.len() as f64)
    }
}

/// Mask-IoU variant of the single-threshold reference evaluator.
pub struct RefMaskDet {
    pub image_id: usize,
    pub class_id: usize,
    pub mask: Mask,
    pub score: f64,
}

pub struct RefMaskGt {
    pub image_id: usize,
    pub class_id: usize,
    pub mask: Mask,
    pub area: f64,
}

pub fn reference_mask_ap_single(
    dets: &[RefMaskDet],
    gts: &[RefMaskGt],
    class_id: usize,
    threshold: f64,
    area_range: (f64, f64),
) -> Option<f64> {
    let in_range = |g: &RefMaskGt| g.area >= area_range.0 && g.area < area_range.1;
    let gts_class: Vec<&RefMaskGt> = gts.iter().filter(|g| g.class_id == class_id).collect();
    let n_pos = gts_class.iter().filter(|g| in_range(g)).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].class_id == class_id)
        .collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));

    let mut gt_used = vec![false; gts_class.len()];
    let mut flags: Vec<Option<bool>> = Vec::new();
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts_class.iter().enumerate() {
            if gt.image_id != det.image_id || gt_used[gi] {
                continue;
            }
            let iou = det.mask.iou(&gt.mask);
            if iou >= threshold {
                let better = match best {
                    None => true,
                    Some((bgi, biou)) => {
                        iou > biou || (iou == biou && in_range(gts_class[gi]) && !in_range(gts_class[bgi]))
                    }
                };
                if better {
                    best = Some((gi, iou));
                }
            }
        }
        match best {
            Some((gi, _)) => {
                gt_used[gi] = true;
                flags.push(if in_range(gts_class[gi]) { Some(true) } else { None });
            }
            None => flags.push(Some(false)),
        }
    }
    let mut curve: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for f in &flags {
        match f {
            Some(true) => tp += 1,
            Some(false) => fp += 1,
            None => continue,
        }
        curve.push((tp as f64 / n_pos as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut ap = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let p = curve
            .iter()
            .filter(|(rec, _)| *rec >= r - 1e-12)
            .map(|(_, prec)| *prec)
            .fold(0.0, f64::max);
        ap += p;
    }
    Some(ap / 101.0)
}

/// Brute-force 8-neighbor peak scan over one heatmap plane.
pub fn brute_force_peaks(plane: &[f64], gh: usize, gw: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..gh {
        for x in 0..gw {
            let v = plane[y * gw + x];
            let mut ok = true;
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                    if nx < 0 || ny < 0 || nx >= gw as i32 || ny >= gh as i32 {
                        continue;
                    }
                    if plane[ny as usize * gw + nx as usize] > v {
                        ok = false;
                    }
                }
            }
            if ok {
                out.push((x, y));
            }
        }
    }
    out
}

/// Convenience: greedy mean Dice of detections against GT masks (own code,
/// independent of `eval::mean_dice`).
pub fn naive_mean_dice(
    preds: &[(usize, Mask, f64)], // (image, mask, score)
    gts: &[(usize, Mask)],
) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].2.total_cmp(&preds[a].2).then(a.cmp(&b)));
    let mut used = vec![false; gts.len()];
    let mut total = 0.0;
    for &pi in &order {
        let (img, mask, _) = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, (gimg, gmask)) in gts.iter().enumerate() {
            if used[gi] || gimg != img {
                continue;
            }
            let iou = mask.iou(gmask);
            if iou >= 0.5 && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            used[gi] = true;
            total += mask_dice(mask, &gts[gi].1).unwrap();
        }
    }
    total / gts.len() as f64
}

pub fn detections_from(circles: &[(f64, f64, f64, f64)]) -> Vec<Detection> {
    circles
        .iter()
        .map(|&(cx, cy, r, score)| Detection {
            class_id: 0,
            circle: Circle::new(cx, cy, r),
            score,
        })
        .collect()
}
