//! Peak decoding: heatmap maxima -> scored bounding circles.

use crate::detect::{Detection, DetectorOutput, MIN_DECODED_RADIUS};
use crate::geom::{Circle, Turn};
use crate::tensor::{Element, Tensor};

/// Decodes the top-n 8-connected peaks into detections.
///
/// A cell is a peak when its value is >= all 8 in-bounds neighbors
/// (out-of-bounds neighbors count as -inf). Peaks are ranked by value with
/// ties broken row-major then by class; each becomes a circle at
/// `(cell + offset) * stride` with radius `radii * stride` (floored at
/// [`MIN_DECODED_RADIUS`]). Detections below `score_threshold` are dropped.
pub fn decode_detections<E: Element>(
    out: &DetectorOutput<E>,
    stride: usize,
    peak_budget: usize,
    score_threshold: f64,
) -> Vec<Detection> {
    let shape = out.heatmap.shape();
    let (classes, gh, gw) = (shape[0], shape[1], shape[2]);
    let hm = out.heatmap.data();

    // (score, y, x, class)
    let mut peaks: Vec<(f64, usize, usize, usize)> = Vec::new();
    for c in 0..classes {
        let plane = &hm[c * gh * gw..(c + 1) * gh * gw];
        for y in 0..gh {
            for x in 0..gw {
                let v = plane[y * gw + x];
                let mut is_peak = true;
                'n: for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                        if nx < 0 || ny < 0 || nx >= gw as i32 || ny >= gh as i32 {
                            continue;
                        }
                        if plane[ny as usize * gw + nx as usize] > v {
                            is_peak = false;
                            break 'n;
                        }
                    }
                }
                if is_peak {
                    peaks.push((v.to_f64(), y, x, c));
                }
            }
        }
    }

    peaks.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    peaks.truncate(peak_budget);

    let off = out.offsets.data();
    let rad = out.radii.data();
    let s = stride as f64;
    peaks
        .into_iter()
        .filter(|&(score, ..)| score >= score_threshold)
        .map(|(score, y, x, class_id)| {
            let i = y * gw + x;
            let cx = (x as f64 + off[i].to_f64()) * s;
            let cy = (y as f64 + off[gh * gw + i].to_f64()) * s;
            let r = (rad[i].to_f64() * s).max(MIN_DECODED_RADIUS);
            Detection {
                class_id,
                circle: Circle::new(cx, cy, r),
                score,
            }
        })
        .collect()
}

/// Rotates a detector output by a quarter turn so that decoding commutes
/// with rotating the decoded circles.
///
/// Heatmap and radius planes rotate on the lattice. Offset components remap
/// as vectors: a counter-clockwise turn sends cell fractions `(fx, fy)` to
/// `((1 - 1/R) - fy, fx)` because the input-coordinate map `y -> H - 1 - y`
/// lands `R - 1` input pixels past the lattice-rotated cell origin.
pub fn rotate_detector_output<E: Element>(
    out: &DetectorOutput<E>,
    stride: usize,
    turn: Turn,
) -> DetectorOutput<E> {
    let rot = |t: &Tensor<E>| crate::geom::rotate90_tensor(t, turn);
    let heatmap = rot(&out.heatmap);
    let radii = rot(&out.radii);

    let off_x = slice_plane(&out.offsets, 0);
    let off_y = slice_plane(&out.offsets, 1);
    let rx = rot(&off_x);
    let ry = rot(&off_y);
    let comp = E::from_f64(1.0 - 1.0 / stride as f64);
    let (new_x, new_y): (Vec<E>, Vec<E>) = match turn {
        // (fx, fy) -> ((1 - 1/R) - fy, fx)
        Turn::Ccw => (
            ry.data().iter().map(|&v| comp - v).collect(),
            rx.data().to_vec(),
        ),
        // (fx, fy) -> (fy, (1 - 1/R) - fx)
        Turn::Cw => (
            ry.data().to_vec(),
            rx.data().iter().map(|&v| comp - v).collect(),
        ),
    };
    let (nh, nw) = (rx.shape()[1], rx.shape()[2]);
    let mut offsets = Vec::with_capacity(2 * nh * nw);
    offsets.extend(new_x);
    offsets.extend(new_y);
    DetectorOutput {
        heatmap,
        offsets: Tensor::from_vec(&[2, nh, nw], offsets).expect("plane sizes match"),
        radii,
    }
}

fn slice_plane<E: Element>(t: &Tensor<E>, idx: usize) -> Tensor<E> {
    let shape = t.shape();
    let (h, w) = (shape[1], shape[2]);
    Tensor::from_vec(&[1, h, w], t.data()[idx * h * w..(idx + 1) * h * w].to_vec())
        .expect("plane extraction")
}
