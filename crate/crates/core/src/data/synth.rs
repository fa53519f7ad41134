//! Synthetic image generator: textured backgrounds with soft-edged disks,
//! ellipses, and radially perturbed blobs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::{
    save_manifest, save_png, AnnotationRecord, DatasetManifest, ImageRecord, InstanceAnnotation,
    SynthConfig,
};
use crate::error::Result;
use crate::geom::{Contour, Mask};
use crate::tensor::Tensor;

/// Outcome of a generation run.
#[derive(Debug)]
pub struct GenReport {
    pub manifests: Vec<DatasetManifest>,
    /// Objects dropped after exhausting placement attempts under the
    /// overlap cap.
    pub skipped_objects: usize,
}

const BOUNDARY_VERTICES: usize = 64;
const PLACEMENT_ATTEMPTS: usize = 100;
/// Ground-truth vertices snap to this grid so every coordinate is dyadic and
/// quarter-turn rotations round-trip bitwise.
const SNAP: f64 = 8.0;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn snap(v: f64) -> f64 {
    (v * SNAP).round() / SNAP
}

/// Builds one boundary polygon around `(cx, cy)`; vertex 0 at angle 0
/// (topmost for symmetric shapes), clockwise in the y-down frame.
fn shape_boundary(rng: &mut ChaCha20Rng, cfg: &SynthConfig, cx: f64, cy: f64, r0: f64) -> Contour {
    let w = cfg.shape_weights;
    let pick: f64 = rng.random();
    let kind = if pick < w.disk {
        0
    } else if pick < w.disk + w.ellipse {
        1
    } else {
        2
    };

    let mut vertices = Vec::with_capacity(BOUNDARY_VERTICES);
    match kind {
        0 => {
            for i in 0..BOUNDARY_VERTICES {
                let t = 2.0 * std::f64::consts::PI * i as f64 / BOUNDARY_VERTICES as f64;
                vertices.push([cx + r0 * t.sin(), cy - r0 * t.cos()]);
            }
        }
        1 => {
            let ratio = rng.random_range(cfg.axis_ratio_range.0..=cfg.axis_ratio_range.1);
            let (a, b) = (r0, r0 * ratio);
            let phi = rng.random_range(0.0..std::f64::consts::PI);
            let (sp, cp) = (phi.sin(), phi.cos());
            for i in 0..BOUNDARY_VERTICES {
                let t = 2.0 * std::f64::consts::PI * i as f64 / BOUNDARY_VERTICES as f64;
                let (ex, ey) = (a * t.sin(), -b * t.cos());
                vertices.push([cx + cp * ex - sp * ey, cy + sp * ex + cp * ey]);
            }
        }
        _ => {
            let a2 = rng.random_range(-cfg.blob_amplitude..=cfg.blob_amplitude);
            let a3 = rng.random_range(-cfg.blob_amplitude..=cfg.blob_amplitude);
            let p2 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
            let p3 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
            for i in 0..BOUNDARY_VERTICES {
                let t = 2.0 * std::f64::consts::PI * i as f64 / BOUNDARY_VERTICES as f64;
                let r = r0 * (1.0 + a2 * (2.0 * t + p2).cos() + a3 * (3.0 * t + p3).cos());
                vertices.push([cx + r * t.sin(), cy - r * t.cos()]);
            }
        }
    }

    for v in &mut vertices {
        v[0] = snap(v[0]).clamp(0.0, (cfg.width - 1) as f64);
        v[1] = snap(v[1]).clamp(0.0, (cfg.height - 1) as f64);
    }
    Contour::new(vertices)
}

/// Signed distance from a point to the polygon boundary: positive inside.
fn signed_distance(contour: &Contour, px: f64, py: f64) -> f64 {
    let v = &contour.vertices;
    let n = v.len();
    let mut d2 = f64::INFINITY;
    let mut inside = false;
    for i in 0..n {
        let [x0, y0] = v[i];
        let [x1, y1] = v[(i + 1) % n];
        // point-segment distance
        let (ex, ey) = (x1 - x0, y1 - y0);
        let len2 = ex * ex + ey * ey;
        let t = if len2 > 0.0 {
            (((px - x0) * ex + (py - y0) * ey) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (dx, dy) = (px - (x0 + t * ex), py - (y0 + t * ey));
        d2 = d2.min(dx * dx + dy * dy);
        // even-odd crossing
        if (y0 <= py && py < y1) || (y1 <= py && py < y0) {
            let cross_x = x0 + (py - y0) * (x1 - x0) / (y1 - y0);
            if cross_x > px {
                inside = !inside;
            }
        }
    }
    let d = d2.sqrt();
    if inside {
        d
    } else {
        -d
    }
}

/// Renders one image and its annotations from the image's own RNG stream.
pub fn generate_image(
    cfg: &SynthConfig,
    split: &str,
    image_index: u64,
) -> Result<(Tensor<f32>, Vec<InstanceAnnotation>, usize)> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(fnv1a(split.as_bytes()).wrapping_add(image_index));

    let (w, h) = (cfg.width, cfg.height);
    let plane = w * h;
    let tex = cfg.background_texture;

    // background: per-channel base gray + smooth coarse noise + fine noise
    let base: [f64; 3] = {
        let g = rng.random_range(0.28..0.40);
        [
            g + rng.random_range(-0.03..0.03),
            g + rng.random_range(-0.03..0.03),
            g + rng.random_range(-0.03..0.03),
        ]
    };
    let (gw, gh) = (w / 8 + 2, h / 8 + 2);
    let coarse: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut img = vec![0.0f32; 3 * plane];
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = (x as f64 / 8.0, y as f64 / 8.0);
            let (ix, iy) = (gx as usize, gy as usize);
            let (fx, fy) = (gx - ix as f64, gy - iy as f64);
            let c00 = coarse[iy * gw + ix];
            let c01 = coarse[iy * gw + ix + 1];
            let c10 = coarse[(iy + 1) * gw + ix];
            let c11 = coarse[(iy + 1) * gw + ix + 1];
            let cval = c00 * (1.0 - fx) * (1.0 - fy)
                + c01 * fx * (1.0 - fy)
                + c10 * (1.0 - fx) * fy
                + c11 * fx * fy;
            let fine = rng.random_range(-1.0..1.0);
            for c in 0..3 {
                let v = base[c] + 0.06 * tex * cval + 0.03 * tex * fine;
                img[c * plane + y * w + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }

    // objects
    let n_objects = rng.random_range(cfg.objects_per_image.0..=cfg.objects_per_image.1);
    let mut annotations: Vec<InstanceAnnotation> = Vec::new();
    let mut masks: Vec<Mask> = Vec::new();
    let mut skipped = 0usize;

    for _ in 0..n_objects {
        let mut placed = false;
        for _attempt in 0..PLACEMENT_ATTEMPTS {
            let r0 = rng.random_range(cfg.radius_range.0..=cfg.radius_range.1);
            let reach = r0 * (1.0 + 2.0 * cfg.blob_amplitude) + 2.0;
            let cx = snap(rng.random_range(reach..(w as f64 - 1.0 - reach)));
            let cy = snap(rng.random_range(reach..(h as f64 - 1.0 - reach)));
            let boundary = shape_boundary(&mut rng, cfg, cx, cy, r0);
            let mask = Mask::from_contour(&boundary, w, h)?;
            if mask.area() == 0 {
                continue;
            }
            if masks.iter().any(|m| m.iou(&mask) > cfg.overlap_cap) {
                continue;
            }

            // soft-edged fill with slight radial shading
            let mut color = [
                rng.random_range(0.55..0.92),
                rng.random_range(0.55..0.92),
                rng.random_range(0.55..0.92),
            ];
            color[rng.random_range(0..3usize)] *= 0.45;
            let class_id = rng.random_range(0..cfg.class_count);

            let (lo, hi) = boundary.bounds();
            let x0 = (lo[0].floor() as isize - 2).max(0) as usize;
            let y0 = (lo[1].floor() as isize - 2).max(0) as usize;
            let x1 = (hi[0].ceil() as usize + 2).min(w - 1);
            let y1 = (hi[1].ceil() as usize + 2).min(h - 1);
            for py in y0..=y1 {
                for px in x0..=x1 {
                    let sd = signed_distance(&boundary, px as f64, py as f64);
                    let alpha = (0.5 + sd).clamp(0.0, 1.0);
                    if alpha <= 0.0 {
                        continue;
                    }
                    let shade = 0.82 + 0.18 * (sd / r0).clamp(0.0, 1.0);
                    for c in 0..3 {
                        let idx = c * plane + py * w + px;
                        let obj = (color[c] * shade).clamp(0.0, 1.0) as f32;
                        img[idx] = img[idx] * (1.0 - alpha as f32) + obj * alpha as f32;
                    }
                }
            }

            annotations.push(InstanceAnnotation::new(class_id, boundary, w, h)?);
            masks.push(mask);
            placed = true;
            break;
        }
        if !placed {
            skipped += 1;
            log::warn!(
                "{split}[{image_index}]: no placement under overlap cap {} after {} attempts",
                cfg.overlap_cap,
                PLACEMENT_ATTEMPTS
            );
        }
    }

    Ok((Tensor::from_vec(&[3, h, w], img)?, annotations, skipped))
}

/// Worker-thread count for generation, from the `CIRCLESEG_THREADS`
/// environment variable (default 1). Per-image RNG streams keep the output
/// identical at any thread count.
pub(crate) fn thread_count() -> usize {
    std::env::var("CIRCLESEG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Generates `(split, count)` datasets under `out_dir/<split>/` with one
/// manifest per split and 8-bit RGB PNGs under `images/`.
pub fn generate_dataset(
    cfg: &SynthConfig,
    splits: &[(&str, usize)],
    out_dir: &Path,
) -> Result<GenReport> {
    cfg.validate()?;
    let class_names: Vec<String> = (0..cfg.class_count).map(|c| format!("class_{c}")).collect();
    let threads = thread_count();

    let mut manifests = Vec::new();
    let mut skipped_total = 0usize;
    for &(split, count) in splits {
        let split_dir = out_dir.join(split);
        let images_dir = split_dir.join("images");
        std::fs::create_dir_all(&images_dir)
            .map_err(|e| crate::error::Error::io(images_dir.display().to_string(), e))?;

        // images render and save in parallel chunks; the manifest is
        // assembled by this single writer afterwards
        let chunk = count.div_ceil(threads.max(1)).max(1);
        let results: Vec<Result<Vec<(usize, Vec<InstanceAnnotation>, usize)>>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..count)
                    .collect::<Vec<_>>()
                    .chunks(chunk)
                    .map(|ids| {
                        let ids = ids.to_vec();
                        let split_dir = &split_dir;
                        scope.spawn(move || {
                            ids.into_iter()
                                .map(|i| {
                                    let (img, anns, skipped) =
                                        generate_image(cfg, split, i as u64)?;
                                    let file_name = format!("images/img_{i:05}.png");
                                    save_png(&split_dir.join(&file_name), &img)?;
                                    Ok((i, anns, skipped))
                                })
                                .collect()
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("generation worker")).collect()
            });

        let mut images = Vec::with_capacity(count);
        let mut annotations = Vec::new();
        let mut per_image: Vec<(usize, Vec<InstanceAnnotation>, usize)> = Vec::with_capacity(count);
        for r in results {
            per_image.extend(r?);
        }
        per_image.sort_by_key(|(i, _, _)| *i);
        for (i, anns, skipped) in per_image {
            skipped_total += skipped;
            images.push(ImageRecord {
                id: i as u32,
                file_path: format!("images/img_{i:05}.png"),
                width: cfg.width,
                height: cfg.height,
            });
            for annotation in anns {
                annotations.push(AnnotationRecord {
                    image_id: i as u32,
                    annotation,
                });
            }
        }
        let manifest = DatasetManifest {
            split: split.to_string(),
            class_names: class_names.clone(),
            images,
            annotations,
        };
        save_manifest(&manifest, &split_dir.join("manifest.json"))?;
        manifests.push(manifest);
    }
    Ok(GenReport {
        manifests,
        skipped_objects: skipped_total,
    })
}
