//! Joint training of the detector and the contour network.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::checkpoint::{
    apply_checkpoint, load_checkpoint, restore_optimizer, save_checkpoint, TrainStateData,
};
use crate::config::RunConfig;
use crate::data::{load_manifest, load_png, make_training_targets, DatasetManifest, InstanceAnnotation, Targets};
use crate::deform::{contour_loss_with_grads, deform, deform_backward, propose_contour};
use crate::detect::{focal_loss_with_grad, l1_at_centers, OUTPUT_STRIDE};
use crate::error::{Error, Result};
use crate::eval::{average_precision, mean_dice, IouKind, Prediction, Scene};
use crate::geom::{rotate90_circle, rotate90_contour, rotate90_tensor, Circle, Turn};
use crate::model::Pipeline;
use crate::nn::{sigmoid, Adam, LayerMode};
use crate::tensor::Tensor;

/// Distinguishes the training RNG stream from the weight-init stream.
const TRAIN_RNG_SALT: u64 = 0x7452_6169_6e52_6e67;

/// One in-memory training sample.
pub struct Sample {
    pub id: u32,
    pub image: Tensor<f32>,
    pub annotations: Vec<InstanceAnnotation>,
}

pub fn load_split(manifest: &DatasetManifest, split_dir: &Path) -> Result<Vec<Sample>> {
    manifest
        .images
        .iter()
        .map(|rec| {
            let image = load_png(&split_dir.join(&rec.file_path))?;
            Ok(Sample {
                id: rec.id,
                image,
                annotations: manifest
                    .annotations_for(rec.id)
                    .into_iter()
                    .cloned()
                    .collect(),
            })
        })
        .collect()
}

/// One epoch's log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub l_k: f64,
    pub l_off: f64,
    pub l_radius: f64,
    pub l_iter: f64,
    pub val_dice: f64,
    pub val_ap50: f64,
}

impl EpochRow {
    pub fn csv_header() -> &'static str {
        "epoch,l_k,l_off,l_radius,l_iter,val_dice,val_ap50"
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            self.epoch, self.l_k, self.l_off, self.l_radius, self.l_iter, self.val_dice, self.val_ap50
        )
    }
}

#[derive(Debug)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    pub best_val_dice: f64,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
}

fn rotated_annotation(ann: &InstanceAnnotation, w: usize, h: usize) -> InstanceAnnotation {
    InstanceAnnotation {
        class_id: ann.class_id,
        boundary: rotate90_contour(&ann.boundary, w, h, Turn::Ccw),
        circle: rotate90_circle(&ann.circle, w, h, Turn::Ccw),
        mask_area: ann.mask_area, // quarter turns are pixel bijections
    }
}

/// Applies `turns` exact quarter rotations to an image and its annotations.
fn rotate_sample(
    image: &Tensor<f32>,
    annotations: &[InstanceAnnotation],
    turns: u32,
) -> (Tensor<f32>, Vec<InstanceAnnotation>) {
    let mut img = image.clone();
    let mut anns = annotations.to_vec();
    for _ in 0..turns {
        let (h, w) = (img.shape()[1], img.shape()[2]);
        img = rotate90_tensor(&img, Turn::Ccw);
        anns = anns.iter().map(|a| rotated_annotation(a, w, h)).collect();
    }
    (img, anns)
}

/// Extracts image `b`'s `[C, gh, gw]` slice of a `[B, C, gh, gw]` tensor.
fn batch_slice(t: &Tensor<f32>, b: usize) -> Tensor<f32> {
    let s = t.shape();
    let per = s[1] * s[2] * s[3];
    Tensor::from_vec(&[s[1], s[2], s[3]], t.data()[b * per..(b + 1) * per].to_vec())
        .expect("slice extents")
}

/// Trains per `cfg`; `resume` continues bitwise from a `last.ckpt`.
pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    if cfg.rotation_augmentation > 0.0 && cfg.synth.width != cfg.synth.height {
        return Err(Error::Config(
            "rotation augmentation needs square images".to_string(),
        ));
    }
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(cfg.out_dir.display().to_string(), e))?;

    let train_manifest = load_manifest(&cfg.manifest_path("train"))?;
    let val_manifest = load_manifest(&cfg.manifest_path("val"))?;
    let train_samples = load_split(&train_manifest, &cfg.split_dir("train"))?;
    let val_samples = load_split(&val_manifest, &cfg.split_dir("val"))?;
    if train_samples.is_empty() {
        return Err(Error::Config("empty training split".to_string()));
    }

    let class_count = cfg.backbone.class_count;
    let mut pipeline: Pipeline<f32> = Pipeline::new(&cfg.backbone, &cfg.snake, cfg.seed);
    pipeline.peak_budget = cfg.peak_budget;
    let mut adam: Adam<f32> = Adam::new(cfg.optimizer);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ TRAIN_RNG_SALT);
    let mut start_epoch = 0usize;
    let mut global_step = 0u64;
    let mut best_val = f64::NEG_INFINITY;

    if let Some(ckpt_path) = resume {
        let ck = load_checkpoint(ckpt_path)?;
        apply_checkpoint(&ck, &mut pipeline)?;
        let Some(opt) = &ck.optimizer else {
            return Err(Error::Checkpoint(
                "resume checkpoint lacks optimizer state".to_string(),
            ));
        };
        adam = restore_optimizer(opt);
        let Some(ts) = &ck.train_state else {
            return Err(Error::Checkpoint(
                "resume checkpoint lacks train state".to_string(),
            ));
        };
        rng = ChaCha20Rng::from_seed(ts.rng_seed);
        rng.set_word_pos(ts.rng_word_pos);
        start_epoch = ts.epoch as usize;
        global_step = ts.global_step;
        best_val = ts.best_metric;
    }

    let last_path = cfg.out_dir.join("last.ckpt");
    let best_path = cfg.out_dir.join("best.ckpt");
    let log_path = cfg.out_dir.join("training_log.csv");
    let mut log = String::new();
    if !log_path.exists() || resume.is_none() {
        log.push_str(EpochRow::csv_header());
        log.push('\n');
        std::fs::write(&log_path, &log).map_err(|e| Error::io(log_path.display().to_string(), e))?;
    }

    let stride = OUTPUT_STRIDE;
    let (w, h) = (cfg.synth.width, cfg.synth.height);
    let mut rows = Vec::new();
    let mut last_val = (0.0f64, 0.0f64);

    for epoch in start_epoch..cfg.epochs {
        let mut order: Vec<usize> = (0..train_samples.len()).collect();
        order.shuffle(&mut rng);

        let mut sums = [0.0f64; 4]; // l_k, l_off, l_radius, l_iter
        let mut batches = 0usize;

        for batch_ids in order.chunks(cfg.batch_size) {
            let b = batch_ids.len();

            // assemble (optionally rotation-augmented) batch
            let mut images = Vec::with_capacity(b);
            let mut targets: Vec<Targets<f32>> = Vec::with_capacity(b);
            let mut batch_anns: Vec<Vec<InstanceAnnotation>> = Vec::with_capacity(b);
            for &idx in batch_ids {
                let s = &train_samples[idx];
                let (img, anns) = if cfg.rotation_augmentation > 0.0
                    && rng.random::<f64>() < cfg.rotation_augmentation
                {
                    let turns = rng.random_range(1..=3u32);
                    rotate_sample(&s.image, &s.annotations, turns)
                } else {
                    (s.image.clone(), s.annotations.clone())
                };
                targets.push(make_training_targets(&anns, class_count, (w, h), stride)?);
                images.push(img);
                batch_anns.push(anns);
            }
            let mut batch_data = Vec::with_capacity(b * 3 * h * w);
            for img in &images {
                batch_data.extend_from_slice(img.data());
            }
            let batch = Tensor::from_vec(&[b, 3, h, w], batch_data)?;

            // forward
            pipeline.zero_grads();
            let (out, caches) = pipeline.detector.forward_batch(&batch, LayerMode::Train)?;
            let pred_hm = sigmoid(&out.hm_logits);

            // focal loss over the whole batch (N = center cells in batch)
            let mut target_hm = Vec::with_capacity(pred_hm.len());
            for t in &targets {
                target_hm.extend_from_slice(t.heatmap.data());
            }
            let target_hm = Tensor::from_vec(pred_hm.shape(), target_hm)?;
            let (l_k, hm_grad) = focal_loss_with_grad(&pred_hm, &target_hm, true)?;
            let hm_grad = hm_grad.expect("requested gradient");
            let mut d_hm = Tensor::zeros(out.hm_logits.shape());
            for i in 0..d_hm.len() {
                let p = pred_hm.data()[i];
                d_hm.data_mut()[i] = hm_grad.data()[i] * p * (1.0 - p);
            }

            // offset / radius regression at center cells, batch object mean
            let total_objects: usize = targets.iter().map(|t| t.centers.len()).sum();
            let mut d_off = Tensor::zeros(out.offsets.shape());
            let mut d_rad = Tensor::zeros(out.radii.shape());
            let (mut l_off, mut l_radius) = (0.0f64, 0.0f64);
            if total_objects > 0 {
                let off_per = 2 * (h / stride) * (w / stride);
                let rad_per = (h / stride) * (w / stride);
                for (bi, t) in targets.iter().enumerate() {
                    if t.centers.is_empty() {
                        continue;
                    }
                    let frac = t.centers.len() as f64 / total_objects as f64;
                    let off_slice = batch_slice(&out.offsets, bi);
                    let mut g_off = Tensor::zeros(off_slice.shape());
                    let m = l1_at_centers(
                        &off_slice,
                        &t.centers,
                        |c| vec![c.offset[0], c.offset[1]],
                        Some(&mut g_off),
                    );
                    l_off += m * frac;
                    let rad_slice = batch_slice(&out.radii, bi);
                    let mut g_rad = Tensor::zeros(rad_slice.shape());
                    let mr = l1_at_centers(
                        &rad_slice,
                        &t.centers,
                        |c| vec![c.radius_cells],
                        Some(&mut g_rad),
                    );
                    l_radius += mr * frac;
                    let wf = (frac * cfg.loss_weights.offset) as f32;
                    for (dst, src) in d_off.data_mut()[bi * off_per..(bi + 1) * off_per]
                        .iter_mut()
                        .zip(g_off.data())
                    {
                        *dst = src * wf;
                    }
                    let wr = (frac * cfg.loss_weights.radius) as f32;
                    for (dst, src) in d_rad.data_mut()[bi * rad_per..(bi + 1) * rad_per]
                        .iter_mut()
                        .zip(g_rad.data())
                    {
                        *dst = src * wr;
                    }
                }
            }

            // contour refinement on a capped sample of ground-truth objects
            let mut candidates: Vec<(usize, usize)> = Vec::new();
            for (bi, anns) in batch_anns.iter().enumerate() {
                for ai in 0..anns.len() {
                    candidates.push((bi, ai));
                }
            }
            candidates.shuffle(&mut rng);
            candidates.truncate(cfg.snake_samples_per_batch);

            let mut l_iter = 0.0f64;
            let mut d_features = Tensor::zeros(out.features.shape());
            if !candidates.is_empty() {
                let fs = out.features.shape().to_vec();
                let f_per = fs[1] * fs[2] * fs[3];
                let scale = cfg.loss_weights.iter / candidates.len() as f64;
                for &(bi, ai) in &candidates {
                    let ann = &batch_anns[bi][ai];
                    let j = cfg.proposal_jitter;
                    let jittered = Circle::new(
                        ann.circle.cx + rng.random_range(-j..=j) * ann.circle.r,
                        ann.circle.cy + rng.random_range(-j..=j) * ann.circle.r,
                        ann.circle.r * (1.0 + rng.random_range(-j..=j)),
                    );
                    let proposal =
                        propose_contour(&jittered, cfg.snake.vertex_count, cfg.snake.mode)?;
                    let gt = pipeline.ground_truth_contour(&ann.boundary)?;
                    let features = batch_slice(&out.features, bi);
                    let (iterates, dcaches) =
                        deform(&pipeline.snake, &proposal, &features, stride)?;
                    let (loss, mut grads) =
                        contour_loss_with_grads(&iterates, &gt, cfg.snake.loss)?;
                    l_iter += loss / candidates.len() as f64;
                    for g in &mut grads {
                        for v in g.iter_mut() {
                            v[0] *= scale;
                            v[1] *= scale;
                        }
                    }
                    let mut d_f = Tensor::zeros(features.shape());
                    deform_backward(&mut pipeline.snake, &features, &dcaches, &grads, &mut d_f)?;
                    for (dst, src) in d_features.data_mut()[bi * f_per..(bi + 1) * f_per]
                        .iter_mut()
                        .zip(d_f.data())
                    {
                        *dst += *src;
                    }
                }
            }

            let total = l_k
                + cfg.loss_weights.radius * l_radius
                + cfg.loss_weights.offset * l_off
                + cfg.loss_weights.iter * l_iter;
            if !total.is_finite() {
                return Err(Error::Runtime(format!(
                    "non-finite loss at epoch {epoch} step {global_step} (batch {:?}): \
                     l_k={l_k} l_off={l_off} l_radius={l_radius} l_iter={l_iter}",
                    batch_ids
                )));
            }

            pipeline
                .detector
                .backward(&caches, &d_hm, &d_off, &d_rad, &d_features)?;
            adam.step(&mut pipeline.named_params())?;
            global_step += 1;

            sums[0] += l_k;
            sums[1] += l_off;
            sums[2] += l_radius;
            sums[3] += l_iter;
            batches += 1;
        }

        // validation + logging
        let do_val = (epoch + 1) % cfg.val_interval == 0 || epoch + 1 == cfg.epochs;
        if do_val {
            last_val = validate(&mut pipeline, &val_samples, cfg)?;
        }
        let row = EpochRow {
            epoch,
            l_k: sums[0] / batches as f64,
            l_off: sums[1] / batches as f64,
            l_radius: sums[2] / batches as f64,
            l_iter: sums[3] / batches as f64,
            val_dice: last_val.0,
            val_ap50: last_val.1,
        };
        let mut line = row.csv();
        line.push('\n');
        append_file(&log_path, &line)?;
        rows.push(row);

        // checkpoints: last always, best by validation dice
        let ts = TrainStateData {
            epoch: (epoch + 1) as u32,
            global_step,
            best_metric: best_val.max(last_val.0),
            rng_seed: rng.get_seed(),
            rng_word_pos: rng.get_word_pos(),
        };
        save_checkpoint(&last_path, &mut pipeline, Some(&adam), Some(&ts))?;
        if do_val && last_val.0 > best_val {
            best_val = last_val.0;
            save_checkpoint(&best_path, &mut pipeline, None, None)?;
        }
    }

    Ok(TrainReport {
        rows,
        best_val_dice: best_val,
        best_checkpoint: best_path,
        last_checkpoint: last_path,
    })
}

fn append_file(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Validation pass: instance Dice plus detection AP50 over the val split.
fn validate(
    pipeline: &mut Pipeline<f32>,
    val_samples: &[Sample],
    cfg: &RunConfig,
) -> Result<(f64, f64)> {
    let scenes = infer_scenes(pipeline, val_samples, cfg.score_threshold, cfg)?;
    let (dice, _) = mean_dice(&scenes)?;
    let ap = average_precision(&scenes, cfg.backbone.class_count, IouKind::Circle, &[0.5])?;
    Ok((dice, ap.ap50.unwrap_or(0.0)))
}

/// Runs inference over samples and joins predictions with ground truth.
pub fn infer_scenes(
    pipeline: &mut Pipeline<f32>,
    samples: &[Sample],
    score_threshold: f64,
    cfg: &RunConfig,
) -> Result<Vec<Scene>> {
    samples
        .iter()
        .map(|s| {
            let predictions: Vec<Prediction> =
                pipeline.infer(&s.image, score_threshold, cfg.snake.mode, true)?;
            Ok(Scene {
                image_id: s.id,
                width: s.image.shape()[2],
                height: s.image.shape()[1],
                ground_truth: s.annotations.clone(),
                predictions,
            })
        })
        .collect()
}
