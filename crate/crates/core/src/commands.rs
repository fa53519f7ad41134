//! The operations behind the CLI subcommands, exposed as library functions
//! so the acceptance suite drives the same code paths.

use std::path::{Path, PathBuf};

use crate::checkpoint::{apply_checkpoint, load_checkpoint};
use crate::config::RunConfig;
use crate::data::{generate_dataset, load_manifest, GenReport};
use crate::deform::ProposalMode;
use crate::error::{Error, Result};
use crate::eval::{
    average_precision, coco_thresholds, ellipticity_point, emit_report, load_results, mean_dice,
    pixel_union_dice, pr_curve_at_50, rotation_consistency, save_results, EvalReport, IouKind,
    Prediction, RotationConsistency, Scene,
};
use crate::model::{Pipeline, PipelineModel};
use crate::train::{infer_scenes, load_split, train, Sample, TrainReport};

/// Generates the train/val/test splits under `cfg.data_dir` and writes the
/// resolved config beside them.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<GenReport> {
    cfg.validate()?;
    let (tr, va, te) = cfg.split_counts;
    let splits = [("train", tr), ("val", va), ("test", te)];
    std::fs::create_dir_all(&cfg.data_dir)
        .map_err(|e| Error::io(cfg.data_dir.display().to_string(), e))?;
    let report = generate_dataset(&cfg.synth, &splits, &cfg.data_dir)?;
    cfg.save(&cfg.data_dir.join("config.json"))?;
    Ok(report)
}

/// Trains per config (optionally resuming) and echoes the resolved config
/// into the run directory.
pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(cfg.out_dir.display().to_string(), e))?;
    cfg.save(&cfg.out_dir.join("config.json"))?;
    train(cfg, resume)
}

/// Loads a checkpoint into a pipeline built from `cfg`.
pub fn load_pipeline(cfg: &RunConfig, checkpoint: &Path) -> Result<Pipeline<f32>> {
    let ck = load_checkpoint(checkpoint)?;
    let mut pipeline = Pipeline::new(&cfg.backbone, &cfg.snake, cfg.seed);
    pipeline.peak_budget = cfg.peak_budget;
    apply_checkpoint(&ck, &mut pipeline)?;
    Ok(pipeline)
}

pub struct InferSummary {
    pub images: usize,
    pub predictions: usize,
    pub out_path: PathBuf,
}

/// Runs inference over a manifest's images and writes the results JSON.
pub fn cmd_infer(
    cfg: &RunConfig,
    checkpoint: &Path,
    manifest_path: &Path,
    out_path: &Path,
    score_threshold: f64,
    mode: ProposalMode,
    refine: bool,
) -> Result<InferSummary> {
    let manifest = load_manifest(manifest_path)?;
    let split_dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let samples = load_split(&manifest, split_dir)?;
    let mut pipeline = load_pipeline(cfg, checkpoint)?;

    let mut images = Vec::with_capacity(samples.len());
    let mut total = 0usize;
    for s in &samples {
        let preds = pipeline.infer(&s.image, score_threshold, mode, refine)?;
        total += preds.len();
        images.push((s.id, s.image.shape()[2], s.image.shape()[1], preds));
    }
    save_results(&images, out_path)?;
    Ok(InferSummary {
        images: images.len(),
        predictions: total,
        out_path: out_path.to_path_buf(),
    })
}

/// Joins results JSON with a manifest into scenes.
pub fn scenes_from_results(manifest_path: &Path, results_path: &Path) -> Result<Vec<Scene>> {
    let manifest = load_manifest(manifest_path)?;
    let results = load_results(results_path)?;
    results
        .into_iter()
        .map(|(id, w, h, predictions)| {
            if !manifest.images.iter().any(|img| img.id == id) {
                return Err(Error::Manifest(format!(
                    "results reference image id {id} absent from the manifest"
                )));
            }
            Ok(Scene {
                image_id: id,
                width: w,
                height: h,
                ground_truth: manifest
                    .annotations_for(id)
                    .into_iter()
                    .cloned()
                    .collect(),
                predictions,
            })
        })
        .collect()
}

/// Scores a results file against a manifest: AP tables, Dice, PR curves.
pub fn cmd_eval(
    cfg: &RunConfig,
    manifest_path: &Path,
    results_path: &Path,
    out_dir: &Path,
) -> Result<EvalReport> {
    let scenes = scenes_from_results(manifest_path, results_path)?;
    let report = build_report(cfg, &scenes)?;
    emit_report(&report, out_dir)?;
    Ok(report)
}

/// Builds an [`EvalReport`] (without rotation/ellipticity sections).
pub fn build_report(cfg: &RunConfig, scenes: &[Scene]) -> Result<EvalReport> {
    let class_count = cfg.backbone.class_count;
    let thresholds = coco_thresholds();
    let mut report = EvalReport::new(cfg.seed, serde_json::to_value(cfg)?);
    report.detection = average_precision(scenes, class_count, IouKind::Circle, &thresholds)?;
    report.segmentation = average_precision(scenes, class_count, IouKind::Mask, &thresholds)?;
    let (dice, per_image) = mean_dice(scenes)?;
    report.mean_dice = dice;
    report.per_image_dice = per_image;
    report.pixel_union_dice = pixel_union_dice(scenes)?;
    report.pr_detection_50 = pr_curve_at_50(scenes, class_count, IouKind::Circle)?;
    report.pr_segmentation_50 = pr_curve_at_50(scenes, class_count, IouKind::Mask)?;
    Ok(report)
}

/// Runs both orientations through the model itself so the exact-lattice
/// protocol is guaranteed, then writes a small JSON report.
pub fn cmd_rotate_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    manifest_path: &Path,
    out_dir: &Path,
    score_threshold: f64,
    mode: ProposalMode,
) -> Result<RotationConsistency> {
    let manifest = load_manifest(manifest_path)?;
    let split_dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let samples = load_split(&manifest, split_dir)?;
    let mut pipeline = load_pipeline(cfg, checkpoint)?;
    let images: Vec<_> = samples.iter().map(|s| s.image.clone()).collect();
    let mut model = PipelineModel {
        pipeline: &mut pipeline,
        score_threshold,
        mode,
        refine: true,
    };
    let rc = rotation_consistency(&mut model, &images)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let doc = serde_json::json!({
        "schema_version": 1,
        "rotation_consistency": rc.score,
        "scored_images": rc.scored_images,
        "skipped_images": rc.skipped_images,
        "config_echo": serde_json::to_value(cfg)?,
    });
    let path = out_dir.join("rotation_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(rc)
}

pub struct SweepOutcome {
    pub report: EvalReport,
    /// Dice of the circle-proposal pipeline per sweep dataset.
    pub circle_dice: Vec<f64>,
    /// Dice with the octagon-baseline proposals, same checkpoints.
    pub octagon_dice: Vec<f64>,
}

/// The roundness sweep: per axis-ratio range, generate an ellipse-only
/// dataset, train, and score; emits the ellipticity curve plus the
/// circle-vs-octagon proposal comparison.
pub fn cmd_ellipticity(
    base: &RunConfig,
    ranges: &[(f64, f64)],
    out_dir: &Path,
) -> Result<SweepOutcome> {
    base.validate()?;
    if ranges.len() < 3 {
        return Err(Error::Config(format!(
            "ellipticity sweep needs >= 3 axis-ratio ranges, got {}",
            ranges.len()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let mut report = EvalReport::new(base.seed, serde_json::to_value(base)?);
    let mut circle_dice = Vec::new();
    let mut octagon_dice = Vec::new();
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.data_dir = out_dir.join(format!("sweep_{i}/data"));
        cfg.out_dir = out_dir.join(format!("sweep_{i}/run"));
        cfg.synth.shape_weights = crate::data::ShapeWeights {
            disk: 0.0,
            ellipse: 1.0,
            blob: 0.0,
        };
        cfg.synth.axis_ratio_range = (lo, hi);
        cmd_gen_data(&cfg)?;
        let train_report = cmd_train(&cfg, None)?;

        let manifest = load_manifest(&cfg.manifest_path("test"))?;
        let samples = load_split(&manifest, &cfg.split_dir("test"))?;
        let mut pipeline = load_pipeline(&cfg, &train_report.best_checkpoint)?;
        let scenes = infer_scenes(&mut pipeline, &samples, cfg.score_threshold, &cfg)?;
        report
            .ellipticity_curve
            .push(ellipticity_point(&scenes, cfg.backbone.class_count)?);
        let (dice, _) = mean_dice(&scenes)?;
        circle_dice.push(dice);

        let octagon_scenes =
            infer_scenes_with_mode(&mut pipeline, &samples, &cfg, ProposalMode::OctagonBaseline)?;
        let (odice, _) = mean_dice(&octagon_scenes)?;
        octagon_dice.push(odice);
    }
    emit_report(&report, out_dir)?;
    Ok(SweepOutcome {
        report,
        circle_dice,
        octagon_dice,
    })
}

fn infer_scenes_with_mode(
    pipeline: &mut Pipeline<f32>,
    samples: &[Sample],
    cfg: &RunConfig,
    mode: ProposalMode,
) -> Result<Vec<Scene>> {
    samples
        .iter()
        .map(|s| {
            let predictions: Vec<Prediction> =
                pipeline.infer(&s.image, cfg.score_threshold, mode, true)?;
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
