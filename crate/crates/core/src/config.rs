//! Run configuration: one JSON document drives every command; each run
//! writes its resolved config beside its outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::deform::SnakeConfig;
use crate::detect::BackboneConfig;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LossWeightsConfig {
    pub radius: f64,
    pub offset: f64,
    /// Weight of the contour-deformation loss in the joint objective.
    pub iter: f64,
}

impl Default for LossWeightsConfig {
    fn default() -> Self {
        LossWeightsConfig {
            radius: 0.1,
            offset: 1.0,
            iter: 1.0,
        }
    }
}

/// Desk-scale defaults; the journal-scale settings (50 epochs, batch 16)
/// remain selectable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Dataset root: `<data_dir>/<split>/manifest.json`.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub synth: SynthConfig,
    /// (train, val, test) image counts for gen-data.
    pub split_counts: (usize, usize, usize),
    pub backbone: BackboneConfig,
    pub snake: SnakeConfig,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss_weights: LossWeightsConfig,
    /// Fraction of training samples given a random exact quarter-turn.
    pub rotation_augmentation: f64,
    /// Reporting threshold for emitted detections.
    pub score_threshold: f64,
    pub peak_budget: usize,
    /// Max contours refined per training batch.
    pub snake_samples_per_batch: usize,
    /// Training proposals jitter ground-truth circles by this fraction.
    pub proposal_jitter: f64,
    /// Run validation every this many epochs.
    pub val_interval: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/default"),
            synth: SynthConfig::default(),
            split_counts: (200, 50, 50),
            backbone: BackboneConfig::default(),
            snake: SnakeConfig::default(),
            optimizer: AdamConfig::default(),
            batch_size: 8,
            epochs: 30,
            loss_weights: LossWeightsConfig::default(),
            rotation_augmentation: 0.0,
            score_threshold: 0.3,
            peak_budget: 100,
            snake_samples_per_batch: 8,
            proposal_jitter: 0.1,
            val_interval: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.synth.validate()?;
        self.snake.validate()?;
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch_size and epochs must be positive".to_string());
        }
        if self.loss_weights.radius <= 0.0
            || self.loss_weights.offset <= 0.0
            || self.loss_weights.iter <= 0.0
        {
            return fail(format!("loss weights must be positive: {:?}", self.loss_weights));
        }
        if !(0.0..=1.0).contains(&self.rotation_augmentation) {
            return fail(format!(
                "rotation_augmentation must lie in [0, 1], got {}",
                self.rotation_augmentation
            ));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return fail(format!(
                "score_threshold must lie in [0, 1], got {}",
                self.score_threshold
            ));
        }
        if self.optimizer.lr <= 0.0 {
            return fail(format!("learning rate must be positive, got {}", self.optimizer.lr));
        }
        if self.peak_budget == 0 || self.val_interval == 0 {
            return fail("peak_budget and val_interval must be positive".to_string());
        }
        if !(0.0..0.5).contains(&self.proposal_jitter) {
            return fail(format!(
                "proposal_jitter must lie in [0, 0.5), got {}",
                self.proposal_jitter
            ));
        }
        if self.backbone.class_count != self.synth.class_count {
            return fail(format!(
                "backbone class_count {} != synth class_count {}",
                self.backbone.class_count, self.synth.class_count
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn split_dir(&self, split: &str) -> PathBuf {
        self.data_dir.join(split)
    }

    pub fn manifest_path(&self, split: &str) -> PathBuf {
        self.split_dir(split).join("manifest.json")
    }
}
