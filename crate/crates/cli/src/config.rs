//! Run configuration for `colornorm train`: UTF-8 JSON with strict keys.
//! Unknown fields are rejected so typos cannot silently fall back to
//! defaults; command-line flags override the file.

use colornorm::train::TrainConfig;
use serde::Deserialize;
use std::path::PathBuf;

fn default_num_patches() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Target-appearance PPM images patches are sampled from.
    pub target_images: Vec<PathBuf>,
    /// Where the trained weight file goes.
    pub output_weights: PathBuf,
    /// Optional per-iteration CSV log.
    #[serde(default)]
    pub log_csv: Option<PathBuf>,
    /// Patches to sample before training.
    #[serde(default = "default_num_patches")]
    pub num_patches: usize,
    /// Worker threads (default: all cores).
    #[serde(default)]
    pub threads: Option<usize>,

    // training hyperparameters, defaulting to the reference recipe
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::patch_size")]
    pub patch_size: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f32,
    #[serde(default = "defaults::lambda")]
    pub lambda: f32,
    #[serde(default = "defaults::iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::offset_range")]
    pub offset_range: f32,
    #[serde(default = "defaults::holdout_fraction")]
    pub holdout_fraction: f32,
}

mod defaults {
    use colornorm::train::TrainConfig;

    pub fn batch_size() -> usize {
        TrainConfig::default().batch_size
    }
    pub fn patch_size() -> usize {
        TrainConfig::default().patch_size
    }
    pub fn lr() -> f32 {
        TrainConfig::default().lr
    }
    pub fn lambda() -> f32 {
        TrainConfig::default().lambda
    }
    pub fn iterations() -> usize {
        TrainConfig::default().iterations
    }
    pub fn offset_range() -> f32 {
        TrainConfig::default().offset_range
    }
    pub fn holdout_fraction() -> f32 {
        TrainConfig::default().holdout_fraction
    }
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            patch_size: self.patch_size,
            lr: self.lr,
            lambda: self.lambda,
            iterations: self.iterations,
            seed: self.seed,
            offset_range: self.offset_range,
            holdout_fraction: self.holdout_fraction,
        }
    }
}
