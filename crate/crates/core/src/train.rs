//! Self-supervised training: synthesize perturbed sources from target-domain
//! patches, regress the additive offset, and track recovery quality.
//!
//! Supervision is free: a source image is manufactured from a target patch by
//! adding one random offset to the R channel and another to the B channel
//! (G is untouched, since stain variation barely affects it). The network is
//! trained to undo exactly that perturbation. Sources are deliberately not
//! clamped to [0, 1]: clamping near saturation would make the true offset
//! unrecoverable and corrupt the labels.

use crate::image::ImageRgb;
use crate::layers::{loss_l1l2, AdamParams, AdamState, LayerError};
use crate::model::{build_model, ArchSpec, Mode, Model, ModelError};
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("image {index} is {width}x{height}, smaller than the {size}x{size} patch")]
    ImageTooSmall {
        index: usize,
        width: usize,
        height: usize,
        size: usize,
    },
    #[error(
        "patch rejection budget exhausted: accepted {accepted} of {attempts} attempts \
         (acceptance rate {rate:.3}); the corpus may be mostly background"
    )]
    RejectionBudget {
        accepted: usize,
        attempts: usize,
        rate: f64,
    },
    #[error("need at least {need} patches for batch size {batch}, got {have}")]
    NotEnoughPatches { have: usize, need: usize, batch: usize },
    #[error("non-finite loss at iteration {iteration}; aborting")]
    NonFiniteLoss { iteration: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Layer(#[from] LayerError),
}

/// Training hyperparameters. Defaults follow the reference recipe: batch 128
/// of 256x256 patches, Adam at 0.001, lambda 0.1, offsets in (-0.2, 0.2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patch_size: usize,
    pub lr: f32,
    pub lambda: f32,
    pub iterations: usize,
    pub seed: u64,
    pub offset_range: f32,
    pub holdout_fraction: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            patch_size: 256,
            lr: 0.001,
            lambda: 0.1,
            iterations: 1000,
            seed: 0,
            offset_range: 0.2,
            holdout_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::Config(msg));
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1".into());
        }
        if self.iterations < 1 {
            return fail("iterations must be at least 1".into());
        }
        if self.patch_size < 1 {
            return fail("patch_size must be at least 1".into());
        }
        if !(self.offset_range > 0.0 && self.offset_range < 0.5) {
            return fail(format!(
                "offset_range must lie in (0, 0.5), got {}",
                self.offset_range
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 0.5) {
            return fail(format!(
                "holdout_fraction must lie in (0, 0.5), got {}",
                self.holdout_fraction
            ));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return fail(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return fail(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        Ok(())
    }
}

/// Where a patch came from: corpus image index and top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchTag {
    pub image: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone)]
pub struct Patch {
    /// `(3, size, size)` channels-first values in [0, 1].
    pub data: Tensor,
    pub tag: PatchTag,
}

#[derive(Debug, Clone)]
pub struct PatchSet {
    patches: Vec<Patch>,
    size: usize,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    /// Splits off the last `ceil(len * fraction)` patches as a holdout set.
    pub fn split_holdout(&self, fraction: f32) -> (&[Patch], &[Patch]) {
        let k = ((self.len() as f64 * fraction as f64).round() as usize).clamp(1, self.len() - 1);
        self.patches.split_at(self.len() - k)
    }
}

/// Mean-luminance threshold above which a patch counts as background.
pub const TISSUE_LUMINANCE_MAX: f32 = 0.9;
const REJECTION_ATTEMPTS_PER_PATCH: usize = 100;

/// Draws `n` patches of `size` x `size` at uniform-random positions, skipping
/// patches whose mean luminance exceeds [`TISSUE_LUMINANCE_MAX`]. The budget
/// is 100 attempts per requested patch.
pub fn sample_patches(
    images: &[ImageRgb],
    n: usize,
    size: usize,
    rng: &mut Rng,
) -> Result<PatchSet, TrainError> {
    assert!(!images.is_empty(), "no images to sample from");
    for (index, img) in images.iter().enumerate() {
        if img.width() < size || img.height() < size {
            return Err(TrainError::ImageTooSmall {
                index,
                width: img.width(),
                height: img.height(),
                size,
            });
        }
    }
    let budget = REJECTION_ATTEMPTS_PER_PATCH
        .checked_mul(n)
        .expect("reasonable patch count");
    let mut patches = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while patches.len() < n {
        if attempts >= budget {
            return Err(TrainError::RejectionBudget {
                accepted: patches.len(),
                attempts,
                rate: patches.len() as f64 / attempts as f64,
            });
        }
        attempts += 1;
        let image = rng.index(images.len());
        let img = &images[image];
        let x = rng.index(img.width() - size + 1);
        let y = rng.index(img.height() - size + 1);
        let crop = img.crop(x, y, size, size);
        if crop.mean_luminance() > TISSUE_LUMINANCE_MAX {
            continue;
        }
        patches.push(Patch {
            data: crop.to_chw(),
            tag: PatchTag { image, x, y },
        });
    }
    Ok(PatchSet { patches, size })
}

/// Perturbs R by `eps1` and B by `eps2`, both drawn from
/// `Unif(-range, range)`; G is copied bit-exactly and nothing is clamped.
pub fn synthesize_pair(target: &Tensor, rng: &mut Rng, range: f32) -> (Tensor, f32, f32) {
    let &[c, h, w] = target.shape() else {
        panic!("expected (3, H, W), got {:?}", target.shape());
    };
    assert_eq!(c, 3, "patches are RGB");
    let eps1 = rng.uniform_in(-(range as f64), range as f64) as f32;
    let eps2 = rng.uniform_in(-(range as f64), range as f64) as f32;
    let mut source = target.clone();
    let plane = h * w;
    for v in &mut source.data_mut()[..plane] {
        *v += eps1;
    }
    for v in &mut source.data_mut()[2 * plane..] {
        *v += eps2;
    }
    (source, eps1, eps2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub loss: f32,
    pub holdout: Option<f32>,
    pub millis: u64,
}

/// Per-iteration loss trace plus the holdout loss of the untrained model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub initial_holdout: f32,
    pub records: Vec<IterRecord>,
}

impl TrainLog {
    pub fn final_holdout(&self) -> f32 {
        self.records
            .iter()
            .rev()
            .find_map(|r| r.holdout)
            .unwrap_or(self.initial_holdout)
    }

    /// CSV with header `iteration,loss,holdout_loss,millis`; row 0 carries the
    /// untrained holdout loss, then one row per completed iteration with the
    /// holdout column blank when it was not evaluated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss,holdout_loss,millis\n");
        out.push_str(&format!("0,,{},0\n", self.initial_holdout));
        for r in &self.records {
            let holdout = r.holdout.map(|h| h.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.iteration, r.loss, holdout, r.millis));
        }
        out
    }
}

const HOLDOUT_EVERY: usize = 50;

/// Stacks patches (perturbed and clean) into `(N, 3, S, S)` batch tensors.
fn stack_batch(sources: &[Tensor], targets: &[Tensor], size: usize) -> (Tensor, Tensor) {
    let n = sources.len();
    let plane = 3 * size * size;
    let mut src = vec![0.0f32; n * plane];
    let mut tgt = vec![0.0f32; n * plane];
    for (i, (s, t)) in sources.iter().zip(targets).enumerate() {
        src[i * plane..(i + 1) * plane].copy_from_slice(s.data());
        tgt[i * plane..(i + 1) * plane].copy_from_slice(t.data());
    }
    (
        Tensor::new(&[n, 3, size, size], src).expect("sized above"),
        Tensor::new(&[n, 3, size, size], tgt).expect("sized above"),
    )
}

/// Loss of the model's corrections on fixed perturbed/clean pairs, evaluated
/// with running statistics (infer semantics).
fn holdout_loss(model: &Model, src: &Tensor, tgt: &Tensor, lambda: f32) -> Result<f32, TrainError> {
    let off = model.infer(src)?;
    let pred = src.add(&off).expect("same shape");
    let (loss, _) = loss_l1l2(&pred, tgt, lambda)?;
    Ok(loss)
}

/// Runs the full self-supervised loop. Deterministic: the seed fixes weight
/// init, batch composition, and every synthetic offset, so identical configs
/// give bit-identical weights (wall-clock fields aside).
pub fn train(patches: &PatchSet, cfg: &TrainConfig) -> Result<(Model, TrainLog), TrainError> {
    cfg.validate()?;
    if patches.len() < cfg.batch_size.max(2) {
        return Err(TrainError::NotEnoughPatches {
            have: patches.len(),
            need: cfg.batch_size.max(2),
            batch: cfg.batch_size,
        });
    }

    let mut rng = Rng::new(cfg.seed);
    let mut model_rng = rng.fork();
    let mut holdout_rng = rng.fork();
    let mut batch_rng = rng.fork();

    let mut model = build_model(&ArchSpec::reference(), &mut model_rng)?;
    model.set_mode(Mode::Train);
    let names = model.param_names();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut adam = AdamState::new(AdamParams::with_lr(cfg.lr), &model.param_tensors());

    let (train_split, holdout_split) = patches.split_holdout(cfg.holdout_fraction);

    // holdout pairs get one fixed set of epsilons per run so the holdout loss
    // is comparable across iterations
    let mut holdout_sources = Vec::with_capacity(holdout_split.len());
    let mut holdout_targets = Vec::with_capacity(holdout_split.len());
    for p in holdout_split {
        let (src, _, _) = synthesize_pair(&p.data, &mut holdout_rng, cfg.offset_range);
        holdout_sources.push(src);
        holdout_targets.push(p.data.clone());
    }
    let (holdout_src, holdout_tgt) = stack_batch(&holdout_sources, &holdout_targets, patches.size());

    let initial_holdout = holdout_loss(&model, &holdout_src, &holdout_tgt, cfg.lambda)?;
    let mut records = Vec::with_capacity(cfg.iterations);

    let mut sources = Vec::with_capacity(cfg.batch_size);
    let mut targets = Vec::with_capacity(cfg.batch_size);
    for iteration in 1..=cfg.iterations {
        let t0 = Instant::now();
        sources.clear();
        targets.clear();
        for _ in 0..cfg.batch_size {
            let patch = &train_split[batch_rng.index(train_split.len())];
            let (src, _, _) = synthesize_pair(&patch.data, &mut batch_rng, cfg.offset_range);
            sources.push(src);
            targets.push(patch.data.clone());
        }
        let (src, tgt) = stack_batch(&sources, &targets, patches.size());
        let (loss, grads) = model.forward_backward(&src, &tgt, cfg.lambda)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { iteration });
        }
        adam.step(&mut model.param_tensors_mut(), &grads.tensors(), &name_refs)?;

        let holdout = if iteration % HOLDOUT_EVERY == 0 || iteration == cfg.iterations {
            Some(holdout_loss(&model, &holdout_src, &holdout_tgt, cfg.lambda)?)
        } else {
            None
        };
        records.push(IterRecord {
            iteration,
            loss,
            holdout,
            millis: t0.elapsed().as_millis() as u64,
        });
    }

    model.set_mode(Mode::Infer);
    Ok((
        model,
        TrainLog {
            initial_holdout,
            records,
        },
    ))
}

/// Per-channel mean absolute error of the recovered global offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetRecovery {
    /// MAE for R, G, B; R and B are measured against the known epsilons, G
    /// against zero.
    pub mae: [f32; 3],
}

/// For each trial, perturbs a patch with known offsets, reduces the predicted
/// field to its per-channel spatial mean, and scores it against the ideal
/// correction `(-eps1, 0, -eps2)`.
pub fn evaluate_offset_recovery(
    model: &Model,
    patches: &[Patch],
    trials: usize,
    range: f32,
    rng: &mut Rng,
) -> Result<OffsetRecovery, TrainError> {
    assert!(!patches.is_empty(), "no patches to evaluate on");
    assert!(trials > 0, "need at least one trial");
    let mut err = [0.0f64; 3];
    for _ in 0..trials {
        let patch = &patches[rng.index(patches.len())];
        let (src, eps1, eps2) = synthesize_pair(&patch.data, rng, range);
        let &[c, h, w] = src.shape() else { unreachable!() };
        let batched = Tensor::new(&[1, c, h, w], src.into_data()).expect("same data");
        let off = model.infer(&batched)?;
        let plane = h * w;
        let mut means = [0.0f64; 3];
        for ch in 0..3 {
            let sum: f64 = off.data()[ch * plane..(ch + 1) * plane]
                .iter()
                .map(|&v| v as f64)
                .sum();
            means[ch] = sum / plane as f64;
        }
        err[0] += (means[0] + eps1 as f64).abs();
        err[1] += means[1].abs();
        err[2] += (means[2] + eps2 as f64).abs();
    }
    Ok(OffsetRecovery {
        mae: err.map(|e| (e / trials as f64) as f32),
    })
}
