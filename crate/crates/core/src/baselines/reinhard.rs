//! Reinhard statistics matching: shift and scale each lab channel so the
//! source's per-channel mean and standard deviation match the target's.

use super::lab::{lab_to_rgb_with, lms_to_rgb_matrix, rgb_to_lab};
use crate::image::ImageRgb;
use serde::{Deserialize, Serialize};

/// Per-channel mean and standard deviation in Ruderman lab space.
///
/// JSON fields: `mean` and `std`, each `[l, alpha, beta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

const MIN_STD: f64 = 1e-6;

fn lab_pixels(image: &ImageRgb) -> Vec<[f32; 3]> {
    image
        .pixels()
        .chunks_exact(3)
        .map(|px| rgb_to_lab([px[0], px[1], px[2]]))
        .collect()
}

fn stats_of(lab: &[[f32; 3]]) -> LabStats {
    let n = lab.len() as f64;
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    for px in lab {
        for c in 0..3 {
            let v = px[c] as f64;
            sum[c] += v;
            sum_sq[c] += v * v;
        }
    }
    let mut mean = [0.0f64; 3];
    let mut std = [0.0f64; 3];
    for c in 0..3 {
        mean[c] = sum[c] / n;
        std[c] = (sum_sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt();
    }
    LabStats { mean, std }
}

/// Population mean/std of the image in lab space.
pub fn fit_lab_stats(image: &ImageRgb) -> LabStats {
    stats_of(&lab_pixels(image))
}

/// Per channel: `out = (in - mean_src) * (std_tgt / max(std_src, 1e-6)) +
/// mean_tgt`, converted back to RGB and clamped to [0, 1]. A constant-color
/// source (zero variance) maps to the constant with the target mean.
pub fn normalize_reinhard(source: &ImageRgb, target: &LabStats) -> ImageRgb {
    let lab = lab_pixels(source);
    let src = stats_of(&lab);
    let mut scale = [0.0f64; 3];
    let mut shift = [0.0f64; 3];
    for c in 0..3 {
        scale[c] = target.std[c] / src.std[c].max(MIN_STD);
        shift[c] = target.mean[c] - src.mean[c] * scale[c];
    }
    let inv = lms_to_rgb_matrix();
    let mut pixels = Vec::with_capacity(source.pixels().len());
    for px in lab {
        let mapped = [
            (px[0] as f64 * scale[0] + shift[0]) as f32,
            (px[1] as f64 * scale[1] + shift[1]) as f32,
            (px[2] as f64 * scale[2] + shift[2]) as f32,
        ];
        pixels.extend_from_slice(&lab_to_rgb_with(&inv, mapped));
    }
    ImageRgb::from_clamped(source.width(), source.height(), pixels)
}
