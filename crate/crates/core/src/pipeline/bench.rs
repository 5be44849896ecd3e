//! Throughput benchmark: end-to-end wall clock (decode, normalize, encode)
//! over a corpus of PPM rasters, reported as seconds per gigapixel.
//!
//! Target fitting happens once before the clock starts; per-image work such
//! as the Macenko source-stain estimation is part of normalizing an image and
//! stays inside the timed loop. Images are processed in parallel on the
//! supplied thread count; every method's output is deterministic regardless
//! of threading.

use super::normalize::{normalize_colornormnet, NormalizeOptions, OffsetMode};
use super::ppm::{read_ppm, read_ppm_dims, write_ppm, PpmError};
use super::PipelineError;
use crate::baselines::{
    estimate_stain_macenko, fit_lab_stats, normalize_macenko, normalize_reinhard, LabStats,
    StainModel,
};
use crate::image::ImageRgb;
use crate::model::Model;
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MIN_CORPUS_PIXELS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchMethod {
    ColornormnetGlobal,
    ColornormnetPixel,
    Reinhard,
    Macenko,
}

pub const METHOD_NAMES: [(&str, BenchMethod); 4] = [
    ("colornormnet_global", BenchMethod::ColornormnetGlobal),
    ("colornormnet_pixel", BenchMethod::ColornormnetPixel),
    ("reinhard", BenchMethod::Reinhard),
    ("macenko", BenchMethod::Macenko),
];

impl BenchMethod {
    pub fn parse(name: &str) -> Result<Self, PipelineError> {
        METHOD_NAMES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| *m)
            .ok_or_else(|| PipelineError::UnknownMethod {
                got: name.to_string(),
                valid: METHOD_NAMES.map(|(n, _)| n).join(", "),
            })
    }

    pub fn name(&self) -> &'static str {
        METHOD_NAMES
            .iter()
            .find(|(_, m)| m == self)
            .map(|(n, _)| *n)
            .expect("every method is named")
    }
}

/// One row of the timing table.
#[derive(Debug, Clone, Serialize)]
pub struct ThroughputReport {
    pub method: String,
    pub pixels: u64,
    pub seconds: f64,
    pub seconds_per_gigapixel: f64,
    pub threads: usize,
}

impl ThroughputReport {
    fn new(method: &str, pixels: u64, seconds: f64, threads: usize) -> Self {
        Self {
            method: method.to_string(),
            pixels,
            seconds,
            seconds_per_gigapixel: seconds * 1e9 / pixels as f64,
            threads,
        }
    }
}

/// Renders reports as a fixed-width table with a method column and a
/// time-per-gigapixel column.
pub fn format_table(reports: &[ThroughputReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<22} {:>14} {:>12} {:>8}\n", "Method", "Time (s/GPix)", "Seconds", "Threads"));
    for r in reports {
        out.push_str(&format!(
            "{:<22} {:>14.1} {:>12.2} {:>8}\n",
            r.method, r.seconds_per_gigapixel, r.seconds, r.threads
        ));
    }
    out
}

/// Normalization targets, fitted before timing starts.
pub struct BenchTargets<'a> {
    pub model: Option<&'a Model>,
    pub reinhard: Option<LabStats>,
    pub macenko: Option<StainModel>,
}

/// Fits the classical targets from one designated target image.
pub fn fit_targets<'a>(
    model: Option<&'a Model>,
    target_image: &ImageRgb,
) -> Result<BenchTargets<'a>, PipelineError> {
    Ok(BenchTargets {
        model,
        reinhard: Some(fit_lab_stats(target_image)),
        macenko: Some(estimate_stain_macenko(target_image)?),
    })
}

/// Lexicographically sorted PPM paths of a corpus directory.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(PpmError::Io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::EmptyCorpus {
            dir: dir.to_path_buf(),
        });
    }
    Ok(files)
}

/// Total pixel count from header probes only (cheap precondition check).
pub fn corpus_pixels(files: &[PathBuf]) -> Result<u64, PipelineError> {
    let mut total = 0u64;
    for f in files {
        let (w, h) = read_ppm_dims(f)?;
        total += w as u64 * h as u64;
    }
    Ok(total)
}

fn normalize_one(
    method: BenchMethod,
    targets: &BenchTargets,
    image: &ImageRgb,
) -> Result<ImageRgb, PipelineError> {
    match method {
        BenchMethod::ColornormnetGlobal | BenchMethod::ColornormnetPixel => {
            let model = targets.model.ok_or(PipelineError::MissingTarget {
                method: method.name(),
                what: "trained weights",
            })?;
            let mode = if method == BenchMethod::ColornormnetGlobal {
                OffsetMode::Global
            } else {
                OffsetMode::Pixel
            };
            Ok(normalize_colornormnet(
                model,
                image,
                mode,
                &NormalizeOptions::default(),
            )?)
        }
        BenchMethod::Reinhard => {
            let stats = targets
                .reinhard
                .as_ref()
                .ok_or(PipelineError::MissingTarget {
                    method: method.name(),
                    what: "target lab statistics",
                })?;
            Ok(normalize_reinhard(image, stats))
        }
        BenchMethod::Macenko => {
            let stain = targets
                .macenko
                .as_ref()
                .ok_or(PipelineError::MissingTarget {
                    method: method.name(),
                    what: "target stain model",
                })?;
            Ok(normalize_macenko(image, stain)?)
        }
    }
}

/// Times one method over the corpus, writing outputs under
/// `out_dir/<method>/`. The caller is expected to invoke this inside a rayon
/// pool sized to the reported thread count.
pub fn benchmark_method(
    method: BenchMethod,
    files: &[PathBuf],
    targets: &BenchTargets,
    out_dir: &Path,
    threads: usize,
) -> Result<ThroughputReport, PipelineError> {
    let method_dir = out_dir.join(method.name());
    std::fs::create_dir_all(&method_dir).map_err(PpmError::Io)?;

    let start = Instant::now();
    let pixel_counts: Vec<u64> = files
        .par_iter()
        .map(|path| -> Result<u64, PipelineError> {
            let image = read_ppm(path)?;
            let out = normalize_one(method, targets, &image)?;
            let name = path.file_name().expect("corpus entries are files");
            write_ppm(&out, method_dir.join(name))?;
            Ok(image.pixel_count() as u64)
        })
        .collect::<Result<_, _>>()?;
    let seconds = start.elapsed().as_secs_f64();
    let pixels: u64 = pixel_counts.iter().sum();
    Ok(ThroughputReport::new(method.name(), pixels, seconds, threads))
}

/// Runs every requested method over the corpus at the given thread count.
pub fn benchmark(
    methods: &[BenchMethod],
    corpus_dir: &Path,
    targets: &BenchTargets,
    out_dir: &Path,
    threads: usize,
) -> Result<Vec<ThroughputReport>, PipelineError> {
    let files = corpus_files(corpus_dir)?;
    let pixels = corpus_pixels(&files)?;
    if pixels < MIN_CORPUS_PIXELS {
        return Err(PipelineError::CorpusTooSmall {
            pixels,
            required: MIN_CORPUS_PIXELS,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| {
        methods
            .iter()
            .map(|&m| benchmark_method(m, &files, targets, out_dir, threads))
            .collect()
    })
}
