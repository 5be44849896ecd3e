//! Raster I/O, gigapixel tiling, network inference over whole images, and the
//! throughput benchmark.

mod bench;
mod normalize;
mod ppm;
mod tile;

pub use bench::{
    benchmark, benchmark_method, corpus_files, corpus_pixels, fit_targets, format_table,
    BenchMethod, BenchTargets, ThroughputReport, METHOD_NAMES, MIN_CORPUS_PIXELS,
};
pub use normalize::{global_offset, normalize_colornormnet, NormalizeOptions, OffsetMode};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, read_ppm_dims, write_ppm, PpmError};
pub use tile::{stitch, tile, Tile, TileGrid};

use crate::baselines::BaselineError;
use crate::model::ModelError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown method `{got}`; valid methods: {valid}")]
    UnknownMethod { got: String, valid: String },
    #[error("method `{method}` needs {what} but none was provided")]
    MissingTarget {
        method: &'static str,
        what: &'static str,
    },
    #[error("no .ppm files in corpus directory {dir}")]
    EmptyCorpus { dir: PathBuf },
    #[error("corpus holds {pixels} pixels; the benchmark needs at least {required}")]
    CorpusTooSmall { pixels: u64, required: u64 },
    #[error(transparent)]
    Ppm(#[from] PpmError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}
