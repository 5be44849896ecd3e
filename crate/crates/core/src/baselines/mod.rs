//! Classical color-normalization baselines: Reinhard statistics matching in
//! Ruderman lab space and Macenko optical-density stain deconvolution. They
//! serve both as comparison methods and as independent oracles for the
//! learned normalizer.

mod lab;
mod macenko;
mod od;
mod reinhard;

pub use lab::{lab_to_rgb, rgb_to_lab};
pub use macenko::{estimate_stain_macenko, normalize_macenko, StainModel};
pub use od::{od_to_rgb, rgb_to_od};
pub use reinhard::{fit_lab_stats, normalize_reinhard, LabStats};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("insufficient tissue: only {pixels} pixels pass the optical-density threshold (need {required})")]
    InsufficientTissue { pixels: usize, required: usize },
    #[error("degenerate stain geometry: {0}")]
    DegenerateStain(&'static str),
}
