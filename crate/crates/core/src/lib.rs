//! Self-supervised color normalization for H&E histopathology.
//!
//! A tiny fully-convolutional network learns to predict the additive color
//! offset between an image and a target stain appearance, supervised entirely
//! by synthetic R/B channel perturbations of patches from the target domain.
//! The crate also ships the classical Reinhard (lab-statistics matching) and
//! Macenko (optical-density stain deconvolution) baselines, a deterministic
//! training loop, bit-exact raster I/O, gigapixel tiling, and a throughput
//! benchmark.

pub mod baselines;
pub mod gradcheck;
pub mod image;
pub mod layers;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod weights;

pub use image::ImageRgb;
pub use model::{build_model, ArchSpec, Model};
pub use rng::Rng;
pub use tensor::Tensor;
