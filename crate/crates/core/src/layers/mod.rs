//! Forward and backward passes for every layer the offset-prediction network
//! needs: dilated same-padding convolution, batch normalization, leaky ReLU,
//! channel concatenation, the combined L1+lambda*L2 loss, and Adam.
//!
//! Backward passes are hand-chained adjoints; there is no general autodiff
//! graph because the architecture is a fixed pipeline. Kernels are generic
//! over `f32`/`f64`: the model runs in `f32`, the finite-difference checker
//! re-runs the same kernels in `f64` so difference quotients stay tight.

mod activation;
mod adam;
mod batchnorm;
mod concat;
mod conv;
mod loss;

pub use activation::{leaky_relu, leaky_relu_backward};
pub use adam::{AdamParams, AdamState};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormParams, BnMode,
};
pub use concat::{concat_channels, split_channels};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams};
pub use loss::loss_l1l2;

pub(crate) use batchnorm::infer_raw;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LayerError {
    #[error("shape mismatch: left is {left:?}, right is {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("input has {actual} channels but the layer expects {expected}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("kernel size {0} is even; same-padding requires an odd kernel")]
    EvenKernel(usize),
    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    BadRank { expected: usize, shape: Vec<usize> },
    #[error(
        "batch normalization in train mode needs at least 2 values per channel, got {0}"
    )]
    DegenerateBatch(usize),
    #[error("batchnorm backward requires a train-mode cache; this cache came from infer mode")]
    InferModeCache,
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("tensors disagree on {what}: {left:?} vs {right:?}")]
    Incompatible {
        what: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
}
