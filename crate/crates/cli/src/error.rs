//! Error classification behind the exit-code contract.

use colornorm::baselines::BaselineError;
use colornorm::layers::LayerError;
use colornorm::model::ModelError;
use colornorm::pipeline::{PipelineError, PpmError};
use colornorm::train::TrainError;
use colornorm::weights::WeightFileError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, malformed or contradictory configuration. Exit 2.
    #[error("{0}")]
    Usage(String),
    /// Missing, unreadable, or corrupt data. Exit 3.
    #[error("{0}")]
    Data(String),
    /// Numeric failure: diverging training, degenerate decompositions,
    /// gradient-check failures. Exit 4.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<PpmError> for CliError {
    fn from(e: PpmError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<WeightFileError> for CliError {
    fn from(e: WeightFileError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Layer(LayerError::NonFiniteGradient(_)) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::InsufficientTissue { .. } => CliError::Data(e.to_string()),
            BaselineError::DegenerateStain(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::Layer(LayerError::NonFiniteGradient(_)) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::UnknownMethod { .. } => CliError::Usage(e.to_string()),
            PipelineError::MissingTarget { .. } => CliError::Usage(e.to_string()),
            PipelineError::Model(m) => m.into(),
            PipelineError::Baseline(b) => b.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}
