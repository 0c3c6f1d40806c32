//! CLI errors and their exit codes.

use cg3d_core::checkpoint::CheckpointError;
use cg3d_core::critic::CriticError;
use cg3d_core::dataset::DatasetError;
use cg3d_core::diffusion::DiffusionError;
use cg3d_core::evaluation::EvalError;
use cg3d_core::guidance::GuidanceError;
use cg3d_core::render::RenderError;
use cg3d_core::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric abort: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Tensor(t) => t.into(),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Io(_) | RenderError::Image(_) => CliError::Io(e.to_string()),
            RenderError::Tensor(t) => t.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Degenerate(_) | DatasetError::UnknownConcept(_) | DatasetError::Manifest(_) => {
                CliError::Config(e.to_string())
            }
            DatasetError::Render(r) => r.into(),
            DatasetError::Tensor(t) => t.into(),
            DatasetError::Checkpoint(c) => c.into(),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<CriticError> for CliError {
    fn from(e: CriticError) -> Self {
        match e {
            CriticError::Transport(_) | CriticError::Protocol(_) => CliError::Io(e.to_string()),
            CriticError::NonFinite => CliError::Numeric(e.to_string()),
            CriticError::Render(r) => r.into(),
            CriticError::Tensor(t) => t.into(),
            CriticError::Dataset(d) => d.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        match e {
            DiffusionError::Diverged { .. } => CliError::Numeric(e.to_string()),
            DiffusionError::Tensor(t) => t.into(),
            DiffusionError::Render(r) => r.into(),
            DiffusionError::Checkpoint(c) => c.into(),
            DiffusionError::Io(_) => CliError::Io(e.to_string()),
            DiffusionError::EmptyDataset => CliError::Other(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<GuidanceError> for CliError {
    fn from(e: GuidanceError) -> Self {
        match e {
            GuidanceError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            GuidanceError::Diffusion(d) => d.into(),
            GuidanceError::Critic(c) => c.into(),
            GuidanceError::Render(r) => r.into(),
            GuidanceError::Tensor(t) => t.into(),
            GuidanceError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NoConvergence(_) => CliError::Numeric(e.to_string()),
            EvalError::Critic(c) => c.into(),
            EvalError::Render(r) => r.into(),
            EvalError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
