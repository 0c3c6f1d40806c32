//! Variance-exploding diffusion: schedule, noise-prediction priors over
//! pooled renders and voxel grids, score-matching training, ancestral
//! sampling and the score-distillation gradient.

mod denoiser;
mod sample;
mod schedule;
mod train;

pub use denoiser::{
    decode_grid, encode_grid, grid_scale, grid_shift, Denoiser, PriorKind, EMBED_DIM,
};
pub use sample::{
    ancestral_step, ancestral_update, forward_noise, initial_state, sample, sds_gradient,
    AncestralStep, SdsGradient,
};
pub(crate) use sample::forward_noise_into;
pub use schedule::{DiffusionSchedule, SAMPLE_STEPS, SIGMA_MAX, SIGMA_MIN, TRAIN_STEPS};
pub use train::{
    draw_batch, dsm_loss, dsm_loss_value, train_prior, DsmBatch, LossCurve, Optimizer, TrainConfig,
    QUEUE_DEPTH,
};

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::render::RenderError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("step {t} outside 1..={steps}")]
    StepRange { t: usize, steps: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label {label} outside vocabulary of {n_labels}")]
    Label { label: usize, n_labels: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DiffusionError>;
