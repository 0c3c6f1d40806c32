//! Critic guidance for the two generators: reward-augmented score
//! distillation with an annealed weight, and reward-guided ancestral
//! sampling of the native 3D prior.

mod ablation;
mod config;
mod record;
mod sds;
mod ttg;

pub use ablation::{ablation_run, score_asset, AblationGenerator, AblationMode, AblationReport, AblationRow};
pub use config::{anneal_lambda, AnnealShape, GuidanceConfig, SdsConfig};
pub use record::{RunRecord, StepRecord};
pub use sds::{random_init, reward_gradient, sds_optimize, RewardGradient, SdsRun, StepGradients};
pub use ttg::{grid_from_latent, guidance_gradient, guided_sample, GuidedSampler};

use thiserror::Error;

use crate::critic::CriticError;
use crate::dataset::DEFAULT_CONCEPTS;
use crate::diffusion::{Denoiser, DiffusionError};
use crate::render::RenderError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("invalid guidance config: {0}")]
    Config(String),
    #[error("step {step} outside 0..{total}")]
    StepRange { step: usize, total: usize },
    #[error("non-finite gradient at step {step}")]
    NonFinite { step: usize },
    #[error("incompatible inputs: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GuidanceError>;

/// Prior label of a concept, or `None` when the prior does not know it.
pub fn concept_label(prior: &Denoiser, concept: &str) -> Option<usize> {
    DEFAULT_CONCEPTS
        .iter()
        .position(|&c| c == concept)
        .filter(|&l| l < prior.n_labels)
}
