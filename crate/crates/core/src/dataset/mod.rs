//! Procedural labelled shape corpora and their multi-view renders.

mod corpus;
mod shapes;

pub use corpus::{
    build_corpus, generate_samples, grid_checkpoint, grid_from_checkpoint, load_batch, Corpus, CorpusManifest, IndexEntry, Sample,
    Target, INDEX_MAGIC,
};
pub use shapes::{
    concept, generate_shape, softplus_inv, ConceptSpec, Generator, ALL_CONCEPTS,
    DEFAULT_CONCEPTS, SIGMA_FLOOR, SIGMA_HI,
};

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::render::RenderError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("degenerate shape: {0}")]
    Degenerate(String),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid corpus index: {0}")]
    Index(String),
    #[error("index {index} out of range for {len} entries")]
    OutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;
