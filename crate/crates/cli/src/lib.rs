//! Configuration and orchestration behind the `cg3d` command.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_ablate, cmd_eval, cmd_gen_corpus, cmd_generate, cmd_train, Context};
pub use config::RunConfig;
pub use error::{CliError, Result};
