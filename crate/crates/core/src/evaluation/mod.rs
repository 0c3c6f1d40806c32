//! Pairwise judging, anchored Elo fitting and the toy metric suite.

mod elo;
mod judge;
mod ledger;
mod metrics;
mod report;

pub use elo::{elo_fit, expected_score, EloTable, ANCHOR_RATING};
pub use judge::{judge_all, judge_pair, Criterion, Entry, Judge, JudgeConfig, RemoteJudge, ToyJudge};
pub use ledger::{Comparison, ComparisonLedger, Outcome, LEDGER_HEADER};
pub use metrics::{metric_suite, Metrics, METRICS_HEADER};
pub use report::{report_emit, summary_text, EvalReport};

use thiserror::Error;

use crate::critic::CriticError;
use crate::render::RenderError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("method `{0}` compared against itself")]
    SelfComparison(String),
    #[error("duplicate method `{0}`")]
    DuplicateMethod(String),
    #[error("methods {component:?} are not connected to anchor `{anchor}`")]
    Disconnected { anchor: String, component: Vec<String> },
    #[error("fit did not converge (gradient norm {0})")]
    NoConvergence(f64),
    #[error("ledger line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
