use rand::Rng as _;

use super::{ComparisonLedger, Outcome, Result};
use crate::critic::{build_query, remote_critic_eval, CriticParams, CriticQuery};
use crate::par;
use crate::render::{render_views, Camera, DensityGrid, ViewSet};
use crate::rng::{self, Rng};
use crate::tensor::Tape;

/// Anything that scores a view set against a query.
pub trait Judge: Sync {
    fn reward(&self, query: &CriticQuery, views: &ViewSet<'_>) -> Result<f64>;
}

/// The in-process toy critic.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyJudge {
    pub params: CriticParams,
}

impl Judge for ToyJudge {
    fn reward(&self, query: &CriticQuery, views: &ViewSet<'_>) -> Result<f64> {
        Ok(self.params.eval(query, views)?.reward.item())
    }
}

/// A critic behind a TCP endpoint.
#[derive(Debug, Clone)]
pub struct RemoteJudge {
    pub endpoint: String,
}

impl Judge for RemoteJudge {
    fn reward(&self, query: &CriticQuery, views: &ViewSet<'_>) -> Result<f64> {
        Ok(remote_critic_eval(&self.endpoint, query, &views.images())?.reward)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JudgeConfig {
    /// Reward gap below which the pair is undecided.
    pub delta: f64,
    /// Undecided pairs become ties; otherwise a seeded coin picks a side.
    pub allow_ties: bool,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            allow_ties: true,
        }
    }
}

/// Which question the judge answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Content criterion only.
    Alignment,
    /// Content and geometry criteria.
    Overall,
}

impl Criterion {
    pub const ALL: [Criterion; 2] = [Criterion::Alignment, Criterion::Overall];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Alignment => "alignment",
            Criterion::Overall => "overall",
        }
    }

    pub fn query(self, prompt: &str) -> Result<CriticQuery> {
        Ok(build_query(prompt, prompt, self == Criterion::Overall)?)
    }
}

/// Outcome of one comparison of `a` against `b`.
pub fn judge_pair(
    judge: &dyn Judge,
    a: &ViewSet<'_>,
    b: &ViewSet<'_>,
    query: &CriticQuery,
    cfg: &JudgeConfig,
    rng: &mut Rng,
) -> Result<Outcome> {
    let (ra, rb) = (judge.reward(query, a)?, judge.reward(query, b)?);
    Ok(if ra > rb + cfg.delta {
        Outcome::A
    } else if rb > ra + cfg.delta {
        Outcome::B
    } else if cfg.allow_ties {
        Outcome::Tie
    } else if rng.random_bool(0.5) {
        Outcome::A
    } else {
        Outcome::B
    })
}

/// One method's asset for one prompt.
#[derive(Debug, Clone)]
pub struct Entry {
    pub method: String,
    pub prompt: String,
    pub grid: DensityGrid,
}

/// Judges every pair of entries that share a prompt and differ in method.
/// Pairs run in parallel; pair `k` draws tie-breaks from its own stream.
/// Failed judgements land in `skipped` with their reason.
pub fn judge_all(
    judge: &dyn Judge,
    entries: &[Entry],
    criterion: Criterion,
    cams: &[Camera],
    cfg: &JudgeConfig,
    seed: u64,
) -> Result<ComparisonLedger> {
    let mut ledger = ComparisonLedger::default();
    for e in entries {
        if ledger.index_of(&e.method).is_err() {
            ledger.register(&e.method)?;
        }
    }
    let mut pairs = Vec::new();
    for (i, a) in entries.iter().enumerate() {
        for b in &entries[i + 1..] {
            if a.prompt == b.prompt && a.method != b.method {
                pairs.push((a, b));
            }
        }
    }
    let outcomes = par::map_range(pairs.len(), |k| -> Result<Outcome> {
        let (a, b) = pairs[k];
        let query = criterion.query(&a.prompt)?;
        let tape = Tape::new();
        let va = render_views(&a.grid.record(&tape)?, cams)?;
        let vb = render_views(&b.grid.record(&tape)?, cams)?;
        let mut rng = rng::indexed_stream(seed, "judge", k as u64);
        judge_pair(judge, &va, &vb, &query, cfg, &mut rng)
    });
    for ((a, b), outcome) in pairs.into_iter().zip(outcomes) {
        match outcome {
            Ok(o) => ledger.push(&a.method, &b.method, &a.prompt, o)?,
            Err(e) => ledger
                .skipped
                .push((a.method.clone(), b.method.clone(), a.prompt.clone(), e.to_string())),
        }
    }
    Ok(ledger)
}
