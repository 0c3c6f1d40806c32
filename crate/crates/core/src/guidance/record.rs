use std::fmt::Write as _;

use crate::critic::Decision;

/// Scalars logged for one executed step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Norm of the prior's contribution (distillation residual, or the
    /// guidance gradient when sampling).
    pub sds_norm: f64,
    /// Reward, when the critic was evaluated at this step.
    pub reward: Option<f64>,
    /// Reward weight in force at this step.
    pub lambda: f64,
    pub decision: Option<Decision>,
}

/// Log of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Where the final asset was written, if it was.
    pub asset: Option<String>,
    /// Steps whose guidance was skipped for a non-finite gradient.
    pub skipped: Vec<usize>,
}

impl RunRecord {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }

    /// Last evaluated reward.
    pub fn final_reward(&self) -> Option<f64> {
        self.steps.iter().rev().find_map(|s| s.reward)
    }

    /// `step,sds_norm,reward,lambda,decision` rows; unevaluated cells are
    /// empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,sds_norm,reward,lambda,decision\n");
        for r in &self.steps {
            let reward = r.reward.map(|v| v.to_string()).unwrap_or_default();
            let decision = r.decision.map(|d| d.as_str()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{reward},{},{decision}", r.step, r.sds_norm, r.lambda);
        }
        s
    }
}
