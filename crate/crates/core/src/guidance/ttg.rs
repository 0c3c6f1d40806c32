use super::{concept_label, GuidanceConfig, GuidanceError, Result, RunRecord, StepRecord};
use crate::critic::{hard_decision, CriticParams, CriticQuery, Decision};
use crate::diffusion::{
    ancestral_step, decode_grid, grid_scale, grid_shift, initial_state, Denoiser, DiffusionSchedule,
    PriorKind,
};
use crate::render::{self, Camera, DensityGrid, GridVars};
use crate::rng::{self, Rng};
use crate::tensor::{Tape, Tensor};

/// Decodes a grid latent into a density grid with mid-gray albedo.
pub fn grid_from_latent(z: &Tensor) -> Result<DensityGrid> {
    let r = z.shape().first().copied().unwrap_or(0);
    let raw = z.map(decode_grid);
    Ok(DensityGrid::new(raw, Tensor::zeros(&[r, r, r, 3])?)?)
}

/// Reward of the grid decoded from `x0_hat` and its gradient with respect
/// to the latent.
pub fn guidance_gradient(
    x0_hat: &Tensor,
    query: &CriticQuery,
    critic: &CriticParams,
    cams: &[Camera],
) -> Result<(f64, Decision, Vec<f64>)> {
    let r = x0_hat.shape().first().copied().unwrap_or(0);
    let tape = Tape::new();
    let z = tape.leaf(x0_hat.clone());
    let raw = z.scale(grid_scale())?.offset(grid_shift())?;
    let albedo = tape.constant(Tensor::zeros(&[r, r, r, 3])?);
    let vars = GridVars::from_raw(r, raw, albedo)?;
    let views = render::render_views(&vars, cams)?;
    let out = critic.eval(query, &views)?;
    let grads = tape.backward(out.reward)?;
    Ok((out.reward.item(), hard_decision(&out.verdict()), grads.data(z)))
}

/// Reverse chain of the grid prior with the reward gradient added after
/// every ancestral step.
#[derive(Debug, Clone)]
pub struct GuidedSampler<'a> {
    prior: &'a Denoiser,
    query: Option<&'a CriticQuery>,
    sched: &'a DiffusionSchedule,
    lambda: f64,
    critic: CriticParams,
    label: Option<usize>,
    cams: Vec<Camera>,
    z: Tensor,
    t: usize,
    rng: Rng,
    misses: usize,
    last_guidance: Option<Vec<f64>>,
    record: RunRecord,
}

impl<'a> GuidedSampler<'a> {
    /// Draws the initial state from `rng::stream(seed, "sample")`, the same
    /// stream an unguided chain of that seed uses.
    pub fn new(
        prior: &'a Denoiser,
        query: Option<&'a CriticQuery>,
        cfg: &GuidanceConfig,
        cams: &[Camera],
        sched: &'a DiffusionSchedule,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if !matches!(prior.kind, PriorKind::Grid { .. }) {
            return Err(GuidanceError::Mismatch("guided sampling needs a grid prior".into()));
        }
        if cams.is_empty() {
            return Err(GuidanceError::Mismatch("no reward cameras".into()));
        }
        let mut rng = rng::stream(seed, "sample");
        let z = initial_state(prior, sched, &mut rng)?;
        Ok(Self {
            prior,
            query,
            sched,
            lambda: cfg.lambda_ttg,
            critic: cfg.critic,
            label: query.and_then(|q| concept_label(prior, &q.template_id)),
            cams: cams.to_vec(),
            z,
            t: sched.len(),
            rng,
            misses: 0,
            last_guidance: None,
            record: RunRecord::new(seed),
        })
    }

    /// Overrides the prior label, which otherwise follows the query's
    /// concept. Must be called before the first step.
    pub fn with_label(mut self, label: Option<usize>) -> Result<Self> {
        self.prior.check_label(label)?;
        self.label = label;
        Ok(self)
    }

    /// Current state `z_t`.
    pub fn state(&self) -> &Tensor {
        &self.z
    }

    /// Step the next call will take; 0 once finished.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Guidance gradient applied by the last step, if any.
    pub fn last_guidance(&self) -> Option<&[f64]> {
        self.last_guidance.as_deref()
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    /// One reverse step `z_t → z_{t-1}`.
    pub fn step(&mut self) -> Result<()> {
        let t = self.t;
        let out = ancestral_step(self.prior, &self.z, t, self.label, self.sched, &mut self.rng)?;
        let mut next = out.next;
        self.last_guidance = None;
        let mut rec = StepRecord {
            step: self.sched.len() - t,
            sds_norm: 0.0,
            reward: None,
            lambda: self.lambda,
            decision: None,
        };
        if let Some(q) = self.query {
            let (reward, decision, g) = guidance_gradient(&out.x0_hat, q, &self.critic, &self.cams)?;
            if reward.is_finite() && g.iter().all(|v| v.is_finite()) {
                self.misses = 0;
                rec.reward = Some(reward);
                rec.decision = Some(decision);
                rec.sds_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if self.lambda != 0.0 {
                    for (z, g) in next.data_mut().iter_mut().zip(&g) {
                        *z += self.lambda * g;
                    }
                    self.last_guidance = Some(g);
                }
            } else {
                self.misses += 1;
                self.record.skipped.push(rec.step);
                if self.misses >= 2 {
                    return Err(GuidanceError::NonFinite { step: rec.step });
                }
            }
        }
        self.record.steps.push(rec);
        self.z = next;
        self.t -= 1;
        Ok(())
    }

    /// Final latent `z_0` and its decoded grid.
    pub fn finish(self) -> Result<(Tensor, DensityGrid, RunRecord)> {
        let grid = grid_from_latent(&self.z)?;
        Ok((self.z, grid, self.record))
    }
}

/// Runs the full guided chain and returns the final latent, its grid and
/// the log. With `λ_TTG = 0` or no query the chain is plain ancestral
/// sampling of seed `seed`.
pub fn guided_sample(
    prior: &Denoiser,
    query: Option<&CriticQuery>,
    cfg: &GuidanceConfig,
    cams: &[Camera],
    sched: &DiffusionSchedule,
    seed: u64,
) -> Result<(Tensor, DensityGrid, RunRecord)> {
    let mut s = GuidedSampler::new(prior, query, cfg, cams, sched, seed)?;
    while s.t() > 0 {
        s.step()?;
    }
    s.finish()
}
