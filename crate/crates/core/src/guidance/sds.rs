use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{anneal_lambda, concept_label, GuidanceError, Result, RunRecord, SdsConfig, StepRecord};
use crate::critic::{hard_decision, CriticParams, CriticQuery, Decision};
use crate::diffusion::{sds_gradient, Denoiser, DiffusionError, DiffusionSchedule, PriorKind};
use crate::optim::Sgd;
use crate::render::{self, Camera, DensityGrid};
use crate::rng::{self, Rng};
use crate::tensor::{Tape, Tensor};

/// Grid with raw density around `softplus⁻¹(0.05)` and raw albedo around 0,
/// both perturbed by Gaussian noise of scale 0.5.
pub fn random_init(resolution: usize, rng: &mut Rng) -> Result<DensityGrid> {
    let r = resolution;
    let n = Normal::new(0.0, 0.5).expect("positive std");
    let base = crate::dataset::softplus_inv(0.05);
    let d: Vec<f64> = (0..r * r * r).map(|_| base + n.sample(rng)).collect();
    let a: Vec<f64> = (0..3 * r * r * r).map(|_| n.sample(rng)).collect();
    Ok(DensityGrid::new(
        Tensor::new(&[r, r, r], d)?,
        Tensor::new(&[r, r, r, 3], a)?,
    )?)
}

/// Gradients of one step, before the optimizer sees them.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGradients {
    pub step: usize,
    /// `λ_VLM` at this step.
    pub lambda: f64,
    pub sds_density: Vec<f64>,
    pub sds_albedo: Vec<f64>,
    pub residual_norm: f64,
    /// Reward value and its gradient, when the critic ran.
    pub reward: Option<RewardGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardGradient {
    pub value: f64,
    pub decision: Decision,
    pub density: Vec<f64>,
    pub albedo: Vec<f64>,
}

impl StepGradients {
    /// Gradient of `L_SDS − λ r`. The reward term is skipped entirely when
    /// `λ = 0`.
    pub fn combined(&self) -> (Vec<f64>, Vec<f64>) {
        let mut d = self.sds_density.clone();
        let mut a = self.sds_albedo.clone();
        if let Some(r) = self.reward.as_ref().filter(|_| self.lambda != 0.0) {
            for (g, v) in d.iter_mut().zip(&r.density) {
                *g -= self.lambda * v;
            }
            for (g, v) in a.iter_mut().zip(&r.albedo) {
                *g -= self.lambda * v;
            }
        }
        (d, a)
    }
}

/// Reward and its gradient with respect to the raw fields of `grid`.
pub fn reward_gradient(
    grid: &DensityGrid,
    query: &CriticQuery,
    critic: &CriticParams,
    cams: &[Camera],
) -> Result<RewardGradient> {
    let tape = Tape::new();
    let vars = grid.record(&tape)?;
    let views = render::render_views(&vars, cams)?;
    let out = critic.eval(query, &views)?;
    let grads = tape.backward(out.reward)?;
    Ok(RewardGradient {
        value: out.reward.item(),
        decision: hard_decision(&out.verdict()),
        density: grads.data(vars.raw_density),
        albedo: grads.data(vars.raw_albedo),
    })
}

/// A distillation run advanced one step at a time.
#[derive(Debug, Clone)]
pub struct SdsRun<'a> {
    prior: &'a Denoiser,
    query: Option<&'a CriticQuery>,
    sched: &'a DiffusionSchedule,
    cfg: SdsConfig,
    label: Option<usize>,
    sds_cams: Vec<Camera>,
    critic_cams: Vec<Camera>,
    grid: DensityGrid,
    opt: Sgd,
    rng: Rng,
    step: usize,
    record: RunRecord,
}

impl<'a> SdsRun<'a> {
    /// Starts from `grid`. The prior's label is looked up from the query's
    /// concept; without a query the prior runs unconditionally.
    pub fn new(
        grid: DensityGrid,
        prior: &'a Denoiser,
        query: Option<&'a CriticQuery>,
        cfg: &SdsConfig,
        sched: &'a DiffusionSchedule,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let PriorKind::Image { image_size, .. } = prior.kind else {
            return Err(GuidanceError::Mismatch("distillation needs an image prior".into()));
        };
        let g = &cfg.guidance;
        let elev = cfg.elevation_deg.to_radians();
        let sds_cams = render::ring_with_samples(g.views_per_reward, elev, image_size, image_size, cfg.samples)?;
        let critic_cams =
            render::ring_with_samples(g.views_per_reward, elev, cfg.critic_size, cfg.critic_size, cfg.samples)?;
        Ok(Self {
            prior,
            query,
            sched,
            cfg: *cfg,
            label: query.and_then(|q| concept_label(prior, &q.template_id)),
            sds_cams,
            critic_cams,
            grid,
            opt: Sgd::new(cfg.lr, cfg.momentum),
            rng: rng::stream(seed, "sds"),
            step: 0,
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

    pub fn grid(&self) -> &DensityGrid {
        &self.grid
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn critic_cameras(&self) -> &[Camera] {
        &self.critic_cams
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.guidance.total_steps
    }

    /// Timestep range for `step`: the upper half of the schedule for the
    /// first third of the run, `[T/50, T/2]` afterwards.
    fn t_range(&self, step: usize) -> (usize, usize) {
        let t = self.sched.len();
        let half = (t / 2).max(1);
        if 3 * step < self.cfg.guidance.total_steps {
            (half, t)
        } else {
            ((t / 50).max(1), half)
        }
    }

    /// Draws this step's camera, timestep and noise and returns the
    /// gradients without applying them.
    pub fn gradients(&mut self) -> Result<StepGradients> {
        let step = self.step;
        let lambda = anneal_lambda(&self.cfg.guidance, step)?;
        let cam = self.sds_cams[self.rng.random_range(0..self.sds_cams.len())];
        let (lo, hi) = self.t_range(step);
        let t = self.rng.random_range(lo..=hi);
        let eps = Tensor::new(
            &self.prior.sample_shape(),
            rng::normal_vec(&mut self.rng, self.prior.sample_dim()),
        )
        .map_err(DiffusionError::from)?;
        let tape = Tape::new();
        let vars = self.grid.record(&tape)?;
        let sds = sds_gradient(self.prior, &vars, &cam, self.label, t, &eps, self.sched)?;
        let reward = match self.query {
            Some(q) if step.is_multiple_of(self.cfg.reward_every) => {
                Some(reward_gradient(&self.grid, q, &self.cfg.guidance.critic, &self.critic_cams)?)
            }
            _ => None,
        };
        Ok(StepGradients {
            step,
            lambda,
            sds_density: sds.raw_density,
            sds_albedo: sds.raw_albedo,
            residual_norm: sds.residual_norm,
            reward,
        })
    }

    /// Applies `g` with the run's optimizer and logs the step.
    pub fn apply(&mut self, g: &StepGradients) -> Result<()> {
        let (gd, ga) = g.combined();
        if gd.iter().chain(&ga).any(|v| !v.is_finite()) {
            return Err(GuidanceError::NonFinite { step: g.step });
        }
        let (d, a) = self.grid.raw_fields_mut();
        self.opt.step(&mut [d, a], &[&gd, &ga]);
        if !self.grid.raw_density().all_finite() || !self.grid.raw_albedo().all_finite() {
            return Err(GuidanceError::NonFinite { step: g.step });
        }
        self.record.steps.push(StepRecord {
            step: g.step,
            sds_norm: g.residual_norm,
            reward: g.reward.as_ref().map(|r| r.value),
            lambda: g.lambda,
            decision: g.reward.as_ref().map(|r| r.decision),
        });
        self.step += 1;
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        let g = self.gradients()?;
        self.apply(&g)
    }

    pub fn finish(self) -> (DensityGrid, RunRecord) {
        (self.grid, self.record)
    }
}

/// Runs `cfg.guidance.total_steps` steps of reward-augmented distillation
/// from `grid`. Without a query this is plain distillation.
pub fn sds_optimize(
    grid: DensityGrid,
    prior: &Denoiser,
    query: Option<&CriticQuery>,
    cfg: &SdsConfig,
    sched: &DiffusionSchedule,
    seed: u64,
) -> Result<(DensityGrid, RunRecord)> {
    let mut run = SdsRun::new(grid, prior, query, cfg, sched, seed)?;
    while !run.is_done() {
        run.step()?;
    }
    Ok(run.finish())
}
