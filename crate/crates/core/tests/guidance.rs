use cg3d_core::critic::build_query;
use cg3d_core::dataset::{concept, generate_shape};
use cg3d_core::diffusion::{Denoiser, DiffusionSchedule};
use cg3d_core::guidance::{
    ablation_run, guided_sample, random_init, AblationGenerator, AblationMode, GuidanceConfig,
    GuidedSampler, SdsConfig, SdsRun,
};
use cg3d_core::render::{ring_with_samples, DensityGrid};
use cg3d_core::rng;

fn sds_cfg(steps: usize, lambda: f64) -> SdsConfig {
    let mut cfg = SdsConfig {
        reward_every: 1,
        ..Default::default()
    };
    cfg.guidance.total_steps = steps;
    cfg.guidance.lambda_vlm_init = lambda;
    cfg.guidance.lambda_vlm_final = lambda.min(cfg.guidance.lambda_vlm_final);
    cfg
}

#[test]
fn zero_reward_weight_keeps_the_pure_trajectory() {
    let prior = Denoiser::image_prior(3, 0).unwrap();
    let sched = DiffusionSchedule::training();
    let q = build_query("sphere", "sphere", true).unwrap();
    let cfg = sds_cfg(12, 0.0);
    let init = random_init(16, &mut rng::stream(3, "init")).unwrap();
    let mut pure = SdsRun::new(init.clone(), &prior, None, &cfg, &sched, 3)
        .unwrap()
        .with_label(Some(0))
        .unwrap();
    let mut zero = SdsRun::new(init, &prior, Some(&q), &cfg, &sched, 3).unwrap();
    while !pure.is_done() {
        pure.step().unwrap();
        zero.step().unwrap();
        assert_eq!(pure.grid(), zero.grid());
    }
    assert!(zero.record().steps.iter().all(|s| s.reward.is_some()));
}

#[test]
fn reward_term_adds_linearly() {
    let prior = Denoiser::image_prior(3, 0).unwrap();
    let sched = DiffusionSchedule::training();
    let q = build_query("sphere", "sphere", true).unwrap();
    let init = random_init(16, &mut rng::stream(4, "init")).unwrap();
    let mut run = SdsRun::new(init, &prior, Some(&q), &sds_cfg(5, 10.0), &sched, 4).unwrap();
    let g = run.gradients().unwrap();
    let r = g.reward.as_ref().unwrap();
    let (d, a) = g.combined();
    for ((c, s), r) in d.iter().zip(&g.sds_density).zip(&r.density) {
        assert_eq!(*c, s - g.lambda * r);
    }
    for ((c, s), r) in a.iter().zip(&g.sds_albedo).zip(&r.albedo) {
        assert_eq!(*c, s - g.lambda * r);
    }
}

#[test]
fn reward_alone_raises_the_reward() {
    let prior = Denoiser::image_prior(3, 0).unwrap();
    let sched = DiffusionSchedule::training().with_sds_weight(|_, _| 0.0).unwrap();
    let q = build_query("sphere", "sphere", true).unwrap();
    let init = random_init(32, &mut rng::stream(0, "init")).unwrap();
    let mut run = SdsRun::new(init, &prior, Some(&q), &sds_cfg(100, 1.0), &sched, 0).unwrap();
    while !run.is_done() {
        run.step().unwrap();
    }
    let rewards: Vec<f64> = run.record().steps.iter().map(|s| s.reward.unwrap()).collect();
    for w in rewards.windows(2) {
        assert!(w[1] > w[0], "{} -> {}", w[0], w[1]);
    }
}

fn grid_setup() -> (Denoiser, DiffusionSchedule, Vec<cg3d_core::render::Camera>) {
    (
        Denoiser::grid_prior(3, 0).unwrap(),
        DiffusionSchedule::sampling(),
        ring_with_samples(4, 15f64.to_radians(), 16, 16, 32).unwrap(),
    )
}

#[test]
fn zero_guidance_matches_unguided_sampling() {
    let (prior, sched, cams) = grid_setup();
    let q = build_query("sphere", "sphere", true).unwrap();
    let cfg = GuidanceConfig {
        lambda_ttg: 0.0,
        ..Default::default()
    };
    for seed in [0, 5] {
        let (z0, grid0, _) = guided_sample(&prior, Some(&q), &cfg, &cams, &sched, seed).unwrap();
        let mut plain = GuidedSampler::new(&prior, None, &cfg, &cams, &sched, seed)
            .unwrap()
            .with_label(Some(0))
            .unwrap();
        while plain.t() > 0 {
            plain.step().unwrap();
        }
        let (z1, grid1, _) = plain.finish().unwrap();
        assert_eq!(z0, z1);
        assert_eq!(grid0, grid1);
    }
}

#[test]
fn guidance_shifts_each_step_by_its_gradient() {
    let (prior, sched, cams) = grid_setup();
    let q = build_query("sphere", "sphere", true).unwrap();
    let cfg = |l: f64| GuidanceConfig {
        lambda_ttg: l,
        ..Default::default()
    };
    let mut guided = GuidedSampler::new(&prior, Some(&q), &cfg(0.5), &cams, &sched, 2).unwrap();
    let mut plain = GuidedSampler::new(&prior, Some(&q), &cfg(0.0), &cams, &sched, 2).unwrap();
    guided.step().unwrap();
    plain.step().unwrap();
    let g = guided.last_guidance().unwrap();
    assert!(plain.last_guidance().is_none());
    for ((a, b), g) in guided.state().data().iter().zip(plain.state().data()).zip(g) {
        assert!((a - (b + 0.5 * g)).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn sampling_leaves_the_prior_untouched() {
    let (prior, sched, cams) = grid_setup();
    let before = prior.to_checkpoint().checksum().unwrap();
    let q = build_query("sphere", "sphere", true).unwrap();
    guided_sample(&prior, Some(&q), &GuidanceConfig::default(), &cams, &sched, 1).unwrap();
    assert_eq!(prior.to_checkpoint().checksum().unwrap(), before);
}

#[test]
fn geometry_query_reconnects_a_split_start() {
    let prior = Denoiser::image_prior(3, 0).unwrap();
    let sched = DiffusionSchedule::training().with_sds_weight(|_, _| 0.0).unwrap();
    let init: DensityGrid = generate_shape(
        &concept("sphere").unwrap().without_jitter().split(0.3),
        32,
        &mut rng::stream(0, "init"),
    )
    .unwrap();
    let report = ablation_run(
        &[AblationMode::Full, AblationMode::NoGeometryQuery],
        &[0, 1],
        "sphere",
        AblationGenerator::Sds { prior: &prior, init: &init },
        &sds_cfg(60, 10.0),
        &sched,
    )
    .unwrap();
    let full = report.mean(AblationMode::Full, |r| r.geometry);
    let content_only = report.mean(AblationMode::NoGeometryQuery, |r| r.geometry);
    assert!(full > content_only, "{full} vs {content_only}");
}
