//! The five subcommands. Each is a pure function of its configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cg3d_core::checkpoint::Checkpoint;
use cg3d_core::critic::{build_query, CriticQuery};
use cg3d_core::dataset::{build_corpus, grid_checkpoint, grid_from_checkpoint, load_batch, Corpus, Target};
use cg3d_core::diffusion::{train_prior, Denoiser, PriorKind};
use cg3d_core::evaluation::{
    elo_fit, judge_all, metric_suite, report_emit, Criterion, Entry, EvalReport, Judge, JudgeConfig, RemoteJudge,
    ToyJudge,
};
use cg3d_core::guidance::{
    ablation_run, concept_label, random_init, sds_optimize, AblationGenerator, AblationMode, GuidedSampler, RunRecord,
};
use cg3d_core::render::{self, DensityGrid};
use cg3d_core::rng;

use crate::config::{AblateGenerator, GenerateMode, RunConfig, TrainTarget};
use crate::error::{CliError, Result};

/// A configuration bound to its output root.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub root: PathBuf,
}

impl Context {
    /// `out_override` (normally `CG3D_OUT`) replaces `out_dir` as the root.
    pub fn new(cfg: RunConfig, out_override: Option<&str>) -> Self {
        let root = PathBuf::from(out_override.unwrap_or(&cfg.out_dir));
        Self { cfg, root }
    }

    /// `p` under the root unless absolute.
    pub fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Creates the root (not its parents) and `name` beneath it.
    fn out_dir(&self, name: &str) -> Result<PathBuf> {
        if !self.root.is_dir() {
            fs::create_dir(&self.root)?;
        }
        let d = self.root.join(name);
        fs::create_dir_all(&d)?;
        Ok(d)
    }

    fn query(&self, prompt: &str) -> Result<CriticQuery> {
        let c = &self.cfg.critic;
        Ok(build_query(prompt, c.template_for(prompt), c.include_geometry)?)
    }

    fn load_prior(&self, path: Option<&str>, default: &str) -> Result<Denoiser> {
        let p = self.path(path.unwrap_or(default));
        Ok(Denoiser::from_checkpoint(&Checkpoint::load(&p)?)?)
    }
}

pub fn cmd_gen_corpus(ctx: &Context) -> Result<PathBuf> {
    let dir = ctx.path(&ctx.cfg.corpus.dir);
    if !ctx.root.is_dir() && dir.starts_with(&ctx.root) {
        fs::create_dir(&ctx.root)?;
    }
    build_corpus(&ctx.cfg.corpus.manifest(ctx.cfg.seed), &dir)?;
    Ok(dir)
}

/// Trains the configured target on the corpus and writes
/// `<target>.ckpt` and `<target>_loss.csv`.
pub fn cmd_train(ctx: &Context) -> Result<PathBuf> {
    let cfg = &ctx.cfg;
    let corpus = Corpus::open(&ctx.path(&cfg.corpus.dir))?;
    let m = &corpus.manifest;
    let n_labels = corpus.entries.iter().map(|e| e.label + 1).max().unwrap_or(1);
    let (kind, target) = match cfg.train.target {
        TrainTarget::Prior2d => (
            PriorKind::Image {
                image_size: m.image_size,
                pooled: cfg.train.pooled,
            },
            Target::Views2d,
        ),
        TrainTarget::Prior3d => (PriorKind::Grid { resolution: m.resolution }, Target::Grids3d),
    };
    let mut model = Denoiser::new(kind, n_labels, cfg.train.width(), cfg.seed)?;
    let indices: Vec<usize> = (0..corpus.len(target)).collect();
    let data = load_batch(&corpus, &indices, target)?
        .into_iter()
        .map(|(x, y)| Ok((model.prepare(&x)?, y)))
        .collect::<Result<Vec<_>>>()?;
    let curve = train_prior(&mut model, &data, &cfg.schedule.training()?, &cfg.train.train_config(cfg.seed))?;
    let dir = ctx.out_dir("")?;
    let name = cfg.train.target.as_str();
    let ckpt = dir.join(format!("{name}.ckpt"));
    model.to_checkpoint().save(&ckpt)?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in curve.losses.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l}");
    }
    fs::write(dir.join(format!("{name}_loss.csv")), csv)?;
    Ok(ckpt)
}

/// Generates one asset and writes `asset.obj`, `asset.ckpt`,
/// `record.csv` and `sheet.ppm` under `generate_<mode>/`.
pub fn cmd_generate(ctx: &Context) -> Result<PathBuf> {
    let cfg = &ctx.cfg;
    let g = &cfg.generate;
    let query = ctx.query(&g.prompt)?;
    let (grid, record) = match g.mode {
        GenerateMode::Sds => {
            let prior = ctx.load_prior(g.prior.as_deref(), "prior2d.ckpt")?;
            let init = random_init(cfg.sds.resolution, &mut rng::stream(cfg.seed, "init"))?;
            let sched = cfg.schedule.training()?;
            sds_optimize(init, &prior, Some(&query), &cfg.sds_config(), &sched, cfg.seed)?
        }
        GenerateMode::Guided | GenerateMode::Unguided => {
            let prior = ctx.load_prior(g.prior.as_deref(), "prior3d.ckpt")?;
            let sched = cfg.schedule.sampling()?;
            let c = &cfg.critic;
            let cams = render::ring_with_samples(
                cfg.guidance.views_per_reward,
                c.elevation_deg.to_radians(),
                c.image_size,
                c.image_size,
                c.samples,
            )?;
            let q = (g.mode == GenerateMode::Guided).then_some(&query);
            let guidance = cfg.guidance();
            let mut s = GuidedSampler::new(&prior, q, &guidance, &cams, &sched, cfg.seed)?
                .with_label(concept_label(&prior, &query.template_id))?;
            while s.t() > 0 {
                s.step()?;
            }
            let (_, grid, record) = s.finish()?;
            (grid, record)
        }
    };
    let dir = ctx.out_dir(&format!("generate_{}", g.mode.as_str()))?;
    write_asset(&dir, &grid, record, cfg)?;
    Ok(dir)
}

fn write_asset(dir: &Path, grid: &DensityGrid, mut record: RunRecord, cfg: &RunConfig) -> Result<()> {
    let g = &cfg.generate;
    render::export_obj(grid, g.obj_threshold, &dir.join("asset.obj"))?;
    grid_checkpoint(grid).save(&dir.join("asset.ckpt"))?;
    record.asset = Some("asset.obj".into());
    fs::write(dir.join("record.csv"), record.to_csv())?;
    let cams = render::make_view_ring(
        g.sheet_views,
        cfg.critic.elevation_deg.to_radians(),
        g.sheet_size,
        g.sheet_size,
    )?;
    let images: Vec<_> = cams.iter().map(|c| render::render_image(grid, c)).collect();
    render::write_contact_sheet(&images, &dir.join("sheet.ppm"))?;
    Ok(())
}

/// Judges every pair of inputs per prompt, fits anchored ratings per
/// criterion and writes the report under `eval/`.
pub fn cmd_eval(ctx: &Context) -> Result<PathBuf> {
    let cfg = &ctx.cfg;
    let e = &cfg.eval;
    let entries = e
        .inputs
        .iter()
        .map(|i| {
            Ok(Entry {
                method: i.method.clone(),
                prompt: i.prompt.clone(),
                grid: grid_from_checkpoint(&Checkpoint::load(&ctx.path(&i.path))?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cams = render::ring_with_samples(
        e.views,
        cfg.critic.elevation_deg.to_radians(),
        e.image_size,
        e.image_size,
        cfg.critic.samples,
    )?;
    let toy = ToyJudge {
        params: cfg.critic.params(),
    };
    let remote = cfg.critic.endpoint.as_ref().map(|endpoint| RemoteJudge {
        endpoint: endpoint.clone(),
    });
    let judge: &dyn Judge = match &remote {
        Some(r) => r,
        None => &toy,
    };
    let jcfg = JudgeConfig {
        delta: e.delta,
        allow_ties: e.ties,
    };
    let mut report = EvalReport::default();
    for criterion in Criterion::ALL {
        let ledger = judge_all(judge, &entries, criterion, &cams, &jcfg, cfg.seed)?;
        let anchor = e.anchor.clone().or_else(|| entries.first().map(|x| x.method.clone()));
        if let Some(anchor) = anchor {
            report.elo.push((criterion, elo_fit(&ledger, &anchor)?));
        }
        report.ledgers.push((criterion, ledger));
    }
    for entry in &entries {
        let q = build_query(&entry.prompt, cfg.critic.template_for(&entry.prompt), true)?;
        let m = metric_suite(&entry.grid, &q, &cams)?;
        report.metrics.push((entry.method.clone(), entry.prompt.clone(), m));
    }
    let dir = ctx.out_dir("eval")?;
    report_emit(&report, &dir)?;
    Ok(dir)
}

/// Runs the configured ablation modes over the seed set and writes
/// `ablate/ablation.csv` plus one contact sheet per mode.
pub fn cmd_ablate(ctx: &Context) -> Result<PathBuf> {
    let cfg = &ctx.cfg;
    let a = &cfg.ablate;
    let modes = a
        .modes
        .iter()
        .map(|m| AblationMode::parse(m))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if modes.is_empty() || a.seeds.is_empty() {
        return Err(CliError::Config("ablate needs at least one mode and one seed".into()));
    }
    let report = match a.generator {
        AblateGenerator::Sds => {
            let prior = ctx.load_prior(a.prior.as_deref(), "prior2d.ckpt")?;
            let init = random_init(cfg.sds.resolution, &mut rng::stream(cfg.seed, "init"))?;
            let generator = AblationGenerator::Sds {
                prior: &prior,
                init: &init,
            };
            ablation_run(&modes, &a.seeds, &a.prompt, generator, &cfg.sds_config(), &cfg.schedule.training()?)?
        }
        AblateGenerator::Guided => {
            let prior = ctx.load_prior(a.prior.as_deref(), "prior3d.ckpt")?;
            let generator = AblationGenerator::Guided { prior: &prior };
            ablation_run(&modes, &a.seeds, &a.prompt, generator, &cfg.sds_config(), &cfg.schedule.sampling()?)?
        }
    };
    let dir = ctx.out_dir("ablate")?;
    report.write(&dir)?;
    Ok(dir)
}
