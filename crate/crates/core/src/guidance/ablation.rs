use std::fmt::Write as _;
use std::path::Path;

use super::{guided_sample, sds_optimize, GuidanceError, Result, SdsConfig};
use crate::critic::{build_query, CriticParams, CriticQuery};
use crate::diffusion::{Denoiser, DiffusionSchedule};
use crate::par;
use crate::render::{self, Camera, DensityGrid};
use crate::tensor::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationMode {
    /// Content and geometry criteria over every reward view.
    Full,
    /// Content criterion only, every reward view.
    NoGeometryQuery,
    /// Content criterion only, front view only.
    SingleView,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [Self::Full, Self::NoGeometryQuery, Self::SingleView];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoGeometryQuery => "no_geometry_query",
            Self::SingleView => "single_view",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| GuidanceError::Config(format!("unknown ablation mode `{s}`")))
    }

    pub fn query(self, concept: &str) -> Result<CriticQuery> {
        Ok(build_query(concept, concept, self == Self::Full)?)
    }

    fn configure(self, base: &SdsConfig) -> SdsConfig {
        let mut cfg = *base;
        if self == Self::SingleView {
            cfg.guidance.views_per_reward = 1;
        }
        cfg
    }
}

/// Which generator the ablation drives.
#[derive(Debug, Clone, Copy)]
pub enum AblationGenerator<'a> {
    /// Reward-augmented distillation from a fixed initial grid.
    Sds {
        prior: &'a Denoiser,
        init: &'a DensityGrid,
    },
    /// Guided ancestral sampling of a grid prior.
    Guided { prior: &'a Denoiser },
}

/// Final scores of one seed, always measured on the full view ring with the
/// dual query.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub seed: u64,
    pub content: f64,
    pub geometry: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Front view of every final asset, per mode, in seed order.
    pub sheets: Vec<(AblationMode, Vec<crate::tensor::Tensor>)>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,seed,content,geometry,reward\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.mode.as_str(), r.seed, r.content, r.geometry, r.reward);
        }
        s
    }

    /// Mean of `f` over the rows of `mode`.
    pub fn mean(&self, mode: AblationMode, f: impl Fn(&AblationRow) -> f64) -> f64 {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.mode == mode).map(f).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Writes `ablation.csv` and one `sheet_<mode>.ppm` per mode.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("ablation.csv"), self.to_csv())?;
        for (mode, images) in &self.sheets {
            render::write_contact_sheet(images, &dir.join(format!("sheet_{}.ppm", mode.as_str())))?;
        }
        Ok(())
    }
}

/// Content, geometry and reward of `grid` under the dual query.
pub fn score_asset(
    grid: &DensityGrid,
    concept: &str,
    critic: &CriticParams,
    cams: &[Camera],
) -> Result<(f64, f64, f64)> {
    let q = AblationMode::Full.query(concept)?;
    let tape = Tape::new();
    let vars = grid.record(&tape)?;
    let views = render::render_views(&vars, cams)?;
    let out = critic.eval(&q, &views)?;
    let geometry = out.geometry.map_or(f64::NAN, |g| g.item());
    Ok((out.content.item(), geometry, out.reward.item()))
}

/// Runs every mode in `modes` over the same seeds and scores the finals.
pub fn ablation_run(
    modes: &[AblationMode],
    seeds: &[u64],
    concept: &str,
    generator: AblationGenerator<'_>,
    cfg: &SdsConfig,
    sched: &DiffusionSchedule,
) -> Result<AblationReport> {
    cfg.validate()?;
    let elev = cfg.elevation_deg.to_radians();
    let eval_cams = render::ring_with_samples(
        cfg.guidance.views_per_reward.max(2),
        elev,
        cfg.critic_size,
        cfg.critic_size,
        cfg.samples,
    )?;
    let mut report = AblationReport {
        rows: Vec::new(),
        sheets: Vec::new(),
    };
    for &mode in modes {
        let mcfg = mode.configure(cfg);
        let query = mode.query(concept)?;
        let cams = render::ring_with_samples(
            mcfg.guidance.views_per_reward,
            elev,
            mcfg.critic_size,
            mcfg.critic_size,
            mcfg.samples,
        )?;
        let finals = par::map_slice(seeds, |&seed| -> Result<DensityGrid> {
            Ok(match generator {
                AblationGenerator::Sds { prior, init } => {
                    sds_optimize(init.clone(), prior, Some(&query), &mcfg, sched, seed)?.0
                }
                AblationGenerator::Guided { prior } => {
                    guided_sample(prior, Some(&query), &mcfg.guidance, &cams, sched, seed)?.1
                }
            })
        });
        let mut sheet = Vec::new();
        for (&seed, grid) in seeds.iter().zip(finals) {
            let grid = grid?;
            let (content, geometry, reward) = score_asset(&grid, concept, &cfg.guidance.critic, &eval_cams)?;
            report.rows.push(AblationRow {
                mode,
                seed,
                content,
                geometry,
                reward,
            });
            sheet.push(render::render_image(&grid, &eval_cams[0]));
        }
        report.sheets.push((mode, sheet));
    }
    Ok(report)
}
