//! Run configuration: TOML sections, dotted overrides and validation.

use cg3d_core::critic::CriticParams;
use cg3d_core::dataset::{CorpusManifest, DEFAULT_CONCEPTS};
use cg3d_core::diffusion::{DiffusionSchedule, Optimizer, TrainConfig};
use cg3d_core::guidance::{GuidanceConfig, SdsConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output root; `CG3D_OUT` takes precedence.
    pub out_dir: String,
    pub corpus: CorpusSection,
    pub schedule: ScheduleSection,
    pub train: TrainSection,
    pub critic: CriticSection,
    pub guidance: GuidanceConfig,
    pub sds: SdsSection,
    pub generate: GenerateSection,
    pub eval: EvalSection,
    pub ablate: AblateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "out".into(),
            corpus: Default::default(),
            schedule: Default::default(),
            train: Default::default(),
            critic: Default::default(),
            guidance: Default::default(),
            sds: Default::default(),
            generate: Default::default(),
            eval: Default::default(),
            ablate: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    /// Corpus directory under the output root.
    pub dir: String,
    pub concepts: Vec<String>,
    pub samples_per_concept: usize,
    pub resolution: usize,
    pub views: usize,
    pub elevation_deg: f64,
    pub image_size: usize,
    pub samples_per_ray: usize,
    pub split_fraction: f64,
    pub split_gap: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let m = CorpusManifest::default();
        Self {
            dir: "corpus".into(),
            concepts: DEFAULT_CONCEPTS.iter().map(|s| s.to_string()).collect(),
            samples_per_concept: m.samples_per_concept,
            resolution: m.resolution,
            views: m.views,
            elevation_deg: m.elevation_deg,
            image_size: m.image_size,
            samples_per_ray: m.samples_per_ray,
            split_fraction: m.split_fraction,
            split_gap: m.split_gap,
        }
    }
}

impl CorpusSection {
    pub fn manifest(&self, seed: u64) -> CorpusManifest {
        CorpusManifest {
            concepts: self.concepts.clone(),
            samples_per_concept: self.samples_per_concept,
            seed,
            resolution: self.resolution,
            views: self.views,
            elevation_deg: self.elevation_deg,
            image_size: self.image_size,
            samples_per_ray: self.samples_per_ray,
            split_fraction: self.split_fraction,
            split_gap: self.split_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// `T` used for training and distillation.
    pub train_steps: usize,
    /// `T` of the reverse sampling chain.
    pub sample_steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        use cg3d_core::diffusion::{SAMPLE_STEPS, SIGMA_MAX, SIGMA_MIN, TRAIN_STEPS};
        Self {
            train_steps: TRAIN_STEPS,
            sample_steps: SAMPLE_STEPS,
            sigma_min: SIGMA_MIN,
            sigma_max: SIGMA_MAX,
        }
    }
}

impl ScheduleSection {
    pub fn training(&self) -> Result<DiffusionSchedule> {
        Ok(DiffusionSchedule::new(self.train_steps, self.sigma_min, self.sigma_max)?)
    }

    pub fn sampling(&self) -> Result<DiffusionSchedule> {
        Ok(DiffusionSchedule::new(self.sample_steps, self.sigma_min, self.sigma_max)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainTarget {
    Prior2d,
    Prior3d,
}

impl TrainTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainTarget::Prior2d => "prior2d",
            TrainTarget::Prior3d => "prior3d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub target: TrainTarget,
    /// Defaults to 2000 for the 2D prior and 1500 for the 3D prior.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub batch_size: usize,
    pub optimizer: OptimizerName,
    pub lr: f64,
    pub momentum: f64,
    /// Defaults to none for the 2D prior and 1.0 for the 3D prior.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    pub label_dropout: f64,
    /// Defaults to 256 for the 2D prior and 512 for the 3D prior.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    /// Side of the pooled image the 2D prior models.
    pub pooled: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            target: TrainTarget::Prior2d,
            steps: None,
            batch_size: t.batch_size,
            optimizer: OptimizerName::Sgd,
            lr: t.lr,
            momentum: t.momentum,
            clip_norm: None,
            label_dropout: t.label_dropout,
            width: None,
            pooled: 8,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let base = match self.target {
            TrainTarget::Prior2d => TrainConfig::default(),
            TrainTarget::Prior3d => TrainConfig::grid(),
        };
        TrainConfig {
            steps: self.steps.unwrap_or(base.steps),
            batch_size: self.batch_size,
            optimizer: match self.optimizer {
                OptimizerName::Sgd => Optimizer::Sgd,
                OptimizerName::Adam => Optimizer::Adam,
            },
            lr: self.lr,
            momentum: self.momentum,
            clip_norm: self.clip_norm.or(base.clip_norm),
            label_dropout: self.label_dropout,
            seed,
        }
    }

    pub fn width(&self) -> usize {
        self.width.unwrap_or(match self.target {
            TrainTarget::Prior2d => 256,
            TrainTarget::Prior3d => 512,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticSection {
    /// Concept grounding the content criterion; defaults to the prompt.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub include_geometry: bool,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub kappa: f64,
    pub threshold: f64,
    /// Side of each critic view.
    pub image_size: usize,
    pub samples: usize,
    pub elevation_deg: f64,
    /// `host:port` of an external critic; the toy critic when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl Default for CriticSection {
    fn default() -> Self {
        let p = CriticParams::default();
        Self {
            template: None,
            include_geometry: true,
            a: p.a,
            b: p.b,
            c: p.c,
            kappa: p.kappa,
            threshold: p.threshold,
            image_size: 32,
            samples: 64,
            elevation_deg: 15.0,
            endpoint: None,
        }
    }
}

impl CriticSection {
    pub fn params(&self) -> CriticParams {
        CriticParams {
            a: self.a,
            b: self.b,
            c: self.c,
            kappa: self.kappa,
            threshold: self.threshold,
        }
    }

    pub fn template_for<'a>(&'a self, prompt: &'a str) -> &'a str {
        self.template.as_deref().unwrap_or(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdsSection {
    pub lr: f64,
    pub momentum: f64,
    pub reward_every: usize,
    /// Side of the optimized grid.
    pub resolution: usize,
}

impl Default for SdsSection {
    fn default() -> Self {
        let s = SdsConfig::default();
        Self {
            lr: s.lr,
            momentum: s.momentum,
            reward_every: s.reward_every,
            resolution: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerateMode {
    Sds,
    Guided,
    Unguided,
}

impl GenerateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerateMode::Sds => "sds",
            GenerateMode::Guided => "guided",
            GenerateMode::Unguided => "unguided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub mode: GenerateMode,
    pub prompt: String,
    /// Prior checkpoint; defaults to `prior2d.ckpt` for distillation and
    /// `prior3d.ckpt` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<String>,
    pub sheet_views: usize,
    pub sheet_size: usize,
    pub obj_threshold: f64,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            mode: GenerateMode::Guided,
            prompt: "sphere".into(),
            prior: None,
            sheet_views: 4,
            sheet_size: 64,
            obj_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalInput {
    pub method: String,
    pub prompt: String,
    /// Grid checkpoint written by `generate`.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Method pinned at 1000; defaults to the first input's method.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    pub ties: bool,
    pub delta: f64,
    pub views: usize,
    pub image_size: usize,
    pub inputs: Vec<EvalInput>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            anchor: None,
            ties: true,
            delta: 1e-6,
            views: 4,
            image_size: 32,
            inputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblateGenerator {
    Sds,
    Guided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateSection {
    pub generator: AblateGenerator,
    pub prompt: String,
    pub modes: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<String>,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            generator: AblateGenerator::Sds,
            prompt: "sphere".into(),
            modes: vec!["full".into(), "no_geometry_query".into(), "single_view".into()],
            seeds: vec![0, 1, 2],
            prior: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[])
    }

    /// Parses `text` and applies `section.key=value` overrides. Values are
    /// read as TOML and fall back to plain strings.
    pub fn parse_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Guidance settings carrying the configured critic scales.
    pub fn guidance(&self) -> GuidanceConfig {
        GuidanceConfig {
            critic: self.critic.params(),
            ..self.guidance
        }
    }

    pub fn sds_config(&self) -> SdsConfig {
        SdsConfig {
            guidance: self.guidance(),
            lr: self.sds.lr,
            momentum: self.sds.momentum,
            reward_every: self.sds.reward_every,
            elevation_deg: self.critic.elevation_deg,
            critic_size: self.critic.image_size,
            samples: self.critic.samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.out_dir.is_empty() {
            return bad("out_dir is empty");
        }
        self.corpus.manifest(self.seed).validate()?;
        self.schedule.training()?;
        self.schedule.sampling()?;
        self.sds_config().validate()?;
        if self.train.pooled == 0 || self.train.width() == 0 {
            return bad("train.pooled and train.width must be positive");
        }
        if !(self.generate.obj_threshold > 0.0) || self.generate.sheet_views == 0 || self.generate.sheet_size == 0 {
            return bad("generate sheet and threshold settings must be positive");
        }
        if !(self.eval.delta >= 0.0) || self.eval.views == 0 || self.eval.image_size == 0 {
            return bad("eval settings out of range");
        }
        if self.critic.endpoint.as_deref() == Some("") {
            return bad("critic.endpoint is empty");
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let spec = spec.trim_start_matches("--");
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{path}`")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut node = table;
    for k in parents {
        node = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{k}` in `{path}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
