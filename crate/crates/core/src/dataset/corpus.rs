//! Corpus manifests, on-disk layout and batch loading.
//!
//! ```text
//! <dir>/manifest.txt          key=value settings
//! <dir>/grids/<id>.ckpt       raw_density + raw_albedo checkpoint
//! <dir>/views/<id>_<k>.ppm    ring renders
//! <dir>/index.csv             magic line, header, one row per sample
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use super::shapes::{concept, generate_shape, ConceptSpec};
use super::{DatasetError, Result};
use crate::checkpoint::Checkpoint;
use crate::par;
use crate::render::{self, DensityGrid};
use crate::rng;
use crate::tensor::Tensor;

pub const INDEX_MAGIC: &str = "cg3d-corpus-index v1";
const MANIFEST_VERSION: u32 = 1;
const WRITE_CHUNK: usize = 32;

/// Settings that fully determine a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub concepts: Vec<String>,
    pub samples_per_concept: usize,
    pub seed: u64,
    pub resolution: usize,
    pub views: usize,
    pub elevation_deg: f64,
    pub image_size: usize,
    pub samples_per_ray: usize,
    /// Probability that a sample is replaced by its split (two-piece) form.
    pub split_fraction: f64,
    pub split_gap: f64,
}

impl Default for CorpusManifest {
    fn default() -> Self {
        Self {
            concepts: super::DEFAULT_CONCEPTS.iter().map(|s| s.to_string()).collect(),
            samples_per_concept: 100,
            seed: 0,
            resolution: 16,
            views: 4,
            elevation_deg: 15.0,
            image_size: 64,
            samples_per_ray: render::DEFAULT_SAMPLES,
            split_fraction: 0.0,
            split_gap: 0.3,
        }
    }
}

impl CorpusManifest {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DatasetError::Manifest(m));
        if self.concepts.is_empty() {
            return bad("no concepts".into());
        }
        for (i, c) in self.concepts.iter().enumerate() {
            concept(c)?;
            if self.concepts[..i].contains(c) {
                return bad(format!("duplicate concept {c}"));
            }
        }
        if self.samples_per_concept == 0 {
            return bad("samples_per_concept must be positive".into());
        }
        if self.resolution < 2 || self.views == 0 || self.samples_per_ray == 0 {
            return bad("resolution >= 2, views >= 1, samples_per_ray >= 1 required".into());
        }
        if self.image_size < 8 {
            return bad(format!("image_size {} below 8", self.image_size));
        }
        if !(0.0..=1.0).contains(&self.split_fraction) || !(self.split_gap > 0.0) {
            return bad("split_fraction in [0, 1] and split_gap > 0 required".into());
        }
        if !(self.elevation_deg.abs() < 90.0) {
            return bad(format!("elevation {} out of range", self.elevation_deg));
        }
        Ok(())
    }

    /// Concept specs with labels dense in manifest order.
    pub fn concept_specs(&self) -> Result<Vec<ConceptSpec>> {
        self.concepts
            .iter()
            .enumerate()
            .map(|(label, name)| {
                let mut spec = concept(name)?;
                spec.label = label;
                Ok(spec)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.concepts.len() * self.samples_per_concept
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cameras(&self) -> Result<Vec<render::Camera>> {
        Ok(render::ring_with_samples(
            self.views,
            self.elevation_deg.to_radians(),
            self.image_size,
            self.image_size,
            self.samples_per_ray,
        )?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version={MANIFEST_VERSION}");
        let _ = writeln!(s, "concepts={}", self.concepts.join(","));
        let _ = writeln!(s, "samples_per_concept={}", self.samples_per_concept);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "resolution={}", self.resolution);
        let _ = writeln!(s, "views={}", self.views);
        let _ = writeln!(s, "elevation_deg={}", self.elevation_deg);
        let _ = writeln!(s, "image_size={}", self.image_size);
        let _ = writeln!(s, "samples_per_ray={}", self.samples_per_ray);
        let _ = writeln!(s, "split_fraction={}", self.split_fraction);
        let _ = writeln!(s, "split_gap={}", self.split_gap);
        s
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    /// Missing keys keep their defaults, unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DatasetError::Manifest(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num_err = |_| DatasetError::Manifest(format!("bad value for {key}: `{value}`"));
            match key {
                "version" => {
                    let v: u32 = value.parse().map_err(num_err)?;
                    if v != MANIFEST_VERSION {
                        return Err(DatasetError::Manifest(format!("unsupported version {v}")));
                    }
                }
                "concepts" => {
                    m.concepts = value.split(',').map(|c| c.trim().to_string()).collect();
                }
                "samples_per_concept" => m.samples_per_concept = value.parse().map_err(num_err)?,
                "seed" => m.seed = value.parse().map_err(num_err)?,
                "resolution" => m.resolution = value.parse().map_err(num_err)?,
                "views" => m.views = value.parse().map_err(num_err)?,
                "image_size" => m.image_size = value.parse().map_err(num_err)?,
                "samples_per_ray" => m.samples_per_ray = value.parse().map_err(num_err)?,
                "elevation_deg" => {
                    m.elevation_deg = value
                        .parse()
                        .map_err(|_| DatasetError::Manifest(format!("bad elevation `{value}`")))?
                }
                "split_fraction" => {
                    m.split_fraction = value
                        .parse()
                        .map_err(|_| DatasetError::Manifest(format!("bad split_fraction `{value}`")))?
                }
                "split_gap" => {
                    m.split_gap = value
                        .parse()
                        .map_err(|_| DatasetError::Manifest(format!("bad split_gap `{value}`")))?
                }
                other => return Err(DatasetError::Manifest(format!("unknown key `{other}`"))),
            }
        }
        m.validate()?;
        Ok(m)
    }
}

/// One generated sample held in memory.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: usize,
    pub concept: String,
    pub label: usize,
    pub split: bool,
    pub grid: DensityGrid,
    /// `[H, W, 3]` renders in ring order.
    pub images: Vec<Tensor>,
}

fn make_sample(
    m: &CorpusManifest,
    specs: &[ConceptSpec],
    cams: &[render::Camera],
    id: usize,
) -> Result<Sample> {
    let spec = &specs[id / m.samples_per_concept];
    let mut rng = rng::indexed_stream(m.seed, "corpus", id as u64);
    let split = rng.random::<f64>() < m.split_fraction;
    let grid = if split {
        generate_shape(&spec.clone().split(m.split_gap), m.resolution, &mut rng)?
    } else {
        generate_shape(spec, m.resolution, &mut rng)?
    };
    let images = cams.iter().map(|c| render::render_image(&grid, c)).collect();
    Ok(Sample {
        id,
        concept: spec.name.clone(),
        label: spec.label,
        split,
        grid,
        images,
    })
}

/// Generates samples `range` of the manifest, in id order.
pub fn generate_samples(m: &CorpusManifest, range: std::ops::Range<usize>) -> Result<Vec<Sample>> {
    m.validate()?;
    let specs = m.concept_specs()?;
    let cams = m.cameras()?;
    let end = range.end.min(m.len());
    let start = range.start.min(end);
    par::map_range(end - start, |i| make_sample(m, &specs, &cams, start + i))
        .into_iter()
        .collect()
}

/// One index row.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: usize,
    pub concept: String,
    pub label: usize,
    /// Paths relative to the corpus directory.
    pub grid: String,
    pub views: Vec<String>,
}

fn grid_path(id: usize) -> String {
    format!("grids/{id:05}.ckpt")
}

fn view_path(id: usize, k: usize) -> String {
    format!("views/{id:05}_{k}.ppm")
}

/// Raw fields of `grid` as a checkpoint.
pub fn grid_checkpoint(grid: &DensityGrid) -> Checkpoint {
    let mut c = Checkpoint::new();
    c.push("raw_density", grid.raw_density().clone());
    c.push("raw_albedo", grid.raw_albedo().clone());
    c
}

pub fn grid_from_checkpoint(c: &Checkpoint) -> Result<DensityGrid> {
    Ok(DensityGrid::new(
        c.get("raw_density")?.clone(),
        c.get("raw_albedo")?.clone(),
    )?)
}

/// Writes a corpus under `dir`. The directory is created if missing (its
/// parent must exist); the index is written last and atomically.
pub fn build_corpus(m: &CorpusManifest, dir: &Path) -> Result<Corpus> {
    m.validate()?;
    if !dir.is_dir() {
        fs::create_dir(dir)?;
    }
    fs::create_dir_all(dir.join("grids"))?;
    fs::create_dir_all(dir.join("views"))?;
    fs::write(dir.join("manifest.txt"), m.to_text())?;
    let mut entries = Vec::with_capacity(m.len());
    let mut start = 0;
    while start < m.len() {
        let samples = generate_samples(m, start..start + WRITE_CHUNK)?;
        for s in samples {
            grid_checkpoint(&s.grid).save(&dir.join(grid_path(s.id)))?;
            let mut views = Vec::with_capacity(s.images.len());
            for (k, img) in s.images.iter().enumerate() {
                let p = view_path(s.id, k);
                render::export_image(img, &dir.join(&p))?;
                views.push(p);
            }
            entries.push(IndexEntry {
                id: s.id,
                concept: s.concept,
                label: s.label,
                grid: grid_path(s.id),
                views,
            });
        }
        start += WRITE_CHUNK;
    }
    let tmp = dir.join("index.csv.tmp");
    fs::write(&tmp, index_text(&entries))?;
    fs::rename(&tmp, dir.join("index.csv"))?;
    Ok(Corpus {
        dir: dir.to_path_buf(),
        manifest: m.clone(),
        entries,
    })
}

fn index_text(entries: &[IndexEntry]) -> String {
    let mut s = format!("{INDEX_MAGIC}\nid,concept,label,grid,views\n");
    for e in entries {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            e.id,
            e.concept,
            e.label,
            e.grid,
            e.views.join(";")
        );
    }
    s
}

fn parse_index(text: &str) -> Result<Vec<IndexEntry>> {
    let mut lines = text.lines();
    if lines.next() != Some(INDEX_MAGIC) {
        return Err(DatasetError::Index("missing magic line".into()));
    }
    if lines.next() != Some("id,concept,label,grid,views") {
        return Err(DatasetError::Index("unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(row, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || DatasetError::Index(format!("row {row}: `{line}`"));
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(IndexEntry {
                id: f[0].parse().map_err(|_| bad())?,
                concept: f[1].to_string(),
                label: f[2].parse().map_err(|_| bad())?,
                grid: f[3].to_string(),
                views: f[4].split(';').map(str::to_string).collect(),
            })
        })
        .collect()
}

/// Which tensors a batch carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Individual `[H, W, 3]` renders in `[0, 1]`; item `i` is view
    /// `i % views` of sample `i / views`.
    Views2d,
    /// Raw density `[R, R, R]` per sample.
    Grids3d,
}

/// A corpus opened from disk.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: CorpusManifest,
    pub entries: Vec<IndexEntry>,
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = CorpusManifest::parse(&fs::read_to_string(dir.join("manifest.txt"))?)?;
        let entries = parse_index(&fs::read_to_string(dir.join("index.csv"))?)?;
        if entries.len() != manifest.len() {
            return Err(DatasetError::Index(format!(
                "{} rows for a manifest of {} samples",
                entries.len(),
                manifest.len()
            )));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.id != i || e.views.len() != manifest.views || e.label >= manifest.concepts.len() {
                return Err(DatasetError::Index(format!("row {i} inconsistent with manifest")));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            entries,
        })
    }

    pub fn len(&self, target: Target) -> usize {
        match target {
            Target::Views2d => self.entries.len() * self.manifest.views,
            Target::Grids3d => self.entries.len(),
        }
    }

    pub fn load_grid(&self, id: usize) -> Result<DensityGrid> {
        let e = self.entry(id)?;
        grid_from_checkpoint(&Checkpoint::load(&self.dir.join(&e.grid))?)
    }

    fn entry(&self, id: usize) -> Result<&IndexEntry> {
        self.entries.get(id).ok_or(DatasetError::OutOfRange {
            index: id,
            len: self.entries.len(),
        })
    }
}

/// Loads the listed items with their labels.
pub fn load_batch(corpus: &Corpus, indices: &[usize], target: Target) -> Result<Vec<(Tensor, usize)>> {
    let len = corpus.len(target);
    if let Some(&index) = indices.iter().find(|&&i| i >= len) {
        return Err(DatasetError::OutOfRange { index, len });
    }
    indices
        .iter()
        .map(|&i| match target {
            Target::Views2d => {
                let v = corpus.manifest.views;
                let e = corpus.entry(i / v)?;
                Ok((render::read_ppm(&corpus.dir.join(&e.views[i % v]))?, e.label))
            }
            Target::Grids3d => {
                let e = corpus.entry(i)?;
                Ok((corpus.load_grid(i)?.raw_density().clone(), e.label))
            }
        })
        .collect()
}
