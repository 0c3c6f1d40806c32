//! Analytic shape generators filled through signed distances.

use rand::Rng as _;

use super::{DatasetError, Result};
use crate::render::DensityGrid;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Density inside shapes; saturates opacity within one sample step at S=64.
pub const SIGMA_HI: f64 = 20.0;
/// Density floor outside shapes, kept positive so the raw value is finite.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Inverse of `softplus` for positive arguments.
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    y + (-(-y).exp_m1()).ln()
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Sphere { radius: f64 },
    /// Axis-aligned cube with the given half side.
    Cube { half: f64 },
    /// Torus around the vertical axis.
    Torus { major: f64, minor: f64 },
    /// Two spheres side by side along x with a surface gap.
    TwoSpheres { radius: f64, gap: f64 },
    /// Two thin disks facing the front (±z), each carrying the silhouette
    /// of a sphere of `radius`, with empty sides.
    JanusShell {
        radius: f64,
        thickness: f64,
        separation: f64,
    },
    /// `inner` cut at x = 0 with the halves pushed `gap` apart.
    Split { inner: Box<Generator>, gap: f64 },
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(DatasetError::Degenerate(format!("{what} in {self:?}")));
        match self {
            Generator::Sphere { radius } if *radius <= 0.0 => bad("radius <= 0"),
            Generator::Cube { half } if *half <= 0.0 => bad("half side <= 0"),
            Generator::Torus { major, minor } if *minor <= 0.0 || *major <= *minor => {
                bad("torus radii")
            }
            Generator::TwoSpheres { radius, gap } if *radius <= 0.0 || *gap < 0.0 => {
                bad("radius/gap")
            }
            Generator::JanusShell {
                radius,
                thickness,
                separation,
            } if *radius <= 0.0 || *thickness <= 0.0 || *separation <= *thickness => {
                bad("shell dimensions")
            }
            Generator::Split { inner, gap } => {
                if *gap <= 0.0 {
                    return bad("gap <= 0");
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    /// Signed distance at `p` for a shape scaled by `scale`, centered at the
    /// origin.
    pub fn sdf(&self, p: [f64; 3], scale: f64) -> f64 {
        let len = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        match self {
            Generator::Sphere { radius } => len(p) - radius * scale,
            Generator::Cube { half } => {
                let h = half * scale;
                let q = [p[0].abs() - h, p[1].abs() - h, p[2].abs() - h];
                let outside = len([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
                outside + q[0].max(q[1]).max(q[2]).min(0.0)
            }
            Generator::Torus { major, minor } => {
                let ring = (p[0] * p[0] + p[2] * p[2]).sqrt() - major * scale;
                (ring * ring + p[1] * p[1]).sqrt() - minor * scale
            }
            Generator::TwoSpheres { radius, gap } => {
                let r = radius * scale;
                let off = r + gap * scale / 2.0;
                let a = len([p[0] - off, p[1], p[2]]) - r;
                let b = len([p[0] + off, p[1], p[2]]) - r;
                a.min(b)
            }
            Generator::JanusShell {
                radius,
                thickness,
                separation,
            } => {
                let disk = |zc: f64| {
                    let radial = (p[0] * p[0] + p[1] * p[1]).sqrt() - radius * scale;
                    let axial = (p[2] - zc).abs() - thickness * scale / 2.0;
                    let outside = (radial.max(0.0).powi(2) + axial.max(0.0).powi(2)).sqrt();
                    outside + radial.max(axial).min(0.0)
                };
                let z = separation * scale / 2.0;
                disk(z).min(disk(-z))
            }
            Generator::Split { inner, gap } => {
                let g = gap * scale / 2.0;
                let right = inner.sdf([p[0] - g, p[1], p[2]], scale).max(-(p[0] - g));
                let left = inner.sdf([p[0] + g, p[1], p[2]], scale).max(p[0] + g);
                right.min(left)
            }
        }
    }
}

/// A labelled concept with its generator and jitter ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSpec {
    pub name: String,
    pub generator: Generator,
    pub label: usize,
    /// Uniform center offset range per axis, `±jitter_position`.
    pub jitter_position: f64,
    /// Uniform relative size range, `1 ± jitter_size`.
    pub jitter_size: f64,
    pub albedo: [f64; 3],
}

/// The three training concepts, labels 0..3.
pub const DEFAULT_CONCEPTS: [&str; 3] = ["sphere", "cube", "two_spheres"];

/// Every registered concept, in label order. `torus` and `janus_shell` are
/// probes and never enter the default training vocabulary.
pub const ALL_CONCEPTS: [&str; 5] = ["sphere", "cube", "two_spheres", "torus", "janus_shell"];

/// Looks up a registered concept by name.
pub fn concept(name: &str) -> Result<ConceptSpec> {
    let label = ALL_CONCEPTS
        .iter()
        .position(|&n| n == name)
        .ok_or_else(|| DatasetError::UnknownConcept(name.to_string()))?;
    let (generator, albedo) = match name {
        "sphere" => (Generator::Sphere { radius: 0.5 }, [0.85, 0.25, 0.2]),
        "cube" => (Generator::Cube { half: 0.4 }, [0.2, 0.7, 0.3]),
        "two_spheres" => (
            Generator::TwoSpheres {
                radius: 0.3,
                gap: 0.3,
            },
            [0.2, 0.35, 0.85],
        ),
        "torus" => (
            Generator::Torus {
                major: 0.5,
                minor: 0.2,
            },
            [0.8, 0.7, 0.2],
        ),
        _ => (
            Generator::JanusShell {
                radius: 0.5,
                thickness: 0.1,
                separation: 0.5,
            },
            [0.85, 0.25, 0.2],
        ),
    };
    Ok(ConceptSpec {
        name: name.to_string(),
        generator,
        label,
        jitter_position: 0.1,
        jitter_size: 0.1,
        albedo,
    })
}

impl ConceptSpec {
    pub fn without_jitter(mut self) -> Self {
        self.jitter_position = 0.0;
        self.jitter_size = 0.0;
        self
    }

    /// The same concept cut in two floating halves.
    pub fn split(mut self, gap: f64) -> Self {
        self.generator = Generator::Split {
            inner: Box::new(self.generator),
            gap,
        };
        self
    }
}

/// Fills a grid from the concept's signed distance: density `SIGMA_HI`
/// inside, `SIGMA_FLOOR` outside, linear across a one-voxel boundary band.
/// Jitter is drawn from `rng` (nothing is drawn when both ranges are zero).
pub fn generate_shape(spec: &ConceptSpec, resolution: usize, rng: &mut Rng) -> Result<DensityGrid> {
    spec.generator.validate()?;
    if resolution < 2 {
        return Err(DatasetError::Degenerate(format!("resolution {resolution}")));
    }
    let mut offset = [0.0; 3];
    if spec.jitter_position > 0.0 {
        for o in &mut offset {
            *o = rng.random_range(-spec.jitter_position..=spec.jitter_position);
        }
    }
    let scale = if spec.jitter_size > 0.0 {
        1.0 + rng.random_range(-spec.jitter_size..=spec.jitter_size)
    } else {
        1.0
    };
    let r = resolution;
    let voxel = 2.0 / r as f64;
    let base = DensityGrid::empty(r)?;
    let mut raw = vec![0.0; r * r * r];
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                let c = base.voxel_center(x, y, z);
                let p = [c[0] - offset[0], c[1] - offset[1], c[2] - offset[2]];
                let d = spec.generator.sdf(p, scale);
                let occ = (0.5 - d / voxel).clamp(0.0, 1.0);
                raw[base.index(x, y, z)] = softplus_inv((SIGMA_HI * occ).max(SIGMA_FLOOR));
            }
        }
    }
    let albedo: Vec<f64> = (0..r * r * r)
        .flat_map(|_| spec.albedo.map(logit))
        .collect();
    Ok(DensityGrid::new(
        Tensor::new(&[r, r, r], raw)?,
        Tensor::new(&[r, r, r, 3], albedo)?,
    )?)
}
