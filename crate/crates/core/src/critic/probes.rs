//! Hand-built grids that isolate what the geometry criterion adds.

use super::Result;
use crate::dataset::{concept, generate_shape};
use crate::render::{DensityGrid, EMPTY_RAW_DENSITY};
use crate::rng;
use crate::tensor::Tensor;

/// Raw density of probe solids; opaque within a fraction of a voxel.
pub const PROBE_RAW_DENSITY: f64 = 400.0;

fn from_predicate(r: usize, inside: impl Fn([f64; 3]) -> bool) -> Result<DensityGrid> {
    let base = DensityGrid::empty(r)?;
    let mut raw = vec![EMPTY_RAW_DENSITY; r * r * r];
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                if inside(base.voxel_center(x, y, z)) {
                    raw[base.index(x, y, z)] = PROBE_RAW_DENSITY;
                }
            }
        }
    }
    Ok(DensityGrid::new(
        Tensor::new(&[r, r, r], raw)?,
        base.raw_albedo().clone(),
    )?)
}

fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// A closed spherical shell around a small core. In the coherent grid a
/// vertical strut joins core and shell; in the split grid the core floats
/// free. The shell hides the interior, so every view is the same for both.
pub fn split_blob_pair(r: usize) -> Result<(DensityGrid, DensityGrid)> {
    let shell = |p: [f64; 3]| (0.38..=0.5).contains(&norm(p));
    let core = |p: [f64; 3]| norm(p) <= 0.24;
    let strut = |p: [f64; 3]| p[0].abs() <= 0.07 && p[2].abs() <= 0.07 && (0.0..=0.42).contains(&p[1]);
    let coherent = from_predicate(r, |p| shell(p) || core(p) || strut(p))?;
    let split = from_predicate(r, |p| shell(p) || core(p))?;
    Ok((coherent, split))
}

/// A solid sphere and a Janus grid made of two sphere-silhouette disks
/// facing the front and back cameras with nothing in between.
pub fn janus_pair(r: usize) -> Result<(DensityGrid, DensityGrid)> {
    let mut rng = rng::stream(0, "probe");
    let sphere = generate_shape(&concept("sphere")?.without_jitter(), r, &mut rng)?;
    let janus = generate_shape(&concept("janus_shell")?.without_jitter(), r, &mut rng)?;
    Ok((sphere, janus))
}
