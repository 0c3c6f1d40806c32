//! Binary silhouette masks of registered concepts.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::{CriticError, Result};
use crate::dataset::{self, generate_shape};
use crate::render::{self, Camera};
use crate::rng;
use crate::tensor::Tensor;

/// Resolution at which template shapes are voxelized.
pub const TEMPLATE_RESOLUTION: usize = 32;

/// One `{0, 1}` mask `[H, W]` per camera for a named concept.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteTemplate {
    pub concept: String,
    pub cameras: Vec<Camera>,
    pub masks: Vec<Tensor>,
}

impl SilhouetteTemplate {
    /// Renders the unjittered concept from each camera and thresholds
    /// opacity at 0.5.
    pub fn build(concept: &str, cameras: &[Camera]) -> Result<Self> {
        if cameras.is_empty() {
            return Err(CriticError::Render(render::RenderError::NoCameras));
        }
        let spec = dataset::concept(concept)
            .map_err(|_| CriticError::UnknownTemplate(concept.to_string()))?
            .without_jitter();
        let grid = generate_shape(&spec, TEMPLATE_RESOLUTION, &mut rng::stream(0, "template"))?;
        let masks = cameras
            .iter()
            .map(|c| render::silhouette(&grid, c).map(|a| if a > 0.5 { 1.0 } else { 0.0 }))
            .collect();
        Ok(Self {
            concept: concept.to_string(),
            cameras: cameras.to_vec(),
            masks,
        })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

type CacheKey = (String, Vec<[u64; 5]>);

fn camera_key(c: &Camera) -> [u64; 5] {
    [
        c.azimuth.to_bits(),
        c.elevation.to_bits(),
        c.height as u64,
        c.width as u64,
        c.samples as u64,
    ]
}

/// Template for `concept` on exactly these cameras, built once per process.
pub fn template_for(concept: &str, cameras: &[Camera]) -> Result<Arc<SilhouetteTemplate>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<SilhouetteTemplate>>>> = OnceLock::new();
    let key = (concept.to_string(), cameras.iter().map(camera_key).collect());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().expect("template cache poisoned").get(&key) {
        return Ok(Arc::clone(t));
    }
    let t = Arc::new(SilhouetteTemplate::build(concept, cameras)?);
    cache
        .lock()
        .expect("template cache poisoned")
        .insert(key, Arc::clone(&t));
    Ok(t)
}
