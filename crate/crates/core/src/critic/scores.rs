//! Differentiable content and geometry sub-scores.

use super::template::SilhouetteTemplate;
use super::{CriticError, Result};
use crate::render::{GridVars, ViewSet};
use crate::tensor::{self, Tensor, Var};
use crate::voxel;

const IOU_EPS: f64 = 1e-12;
const VARIANCE_EPS: f64 = 1e-12;

/// Mean soft-IoU between each view's opacity and the matching template
/// mask.
pub fn content_score<'t>(views: &ViewSet<'t>, template: &SilhouetteTemplate) -> Result<Var<'t>> {
    if views.len() != template.len() {
        return Err(CriticError::ViewCount {
            views: views.len(),
            masks: template.len(),
        });
    }
    let tape = views.grid.density.tape();
    let mut total: Option<Var<'t>> = None;
    for (view, mask) in views.views.iter().zip(&template.masks) {
        if view.alpha.shape() != mask.shape() {
            return Err(CriticError::ViewCount {
                views: views.len(),
                masks: template.len(),
            });
        }
        let m = tape.constant(mask.clone());
        let inter = view.alpha.mul(m)?.sum()?;
        let mass: f64 = mask.data().iter().sum();
        let union = view.alpha.sum()?.sub(inter)?.offset(mass + IOU_EPS)?;
        let iou = inter.div(union)?;
        total = Some(match total {
            Some(t) => t.add(iou)?,
            None => iou,
        });
    }
    let total = total.ok_or(CriticError::Render(crate::render::RenderError::NoCameras))?;
    Ok(total.scale(1.0 / views.len() as f64)?)
}

/// `1 - var(areas) / ((N - 1) mean² + eps)` over per-view mean opacity.
/// The normalizer is the largest variance a non-negative set with that mean
/// can have, so the result lies in `[0, 1]`.
pub fn view_consistency<'t>(views: &ViewSet<'t>) -> Result<Var<'t>> {
    let n = views.len();
    if n < 2 {
        return Err(CriticError::TooFewViews(n));
    }
    let tape = views.grid.density.tape();
    let areas = views
        .views
        .iter()
        .map(|v| v.alpha.mean())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let a = tensor::stack_scalars(tape, &areas)?;
    let mean = a.mean()?;
    let var = a.sub(mean)?.square()?.mean()?;
    let norm = mean.square()?.scale((n - 1) as f64)?.offset(VARIANCE_EPS)?;
    Ok(var.div(norm)?.one_minus()?)
}

/// Share of soft occupancy `sigmoid(kappa (σ - threshold))` lying in the
/// largest 6-connected component of `σ > threshold`. Zero when nothing
/// crosses the threshold.
pub fn connectedness<'t>(grid: &GridVars<'t>, kappa: f64, threshold: f64) -> Result<Var<'t>> {
    let tape = grid.density.tape();
    let r = grid.resolution;
    let dens = grid.density.value();
    let comps = voxel::components(&voxel::threshold_mask(dens.data(), threshold), r);
    let largest = tape.constant(Tensor::new(&[r, r, r], comps.largest_mask())?);
    let occ = grid.density.offset(-threshold)?.scale(kappa)?.sigmoid()?;
    let inside = occ.mul(largest)?.sum()?;
    let total = occ.sum()?.offset(IOU_EPS)?;
    Ok(inside.div(total)?)
}

/// View consistency times connectedness of the grid behind `views`.
pub fn geometry_score<'t>(views: &ViewSet<'t>, kappa: f64, threshold: f64) -> Result<Var<'t>> {
    let consistency = view_consistency(views)?;
    let conn = connectedness(&views.grid, kappa, threshold)?;
    Ok(consistency.mul(conn)?)
}
