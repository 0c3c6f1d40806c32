use super::Result;
use crate::critic::{connectedness, content_score, template_for, view_consistency, CriticParams, CriticQuery};
use crate::render::{render_views, Camera, DensityGrid};
use crate::tensor::Tape;
use crate::voxel;

pub const METRICS_HEADER: &str = "content,geometry,connectedness,silhouette_variance";

/// Toy quality metrics of one asset. Every value reads opacity only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean soft-IoU against the query's template silhouettes.
    pub content: f64,
    /// View consistency times connectedness.
    pub geometry: f64,
    /// Share of soft occupancy in the largest component; 1 for an empty grid.
    pub connectedness: f64,
    /// Population variance of per-view opacity area.
    pub silhouette_variance: f64,
}

impl Metrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.content, self.geometry, self.connectedness, self.silhouette_variance
        )
    }
}

pub fn metric_suite(grid: &DensityGrid, query: &CriticQuery, cams: &[Camera]) -> Result<Metrics> {
    let p = CriticParams::default();
    let tape = Tape::new();
    let vars = grid.record(&tape)?;
    let views = render_views(&vars, cams)?;
    let template = template_for(&query.template_id, cams)?;
    let content = content_score(&views, &template)?.item();
    let empty = !voxel::threshold_mask(&grid.density(), p.threshold).contains(&true);
    let conn = if empty {
        1.0
    } else {
        connectedness(&vars, p.kappa, p.threshold)?.item()
    };
    let consistency = if views.len() >= 2 {
        view_consistency(&views)?.item()
    } else {
        1.0
    };
    let areas: Vec<f64> = views
        .views
        .iter()
        .map(|v| {
            let a = v.alpha.value();
            a.data().iter().sum::<f64>() / a.len() as f64
        })
        .collect();
    let mean = areas.iter().sum::<f64>() / areas.len() as f64;
    let variance = areas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / areas.len() as f64;
    Ok(Metrics {
        content,
        geometry: consistency * conn,
        connectedness: conn,
        silhouette_variance: variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::build_query;
    use crate::dataset::{concept, generate_shape};
    use crate::render::make_view_ring;
    use crate::rng;
    use crate::tensor::Tensor;

    #[test]
    fn template_shape_scores_high_and_empty_is_connected() {
        let cams = make_view_ring(4, 0.26, 32, 32).unwrap();
        let q = build_query("cube", "cube", true).unwrap();
        let spec = concept("cube").unwrap().without_jitter();
        let g = generate_shape(&spec, 32, &mut rng::stream(0, "t")).unwrap();
        let m = metric_suite(&g, &q, &cams).unwrap();
        assert!(m.content > 0.9, "{m:?}");
        assert!(m.connectedness > 0.99);
        let e = metric_suite(&DensityGrid::empty(16).unwrap(), &q, &cams).unwrap();
        assert_eq!(e.connectedness, 1.0);
        assert_eq!(e.silhouette_variance, 0.0);
        for v in [m.content, m.geometry, m.connectedness, e.content, e.geometry] {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn albedo_does_not_matter() {
        let cams = make_view_ring(3, 0.2, 16, 16).unwrap();
        let q = build_query("two_spheres", "two_spheres", true).unwrap();
        let spec = concept("two_spheres").unwrap();
        let g = generate_shape(&spec, 16, &mut rng::stream(2, "t")).unwrap();
        let albedo: Vec<f64> = g.raw_albedo().data().chunks(3).flat_map(|c| [c[2], c[0], c[1]]).collect();
        let h = DensityGrid::new(g.raw_density().clone(), Tensor::new(&[16, 16, 16, 3], albedo).unwrap()).unwrap();
        assert_eq!(metric_suite(&g, &q, &cams).unwrap(), metric_suite(&h, &q, &cams).unwrap());
    }
}
