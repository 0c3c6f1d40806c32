//! Dual-query Yes/No critic over multi-view renders.
//!
//! The toy critic turns two differentiable sub-scores into Yes/No logits:
//! a content score (soft-IoU of rendered opacity against a concept's
//! silhouette masks) and a geometry score (cross-view area consistency
//! times voxel connectedness). The reward is the log-odds
//! `z_yes - z_no`, differentiable down to the grid's raw parameters.

pub mod probes;
mod remote;
mod scores;
mod template;

pub use remote::{
    decode_request, decode_response, encode_request, encode_response, exchange,
    remote_critic_eval, serve_connection, RemoteRequest, PROTOCOL_VERSION,
};
pub use scores::{connectedness, content_score, geometry_score, view_consistency};
pub use template::{template_for, SilhouetteTemplate, TEMPLATE_RESOLUTION};

use thiserror::Error;

use crate::dataset::{self, DatasetError};
use crate::render::{RenderError, ViewSet};
use crate::tensor::{self, TensorError, Var};

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("{views} views against {masks} template masks")]
    ViewCount { views: usize, masks: usize },
    #[error("geometry needs at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("invalid critic parameters: {0}")]
    Params(String),
    #[error("transport failure: {0}")]
    Transport(std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("critic returned non-finite logits")]
    NonFinite,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, CriticError>;

pub const ANSWER_INSTRUCTION: &str = "Strictly respond with only 'Yes' or 'No'.";

/// A structured Yes/No question about an asset.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticQuery {
    pub content_text: String,
    /// Concept whose silhouettes ground the content criterion.
    pub template_id: String,
    pub include_geometry: bool,
}

/// Builds a query grounded in a registered concept.
pub fn build_query(content_text: &str, template_id: &str, include_geometry: bool) -> Result<CriticQuery> {
    dataset::concept(template_id).map_err(|_| CriticError::UnknownTemplate(template_id.to_string()))?;
    Ok(CriticQuery {
        content_text: content_text.to_string(),
        template_id: template_id.to_string(),
        include_geometry,
    })
}

impl CriticQuery {
    /// Prompt text sent to an external critic.
    pub fn text(&self) -> String {
        let mut s = String::from(
            "The images are renders of one 3D object seen from several angles. \
             Judge the object as a whole and answer whether every point below holds.\n",
        );
        s.push_str(&format!(
            "1. Content Match: the object is {}.\n",
            self.content_text
        ));
        if self.include_geometry {
            s.push_str(
                "2. Geometric Quality: the object is one solid, connected body whose \
                 shape agrees between the views, without detached pieces or duplicated faces.\n",
            );
        }
        s.push_str(ANSWER_INSTRUCTION);
        s
    }
}

/// Logits, log-odds reward and Yes probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticVerdict {
    pub z_yes: f64,
    pub z_no: f64,
    pub reward: f64,
    pub p_yes: f64,
}

impl CriticVerdict {
    pub fn from_logits(z_yes: f64, z_no: f64) -> Result<Self> {
        if !z_yes.is_finite() || !z_no.is_finite() {
            return Err(CriticError::NonFinite);
        }
        Ok(Self {
            z_yes,
            z_no,
            reward: z_yes - z_no,
            p_yes: tensor::softmax2_values(z_yes, z_no).0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Yes,
    No,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Yes => "Yes",
            Decision::No => "No",
        }
    }
}

/// Yes iff the reward is strictly positive.
pub fn hard_decision(verdict: &CriticVerdict) -> Decision {
    if verdict.reward > 0.0 {
        Decision::Yes
    } else {
        Decision::No
    }
}

/// Logit scales and connectedness relaxation of the toy critic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Sigmoid sharpness of the soft occupancy.
    pub kappa: f64,
    /// Density above which a voxel counts as occupied.
    pub threshold: f64,
}

impl Default for CriticParams {
    fn default() -> Self {
        Self {
            a: 4.0,
            b: 4.0,
            c: 8.0,
            kappa: 20.0,
            threshold: 1.0,
        }
    }
}

/// A toy verdict still attached to its tape.
#[derive(Clone, Copy)]
pub struct ToyVerdict<'t> {
    pub z_yes: Var<'t>,
    pub z_no: Var<'t>,
    pub reward: Var<'t>,
    pub p_yes: Var<'t>,
    pub content: Var<'t>,
    pub geometry: Option<Var<'t>>,
}

impl ToyVerdict<'_> {
    pub fn verdict(&self) -> CriticVerdict {
        CriticVerdict {
            z_yes: self.z_yes.item(),
            z_no: self.z_no.item(),
            reward: self.reward.item(),
            p_yes: self.p_yes.item(),
        }
    }
}

impl CriticParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.a, self.b, self.c, self.kappa, self.threshold]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(CriticError::Params(format!("{self:?}")))
        }
    }

    /// Scores `views` against `query`.
    pub fn eval<'t>(&self, query: &CriticQuery, views: &ViewSet<'t>) -> Result<ToyVerdict<'t>> {
        self.validate()?;
        let template = template_for(&query.template_id, &views.cameras)?;
        let content = content_score(views, &template)?;
        let (z_yes, geometry) = if query.include_geometry {
            let g = geometry_score(views, self.kappa, self.threshold)?;
            (content.scale(self.a)?.add(g.scale(self.b)?)?, Some(g))
        } else {
            (content.scale(self.a + self.b)?, None)
        };
        let z_no = z_yes.scale(-1.0 / (self.a + self.b))?.offset(1.0)?.scale(self.c)?;
        let reward = z_yes.sub(z_no)?;
        let (p_yes, _) = tensor::softmax2(z_yes, z_no)?;
        Ok(ToyVerdict {
            z_yes,
            z_no,
            reward,
            p_yes,
            content,
            geometry,
        })
    }
}

/// The toy critic with default scales.
pub fn toy_critic_eval<'t>(query: &CriticQuery, views: &ViewSet<'t>) -> Result<ToyVerdict<'t>> {
    CriticParams::default().eval(query, views)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{concept, generate_shape};
    use crate::render::{make_view_ring, render_views, DensityGrid};
    use crate::rng;
    use crate::tensor::Tape;

    #[test]
    fn query_text_structure() {
        let q = build_query("a sphere", "sphere", true).unwrap();
        let t = q.text();
        assert!(t.contains("Content Match") && t.contains("Geometric Quality"));
        assert_eq!(t.lines().last(), Some(ANSWER_INSTRUCTION));
        let q = build_query("a sphere", "sphere", false).unwrap();
        let t = q.text();
        assert!(t.contains("Content Match") && !t.contains("Geometric Quality"));
        assert_eq!(t.lines().last(), Some(ANSWER_INSTRUCTION));
        assert!(matches!(
            build_query("x", "pyramid", true),
            Err(CriticError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn decisions() {
        let v = |r: f64| CriticVerdict::from_logits(r, 0.0).unwrap();
        assert_eq!(hard_decision(&v(2.0)), Decision::Yes);
        assert_eq!(hard_decision(&v(-0.001)), Decision::No);
        assert_eq!(hard_decision(&v(0.0)), Decision::No);
    }

    #[test]
    fn verdict_identities() {
        for (zy, zn) in [(8.0, 0.0), (-3.5, 2.25), (0.1, 0.1), (40.0, -40.0)] {
            let v = CriticVerdict::from_logits(zy, zn).unwrap();
            assert_eq!(v.reward, zy - zn);
            assert_eq!(v.p_yes, tensor::sigmoid(v.reward));
            let (py, pn) = tensor::softmax2_values(zy, zn);
            assert!((py.ln() - pn.ln() - v.reward).abs() < 1e-12);
            let shifted = CriticVerdict::from_logits(zy + 7.0, zn + 7.0).unwrap();
            assert_eq!(shifted.reward, v.reward);
            assert_eq!(shifted.p_yes, v.p_yes);
        }
        assert!(matches!(
            CriticVerdict::from_logits(f64::INFINITY, 0.0),
            Err(CriticError::NonFinite)
        ));
    }

    fn sphere_views_verdict(include_geometry: bool) -> CriticVerdict {
        let cams = make_view_ring(4, 0.26, 32, 32).unwrap();
        let spec = concept("sphere").unwrap().without_jitter();
        let g = generate_shape(&spec, 32, &mut rng::stream(0, "t")).unwrap();
        let tape = Tape::new();
        let views = render_views(&g.record(&tape).unwrap(), &cams).unwrap();
        let q = build_query("a sphere", "sphere", include_geometry).unwrap();
        toy_critic_eval(&q, &views).unwrap().verdict()
    }

    #[test]
    fn template_shape_scores_high() {
        let v = sphere_views_verdict(true);
        assert!(v.reward > 7.0, "{v:?}");
        assert!(v.p_yes > 0.999);
        let v = sphere_views_verdict(false);
        assert!(v.reward > 7.0, "{v:?}");
    }

    #[test]
    fn empty_grid_scores_low() {
        let cams = make_view_ring(4, 0.26, 16, 16).unwrap();
        let tape = Tape::new();
        let g = DensityGrid::empty(16).unwrap();
        let views = render_views(&g.record(&tape).unwrap(), &cams).unwrap();
        let tpl = template_for("cube", &cams).unwrap();
        assert!(content_score(&views, &tpl).unwrap().item() < 0.05);
    }

    #[test]
    fn geometry_needs_two_views() {
        let cams = make_view_ring(1, 0.26, 16, 16).unwrap();
        let tape = Tape::new();
        let g = DensityGrid::empty(8).unwrap();
        let views = render_views(&g.record(&tape).unwrap(), &cams).unwrap();
        assert!(matches!(
            geometry_score(&views, 20.0, 1.0),
            Err(CriticError::TooFewViews(1))
        ));
        let q = build_query("a sphere", "sphere", true).unwrap();
        assert!(toy_critic_eval(&q, &views).is_err());
    }

    #[test]
    fn template_count_mismatch_rejected() {
        let cams = make_view_ring(4, 0.26, 16, 16).unwrap();
        let tpl = template_for("sphere", &cams[..2]).unwrap();
        let tape = Tape::new();
        let g = DensityGrid::empty(8).unwrap();
        let views = render_views(&g.record(&tape).unwrap(), &cams).unwrap();
        assert!(matches!(
            content_score(&views, &tpl),
            Err(CriticError::ViewCount { views: 4, masks: 2 })
        ));
    }
}
