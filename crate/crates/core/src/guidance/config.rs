use serde::{Deserialize, Serialize};

use super::{GuidanceError, Result};
use crate::critic::CriticParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnealShape {
    Exponential,
    Linear,
}

/// Reward weights shared by both generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceConfig {
    pub lambda_vlm_init: f64,
    pub lambda_vlm_final: f64,
    pub anneal_shape: AnnealShape,
    pub total_steps: usize,
    pub lambda_ttg: f64,
    pub views_per_reward: usize,
    /// Scales of the toy critic behind the reward; configured separately.
    #[serde(skip)]
    pub critic: CriticParams,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            lambda_vlm_init: 10.0,
            lambda_vlm_final: 0.1,
            anneal_shape: AnnealShape::Exponential,
            total_steps: 500,
            lambda_ttg: 0.5,
            views_per_reward: 4,
            critic: CriticParams::default(),
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let ok = nonneg(self.lambda_vlm_init)
            && nonneg(self.lambda_vlm_final)
            && nonneg(self.lambda_ttg)
            && self.lambda_vlm_init >= self.lambda_vlm_final
            && self.total_steps >= 1
            && self.views_per_reward >= 1;
        if ok {
            Ok(())
        } else {
            Err(GuidanceError::Config(format!("{self:?}")))
        }?;
        Ok(self.critic.validate()?)
    }
}

/// `λ_VLM` at `step`: geometric interpolation from init to final when the
/// final value is positive and the shape is exponential, linear otherwise.
pub fn anneal_lambda(cfg: &GuidanceConfig, step: usize) -> Result<f64> {
    cfg.validate()?;
    if step >= cfg.total_steps {
        return Err(GuidanceError::StepRange {
            step,
            total: cfg.total_steps,
        });
    }
    let (a, b) = (cfg.lambda_vlm_init, cfg.lambda_vlm_final);
    if cfg.total_steps == 1 {
        return Ok(a);
    }
    if step == cfg.total_steps - 1 {
        return Ok(b);
    }
    let u = step as f64 / (cfg.total_steps - 1) as f64;
    Ok(match cfg.anneal_shape {
        AnnealShape::Exponential if b > 0.0 => a * (b / a).powf(u),
        _ => a + (b - a) * u,
    })
}

/// Optimizer and camera settings of a distillation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdsConfig {
    pub guidance: GuidanceConfig,
    pub lr: f64,
    pub momentum: f64,
    /// Reward evaluation period in steps.
    pub reward_every: usize,
    /// Camera elevation in degrees.
    pub elevation_deg: f64,
    /// Side of the critic's views.
    pub critic_size: usize,
    /// Ray samples of every render.
    pub samples: usize,
}

impl Default for SdsConfig {
    fn default() -> Self {
        Self {
            guidance: GuidanceConfig::default(),
            lr: 100.0,
            momentum: 0.9,
            reward_every: 5,
            elevation_deg: 15.0,
            critic_size: 32,
            samples: 64,
        }
    }
}

impl SdsConfig {
    pub fn validate(&self) -> Result<()> {
        self.guidance.validate()?;
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.reward_every >= 1
            && self.elevation_deg.abs() < 90.0
            && self.critic_size >= 8
            && self.samples >= 1;
        if ok {
            Ok(())
        } else {
            Err(GuidanceError::Config(format!("{self:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(init: f64, fin: f64, shape: AnnealShape, total: usize) -> GuidanceConfig {
        GuidanceConfig {
            lambda_vlm_init: init,
            lambda_vlm_final: fin,
            anneal_shape: shape,
            total_steps: total,
            ..Default::default()
        }
    }

    #[test]
    fn endpoints_and_geometric_midpoint() {
        let c = cfg(10.0, 0.1, AnnealShape::Exponential, 1001);
        assert_eq!(anneal_lambda(&c, 0).unwrap(), 10.0);
        assert_eq!(anneal_lambda(&c, 1000).unwrap(), 0.1);
        assert!((anneal_lambda(&c, 500).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            anneal_lambda(&c, 1001),
            Err(GuidanceError::StepRange { step: 1001, .. })
        ));
    }

    #[test]
    fn zero_final_falls_back_to_linear() {
        let c = cfg(4.0, 0.0, AnnealShape::Exponential, 5);
        let v: Vec<f64> = (0..5).map(|s| anneal_lambda(&c, s).unwrap()).collect();
        assert_eq!(v, vec![4.0, 3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn single_step_returns_init() {
        let c = cfg(3.0, 1.0, AnnealShape::Linear, 1);
        assert_eq!(anneal_lambda(&c, 0).unwrap(), 3.0);
    }

    #[test]
    fn rejects_growth_and_empty_runs() {
        assert!(cfg(1.0, 2.0, AnnealShape::Linear, 10).validate().is_err());
        assert!(cfg(1.0, 0.5, AnnealShape::Linear, 0).validate().is_err());
        let c = GuidanceConfig {
            views_per_reward: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
