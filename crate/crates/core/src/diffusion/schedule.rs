//! Geometric variance-exploding noise schedule.

use super::{DiffusionError, Result};

/// Noise levels `σ(1) < ... < σ(T)` with per-step loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    sigmas: Vec<f64>,
    dsm_weights: Vec<f64>,
    sds_weights: Vec<f64>,
}

pub const SIGMA_MIN: f64 = 0.01;
pub const SIGMA_MAX: f64 = 2.0;
pub const TRAIN_STEPS: usize = 1000;
pub const SAMPLE_STEPS: usize = 50;

impl DiffusionSchedule {
    /// `σ(t) = σ_min (σ_max / σ_min)^((t - 1) / (T - 1))`, `λ(t) = σ(t)²`,
    /// `w(t) = 1`.
    pub fn new(steps: usize, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(DiffusionError::Schedule(format!("need T >= 2, got {steps}")));
        }
        if !(sigma_min > 0.0 && sigma_max > sigma_min && sigma_max.is_finite()) {
            return Err(DiffusionError::Schedule(format!(
                "need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}"
            )));
        }
        let ratio = (sigma_max / sigma_min).ln();
        let sigmas: Vec<f64> = (0..steps)
            .map(|i| {
                if i == steps - 1 {
                    sigma_max
                } else {
                    sigma_min * (ratio * i as f64 / (steps - 1) as f64).exp()
                }
            })
            .collect();
        let dsm_weights = sigmas.iter().map(|s| s * s).collect();
        Ok(Self {
            sigmas,
            dsm_weights,
            sds_weights: vec![1.0; steps],
        })
    }

    pub fn training() -> Self {
        Self::new(TRAIN_STEPS, SIGMA_MIN, SIGMA_MAX).expect("valid constants")
    }

    pub fn sampling() -> Self {
        Self::new(SAMPLE_STEPS, SIGMA_MIN, SIGMA_MAX).expect("valid constants")
    }

    /// Replaces `w(t)` with `f(t, σ(t))`; weights must be finite and
    /// non-negative.
    pub fn with_sds_weight(mut self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let w: Vec<f64> = (1..=self.len()).map(|t| f(t, self.sigma(t))).collect();
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DiffusionError::Schedule("SDS weights must be finite and >= 0".into()));
        }
        self.sds_weights = w;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(DiffusionError::StepRange { t, steps: self.len() });
        }
        Ok(())
    }

    /// `σ(t)` for `1 <= t <= T`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn dsm_weight(&self, t: usize) -> f64 {
        self.dsm_weights[t - 1]
    }

    pub fn sds_weight(&self, t: usize) -> f64 {
        self.sds_weights[t - 1]
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[self.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_monotone() {
        let s = DiffusionSchedule::training();
        assert_eq!(s.sigma(1), SIGMA_MIN);
        assert_eq!(s.sigma(1000), SIGMA_MAX);
        assert!(s.sigmas().windows(2).all(|w| w[1] > w[0]));
        assert!((1..=1000).all(|t| s.dsm_weight(t) > 0.0 && s.sds_weight(t) > 0.0));
    }

    #[test]
    fn log_sigma_affine() {
        let s = DiffusionSchedule::sampling();
        let l: Vec<f64> = s.sigmas().iter().map(|v| v.ln()).collect();
        let step = l[1] - l[0];
        for w in l.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(DiffusionSchedule::new(1, 0.01, 2.0).is_err());
        assert!(DiffusionSchedule::new(10, 2.0, 0.01).is_err());
        assert!(DiffusionSchedule::new(10, 0.0, 1.0).is_err());
        let s = DiffusionSchedule::sampling();
        assert!(s.check_step(0).is_err() && s.check_step(51).is_err());
        assert!(s.clone().with_sds_weight(|_, _| -1.0).is_err());
    }
}
