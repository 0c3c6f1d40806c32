//! Noising, ancestral sampling and score distillation.

use super::{Denoiser, DiffusionError, DiffusionSchedule, Result};
use crate::render::{self, Camera, GridVars};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

/// `x_t = x0 + σ(t) ε`.
pub fn forward_noise(x0: &Tensor, t: usize, eps: &Tensor, sched: &DiffusionSchedule) -> Result<Tensor> {
    sched.check_step(t)?;
    if x0.shape() != eps.shape() {
        return Err(DiffusionError::Shape(format!(
            "noise {:?} vs sample {:?}",
            eps.shape(),
            x0.shape()
        )));
    }
    let mut out = vec![0.0; x0.len()];
    forward_noise_into(x0.data(), sched.sigma(t), eps.data(), &mut out);
    Ok(Tensor::new(x0.shape(), out)?)
}

pub(crate) fn forward_noise_into(x0: &[f64], sigma: f64, eps: &[f64], out: &mut [f64]) {
    for ((o, x), e) in out.iter_mut().zip(x0).zip(eps) {
        *o = x + sigma * e;
    }
}

/// `z_{t-1} = z_t - (1 - r)(z_t - x̂0) + σ_{t-1} sqrt(1 - r) η` with
/// `r = σ_{t-1}² / σ_t²`.
pub fn ancestral_update(z_t: &[f64], x0_hat: &[f64], sigma_prev: f64, sigma_t: f64, eta: &[f64]) -> Vec<f64> {
    let r = (sigma_prev * sigma_prev) / (sigma_t * sigma_t);
    let keep = 1.0 - r;
    let noise = sigma_prev * keep.max(0.0).sqrt();
    z_t.iter()
        .zip(x0_hat)
        .zip(eta)
        .map(|((z, x), e)| z - keep * (z - x) + noise * e)
        .collect()
}

/// Result of one reverse step: the denoised estimate and the next state.
#[derive(Debug, Clone, PartialEq)]
pub struct AncestralStep {
    pub x0_hat: Tensor,
    pub next: Tensor,
}

/// One reverse step from `z_t`. At `t = 1` the next state is `x̂0` and no
/// noise is drawn.
pub fn ancestral_step(
    model: &Denoiser,
    z_t: &Tensor,
    t: usize,
    label: Option<usize>,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
) -> Result<AncestralStep> {
    sched.check_step(t)?;
    let s = sched.sigma(t);
    let eps_hat = model.predict(z_t, s, label)?;
    let x0: Vec<f64> = z_t
        .data()
        .iter()
        .zip(eps_hat.data())
        .map(|(z, e)| z - s * e)
        .collect();
    let x0_hat = Tensor::new(z_t.shape(), x0)?;
    if t == 1 {
        return Ok(AncestralStep {
            next: x0_hat.clone(),
            x0_hat,
        });
    }
    let eta = rng::normal_vec(rng, z_t.len());
    let next = ancestral_update(z_t.data(), x0_hat.data(), sched.sigma(t - 1), s, &eta);
    Ok(AncestralStep {
        next: Tensor::new(z_t.shape(), next)?,
        x0_hat,
    })
}

/// Initial state `μ + σ_max · N(0, I)`.
pub fn initial_state(model: &Denoiser, sched: &DiffusionSchedule, rng: &mut Rng) -> Result<Tensor> {
    let (mu, s) = (model.kind.data_mean(), sched.sigma_max());
    let z = rng::normal_vec(rng, model.sample_dim())
        .into_iter()
        .map(|v| mu + s * v)
        .collect();
    Ok(Tensor::new(&model.sample_shape(), z)?)
}

/// Full unguided chain `t = T..1`, returning the final `x̂0`.
pub fn sample(model: &Denoiser, label: Option<usize>, sched: &DiffusionSchedule, rng: &mut Rng) -> Result<Tensor> {
    model.check_label(label)?;
    let mut z = initial_state(model, sched, rng)?;
    for t in (1..=sched.len()).rev() {
        z = ancestral_step(model, &z, t, label, sched, rng)?.next;
    }
    Ok(z)
}

/// Gradient of the distillation objective with respect to a grid's raw
/// fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SdsGradient {
    pub raw_density: Vec<f64>,
    pub raw_albedo: Vec<f64>,
    /// `‖ε̂ − ε‖`.
    pub residual_norm: f64,
}

/// Renders `grid` from `cam`, noises the pooled render with `eps` at step
/// `t`, and pulls `w(t) (ε̂ − ε)` back through the render. The prediction is
/// treated as a constant.
pub fn sds_gradient(
    model: &Denoiser,
    grid: &GridVars<'_>,
    cam: &Camera,
    label: Option<usize>,
    t: usize,
    eps: &Tensor,
    sched: &DiffusionSchedule,
) -> Result<SdsGradient> {
    sched.check_step(t)?;
    let tape = grid.density.tape();
    let view = render::render_view(grid, cam)?;
    let x = model.prepare_var(view.rgb)?;
    let x_t = forward_noise(&x.value(), t, eps, sched)?;
    let eps_hat = model.predict(&x_t, sched.sigma(t), label)?;
    let w = sched.sds_weight(t);
    let residual: Vec<f64> = eps_hat.data().iter().zip(eps.data()).map(|(a, b)| a - b).collect();
    let residual_norm = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
    let cot = Tensor::new(eps.shape(), residual.iter().map(|r| w * r).collect())?;
    let grads = tape.vjp(x, &cot)?;
    Ok(SdsGradient {
        raw_density: grads.data(grid.raw_density),
        raw_albedo: grads.data(grid.raw_albedo),
        residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::PriorKind;

    #[test]
    fn forward_noise_examples() {
        let s = DiffusionSchedule::training();
        let x0 = Tensor::vector(vec![0.2, -0.4]);
        let zero = Tensor::vector(vec![0.0, 0.0]);
        assert_eq!(forward_noise(&x0, 7, &zero, &s).unwrap(), x0);
        let e = Tensor::vector(vec![1.5, -0.5]);
        let out = forward_noise(&zero, 1000, &e, &s).unwrap();
        assert_eq!(out.data(), &[3.0, -1.0]);
        assert!(forward_noise(&x0, 0, &e, &s).is_err());
        assert!(forward_noise(&x0, 1, &Tensor::vector(vec![1.0]), &s).is_err());
    }

    #[test]
    fn degenerate_update_is_identity() {
        let z = [0.3, -1.2, 5.0];
        let x0 = [1.0, 2.0, 3.0];
        let eta = [0.7, 0.1, -2.0];
        assert_eq!(ancestral_update(&z, &x0, 0.4, 0.4, &eta), z.to_vec());
    }

    #[test]
    fn chain_is_reproducible() {
        let m = Denoiser::new(PriorKind::Grid { resolution: 3 }, 2, 8, 4).unwrap();
        let s = DiffusionSchedule::sampling();
        let a = sample(&m, Some(1), &s, &mut rng::stream(5, "sample")).unwrap();
        let b = sample(&m, Some(1), &s, &mut rng::stream(5, "sample")).unwrap();
        assert_eq!(a, b);
        let mut r = rng::stream(0, "s");
        assert!(ancestral_step(&m, &a, 51, None, &s, &mut r).is_err());
    }
}
