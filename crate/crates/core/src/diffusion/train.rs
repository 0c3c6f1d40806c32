//! Denoising score matching in noise-prediction form.

use std::sync::mpsc;
use std::thread;

use rand::Rng as _;

use super::{forward_noise_into, Denoiser, DiffusionError, DiffusionSchedule, Result};
use crate::optim::{clip_global_norm, Adam, Sgd};
use crate::rng::{self, Rng};
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Batches prepared ahead of the optimizer.
pub const QUEUE_DEPTH: usize = 4;

/// One noised minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmBatch {
    /// `[B * dim]` noised samples.
    pub x_t: Vec<f64>,
    /// `[B * dim]` noise that produced them.
    pub eps: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub labels: Vec<Option<usize>>,
    /// `λ(t) / σ(t)²` per row.
    pub weights: Vec<f64>,
}

/// Draws `t ~ U{1..T}` and `ε ~ N(0, I)` for each `(x0, label)`.
pub fn draw_batch(samples: &[(&Tensor, Option<usize>)], sched: &DiffusionSchedule, rng: &mut Rng) -> DsmBatch {
    let dim = samples.first().map_or(0, |(x, _)| x.len());
    let b = samples.len();
    let mut batch = DsmBatch {
        x_t: vec![0.0; b * dim],
        eps: Vec::with_capacity(b * dim),
        sigmas: Vec::with_capacity(b),
        labels: Vec::with_capacity(b),
        weights: Vec::with_capacity(b),
    };
    for (row, (x0, y)) in samples.iter().enumerate() {
        let t = rng.random_range(1..=sched.len());
        let s = sched.sigma(t);
        let eps = rng::normal_vec(rng, dim);
        forward_noise_into(x0.data(), s, &eps, &mut batch.x_t[row * dim..(row + 1) * dim]);
        batch.eps.extend_from_slice(&eps);
        batch.sigmas.push(s);
        batch.labels.push(*y);
        batch.weights.push(sched.dsm_weight(t) / (s * s));
    }
    batch
}

/// Mean over rows of `λ/σ² · ‖ε̂ − ε‖²`, recorded on `tape`.
pub fn dsm_loss<'t>(model: &Denoiser, tape: &'t Tape, params: &[Var<'t>], batch: &DsmBatch) -> Result<Var<'t>> {
    let b = batch.sigmas.len();
    if b == 0 {
        return Err(DiffusionError::EmptyDataset);
    }
    let d = model.sample_dim();
    let out = model.forward(tape, params, &batch.x_t, &batch.sigmas, &batch.labels)?;
    let eps = tape.constant(Tensor::new(&[b, d], batch.eps.clone())?);
    let w: Vec<f64> = batch
        .weights
        .iter()
        .flat_map(|&w| std::iter::repeat_n(w / b as f64, d))
        .collect();
    let w = tape.constant(Tensor::new(&[b, d], w)?);
    Ok(out.sub(eps)?.square()?.mul(w)?.sum()?)
}

/// Tape-free value of [`dsm_loss`].
pub fn dsm_loss_value(model: &Denoiser, batch: &DsmBatch) -> Result<f64> {
    let d = model.sample_dim();
    let pred = model.predict_batch(&batch.x_t, &batch.sigmas, &batch.labels)?;
    let b = batch.sigmas.len() as f64;
    Ok(pred
        .chunks(d)
        .zip(batch.eps.chunks(d))
        .zip(&batch.weights)
        .map(|((p, e), w)| w * p.iter().zip(e).map(|(p, e)| (p - e) * (p - e)).sum::<f64>())
        .sum::<f64>()
        / b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub lr: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: Option<f64>,

    /// Probability of training a row unconditionally.
    pub label_dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 32,
            optimizer: Optimizer::Sgd,
            lr: 1e-3,
            momentum: 0.9,
            clip_norm: None,
            label_dropout: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for the 16³ grid prior, whose summed loss over 4096 values
    /// needs a norm ceiling at the shared learning rate.
    pub fn grid() -> Self {
        Self {
            steps: 1500,
            clip_norm: Some(1.0),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

enum OptState {
    Sgd(Sgd),
    Adam(Adam),
}

/// Per-step training losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub losses: Vec<f64>,
}

impl LossCurve {
    /// Mean of the first `window` losses.
    pub fn head(&self, window: usize) -> f64 {
        mean(&self.losses[..window.min(self.losses.len())])
    }

    /// Mean of the last `window` losses.
    pub fn tail(&self, window: usize) -> f64 {
        mean(&self.losses[self.losses.len().saturating_sub(window)..])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{i},{l}\n"));
        }
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Trains `model` on `(sample, label)` pairs already in sample space (see
/// [`Denoiser::prepare`]). A producer thread draws minibatches ahead of the
/// optimizer through a bounded queue; the run depends only on `cfg.seed`.
pub fn train_prior(
    model: &mut Denoiser,
    data: &[(Tensor, usize)],
    sched: &DiffusionSchedule,
    cfg: &TrainConfig,
) -> Result<LossCurve> {
    if data.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    let shape = model.sample_shape();
    for (x, y) in data {
        if x.shape() != shape.as_slice() {
            return Err(DiffusionError::Shape(format!("sample {:?} vs prior {shape:?}", x.shape())));
        }
        model.check_label(Some(*y))?;
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(0.0..=1.0).contains(&cfg.label_dropout) {
        return Err(DiffusionError::Config(format!("{cfg:?}")));
    }
    let mut curve = LossCurve::default();
    if cfg.steps == 0 {
        return Ok(curve);
    }
    let mut opt = match cfg.optimizer {
        Optimizer::Sgd => OptState::Sgd(Sgd::new(cfg.lr, cfg.momentum)),
        Optimizer::Adam => OptState::Adam(Adam::new(cfg.lr)),
    };
    thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<DsmBatch>(QUEUE_DEPTH);
        scope.spawn(move || {
            let mut rng = rng::stream(cfg.seed, "train");
            for _ in 0..cfg.steps {
                let rows: Vec<(&Tensor, Option<usize>)> = (0..cfg.batch_size)
                    .map(|_| {
                        let (x, y) = &data[rng.random_range(0..data.len())];
                        let keep = rng.random::<f64>() >= cfg.label_dropout;
                        (x, keep.then_some(*y))
                    })
                    .collect();
                if tx.send(draw_batch(&rows, sched, &mut rng)).is_err() {
                    return;
                }
            }
        });
        for step in 0..cfg.steps {
            let batch = rx.recv().expect("producer sends every step");
            let tape = Tape::new();
            let params: Vec<Var> = model.params().iter().map(|p| tape.leaf(p.clone())).collect();
            let diverged = |e: DiffusionError| match e {
                DiffusionError::Tensor(TensorError::NonFinite { .. }) => DiffusionError::Diverged { step },
                e => e,
            };
            let loss = dsm_loss(model, &tape, &params, &batch).map_err(diverged)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(DiffusionError::Diverged { step });
            }
            let grads = tape.backward(loss).map_err(|e| diverged(e.into()))?;
            let mut g: Vec<Vec<f64>> = params.iter().map(|p| grads.data(*p)).collect();
            if g.iter().flatten().any(|v| !v.is_finite()) {
                return Err(DiffusionError::Diverged { step });
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut g, c);
            }
            let mut ps: Vec<&mut [f64]> = model.params_mut().iter_mut().map(|t| t.data_mut()).collect();
            let gs: Vec<&[f64]> = g.iter().map(Vec::as_slice).collect();
            match &mut opt {
                OptState::Sgd(o) => o.step(&mut ps, &gs),
                OptState::Adam(o) => o.step(&mut ps, &gs),
            }
            curve.losses.push(value);
        }
        Ok(curve)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::PriorKind;

    fn tiny() -> Denoiser {
        Denoiser::new(PriorKind::Grid { resolution: 2 }, 2, 16, 0).unwrap()
    }

    #[test]
    fn zero_steps_leave_params() {
        let mut m = tiny();
        let before = m.clone();
        let data = vec![(Tensor::full(&[2, 2, 2], 0.5).unwrap(), 0)];
        let cfg = TrainConfig {
            steps: 0,
            ..Default::default()
        };
        let c = train_prior(&mut m, &data, &DiffusionSchedule::training(), &cfg).unwrap();
        assert!(c.losses.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn same_seed_same_curve() {
        let data = vec![
            (Tensor::full(&[2, 2, 2], 0.0).unwrap(), 0),
            (Tensor::full(&[2, 2, 2], 1.0).unwrap(), 1),
        ];
        let cfg = TrainConfig {
            steps: 50,
            batch_size: 4,
            ..Default::default()
        };
        let s = DiffusionSchedule::training();
        let (mut a, mut b) = (tiny(), tiny());
        let ca = train_prior(&mut a, &data, &s, &cfg).unwrap();
        let cb = train_prior(&mut b, &data, &s, &cfg).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
        assert!(ca.to_csv().starts_with("step,loss\n0,"));
    }

    #[test]
    fn divergence_reports_step() {
        let data = vec![(Tensor::full(&[2, 2, 2], 1.0).unwrap(), 0)];
        let cfg = TrainConfig {
            steps: 200,
            batch_size: 4,
            lr: 1e6,
            ..Default::default()
        };
        let mut m = tiny();
        match train_prior(&mut m, &data, &DiffusionSchedule::training(), &cfg) {
            Err(DiffusionError::Diverged { step }) => assert!(step < 200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn loss_invariant_to_batch_order() {
        let m = tiny();
        let s = DiffusionSchedule::training();
        let x0 = Tensor::full(&[2, 2, 2], 0.3).unwrap();
        let x1 = Tensor::full(&[2, 2, 2], 0.9).unwrap();
        let b = draw_batch(&[(&x0, Some(0)), (&x1, None)], &s, &mut rng::stream(0, "t"));
        let mut r = b.clone();
        let d = 8;
        r.x_t = [&b.x_t[d..], &b.x_t[..d]].concat();
        r.eps = [&b.eps[d..], &b.eps[..d]].concat();
        r.sigmas.reverse();
        r.labels.reverse();
        r.weights.reverse();
        let (la, lb) = (dsm_loss_value(&m, &b).unwrap(), dsm_loss_value(&m, &r).unwrap());
        assert!((la - lb).abs() < 1e-12 * la.abs());
    }
}
