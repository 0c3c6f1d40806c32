//! Residual MLP noise predictor conditioned on noise level and label.
//!
//! `h1 = relu((x W1 + b1) ⊙ (1 + c G1))`,
//! `h2 = relu((h1 W2 + b2) ⊙ (1 + c G2)) + h1`,
//! `F = h2 W3 + b3 + (x Ws) ⊙ (1 + c Gs)`, the last term for image priors
//! only
//! where `c = embed(ln σ) ⊕ onehot(label)`, `x = c_in(σ) (sample - μ) ⊕ c`, and
//! `ε̂ = a(σ) (sample - μ) - b(σ) F` with `a = σ / (σ² + σ_d²)`,
//! `b = σ_d / sqrt(σ² + σ_d²)`. With this output map the score-matching
//! residual `ε̂ - ε` equals `b(σ)` times a unit-scale regression residual for
//! `F` at every noise level.

use rand_distr::{Distribution, Normal};

use super::{DiffusionError, Result};
use crate::checkpoint::Checkpoint;
use crate::dataset::{softplus_inv, SIGMA_FLOOR, SIGMA_HI};
use crate::rng;
use crate::tensor::{gemm_nn, Tape, Tensor, Var};

pub const EMBED_DIM: usize = 16;

/// What the prior models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorKind {
    /// RGB renders of `image_size`² pixels, average-pooled to `pooled`²
    /// before they reach the network.
    Image { image_size: usize, pooled: usize },
    /// Raw density grids of side `resolution`, mapped affinely so that empty
    /// space sits at 0 and solid interior at 1.
    Grid { resolution: usize },
}

impl PriorKind {
    /// Center `μ` of clean samples.
    pub fn data_mean(&self) -> f64 {
        match self {
            PriorKind::Image { .. } => 0.5,
            PriorKind::Grid { .. } => 0.0,
        }
    }

    /// Spread `σ_d` of clean samples around [`PriorKind::data_mean`].
    pub fn sigma_data(&self) -> f64 {
        match self {
            PriorKind::Image { .. } => 0.5,
            PriorKind::Grid { .. } => 0.25,
        }
    }
}

/// Raw density that maps to latent 0.
pub fn grid_shift() -> f64 {
    softplus_inv(SIGMA_FLOOR)
}

/// Raw density span between latent 0 and latent 1.
pub fn grid_scale() -> f64 {
    softplus_inv(SIGMA_HI) - grid_shift()
}

pub fn encode_grid(raw: f64) -> f64 {
    (raw - grid_shift()) / grid_scale()
}

pub fn decode_grid(z: f64) -> f64 {
    grid_shift() + grid_scale() * z
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub kind: PriorKind,
    pub n_labels: usize,
    pub width: usize,
    /// `w1, b1, g1, w2, b2, g2, w3, b3`, then `ws, gs` for image priors.
    params: Vec<Tensor>,
}

const PARAM_NAMES: [&str; 10] = ["w1", "b1", "g1", "w2", "b2", "g2", "w3", "b3", "ws", "gs"];

fn embed(sigma: f64, out: &mut [f64]) {
    let l = sigma.ln();
    for k in 0..EMBED_DIM / 2 {
        let f = 0.5 * 2f64.powf(k as f64 / 2.0);
        out[2 * k] = (l * f).sin();
        out[2 * k + 1] = (l * f).cos();
    }
}

fn c_in(sigma: f64, sd: f64) -> f64 {
    1.0 / (sigma * sigma + sd * sd).sqrt()
}

/// `(a, b)` of the output map.
fn output_coeffs(sigma: f64, sd: f64) -> (f64, f64) {
    let v = sigma * sigma + sd * sd;
    (sigma / v, sd / v.sqrt())
}

impl Denoiser {
    /// He-initialized network drawn from `seed`.
    pub fn new(kind: PriorKind, n_labels: usize, width: usize, seed: u64) -> Result<Self> {
        match kind {
            PriorKind::Image { image_size, pooled } => {
                if pooled == 0 || image_size < 8 || image_size % pooled != 0 {
                    return Err(DiffusionError::Shape(format!(
                        "image size {image_size} not a multiple of pooled size {pooled}"
                    )));
                }
            }
            PriorKind::Grid { resolution } if resolution < 2 => {
                return Err(DiffusionError::Shape(format!("grid resolution {resolution}")));
            }
            PriorKind::Grid { .. } => {}
        }
        if width == 0 {
            return Err(DiffusionError::Shape("zero width".into()));
        }
        let mut m = Self {
            kind,
            n_labels,
            width,
            params: Vec::new(),
        };
        let (d, i, c, w) = (m.sample_dim(), m.input_dim(), m.cond_dim(), width);
        let mut rng = rng::stream(seed, "denoiser-init");
        let mut dense = |fan_in: usize, fan_out: usize, gain: f64| {
            let n = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
            let data = (0..fan_in * fan_out).map(|_| n.sample(&mut rng)).collect();
            Tensor::new(&[fan_in, fan_out], data)
        };
        m.params = vec![
            dense(i, w, 2.0)?,
            Tensor::zeros(&[w])?,
            Tensor::zeros(&[c, w])?,
            dense(w, w, 2.0)?,
            Tensor::zeros(&[w])?,
            Tensor::zeros(&[c, w])?,
            dense(w, d, 1.0)?,
            Tensor::zeros(&[d])?,
        ];
        if m.has_skip() {
            m.params.push(Tensor::zeros(&[i, d])?);
            m.params.push(Tensor::zeros(&[c, d])?);
        }
        Ok(m)
    }

    /// The 2D prior on 64×64 renders pooled to 8×8, width 256.
    pub fn image_prior(n_labels: usize, seed: u64) -> Result<Self> {
        Self::new(
            PriorKind::Image {
                image_size: 64,
                pooled: 8,
            },
            n_labels,
            256,
            seed,
        )
    }

    /// The native 3D prior on 16³ grids, width 512.
    pub fn grid_prior(n_labels: usize, seed: u64) -> Result<Self> {
        Self::new(PriorKind::Grid { resolution: 16 }, n_labels, 512, seed)
    }

    pub fn sample_shape(&self) -> Vec<usize> {
        match self.kind {
            PriorKind::Image { pooled, .. } => vec![pooled, pooled, 3],
            PriorKind::Grid { resolution: r } => vec![r, r, r],
        }
    }

    pub fn sample_dim(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn input_dim(&self) -> usize {
        self.sample_dim() + self.cond_dim()
    }

    /// Whether the network carries the gated linear skip.
    pub fn has_skip(&self) -> bool {
        matches!(self.kind, PriorKind::Image { .. })
    }

    /// Width of the noise-level and label conditioning vector.
    pub fn cond_dim(&self) -> usize {
        EMBED_DIM + self.n_labels
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn check_label(&self, label: Option<usize>) -> Result<()> {
        match label {
            Some(l) if l >= self.n_labels => Err(DiffusionError::Label {
                label: l,
                n_labels: self.n_labels,
            }),
            _ => Ok(()),
        }
    }

    /// Maps a corpus tensor (render `[H, W, 3]` or raw density `[R, R, R]`)
    /// into sample space.
    pub fn prepare(&self, data: &Tensor) -> Result<Tensor> {
        match self.kind {
            PriorKind::Image { image_size, pooled } => {
                if data.shape() != [image_size, image_size, 3] {
                    return Err(DiffusionError::Shape(format!(
                        "expected [{image_size}, {image_size}, 3], got {:?}",
                        data.shape()
                    )));
                }
                let f = image_size / pooled;
                let mut out = vec![0.0; pooled * pooled * 3];
                let norm = 1.0 / (f * f) as f64;
                for y in 0..image_size {
                    for x in 0..image_size {
                        for c in 0..3 {
                            out[((y / f) * pooled + x / f) * 3 + c] +=
                                data.data()[(y * image_size + x) * 3 + c];
                        }
                    }
                }
                out.iter_mut().for_each(|v| *v *= norm);
                Ok(Tensor::new(&[pooled, pooled, 3], out)?)
            }
            PriorKind::Grid { resolution: r } => {
                if data.shape() != [r, r, r] {
                    return Err(DiffusionError::Shape(format!(
                        "expected [{r}, {r}, {r}], got {:?}",
                        data.shape()
                    )));
                }
                Ok(data.map(encode_grid))
            }
        }
    }

    /// Pools a recorded `[H, W, 3]` render into sample space.
    pub fn prepare_var<'t>(&self, rgb: Var<'t>) -> Result<Var<'t>> {
        match self.kind {
            PriorKind::Image { image_size, pooled } => {
                if rgb.shape() != [image_size, image_size, 3] {
                    return Err(DiffusionError::Shape(format!(
                        "render {:?} does not match prior image size {image_size}",
                        rgb.shape()
                    )));
                }
                Ok(rgb.avg_pool2d(image_size / pooled)?)
            }
            PriorKind::Grid { .. } => Err(DiffusionError::Shape(
                "grid prior does not consume renders".into(),
            )),
        }
    }

    /// Network inputs `[B, input_dim]` and conditioning `[B, cond_dim]` for
    /// `B` flattened samples.
    pub fn features(&self, xs: &[f64], sigmas: &[f64], labels: &[Option<usize>]) -> Result<(Tensor, Tensor)> {
        let (d, i, k) = (self.sample_dim(), self.input_dim(), self.cond_dim());
        let b = sigmas.len();
        if xs.len() != b * d || labels.len() != b || b == 0 {
            return Err(DiffusionError::Shape(format!(
                "{} values, {b} noise levels and {} labels for sample dim {d}",
                xs.len(),
                labels.len()
            )));
        }
        let (mu, sd) = (self.kind.data_mean(), self.kind.sigma_data());
        let mut f = vec![0.0; b * i];
        for (row, ((x, &s), &y)) in xs.chunks(d).zip(sigmas).zip(labels).enumerate() {
            self.check_label(y)?;
            let out = &mut f[row * i..(row + 1) * i];
            let c = c_in(s, sd);
            for (o, v) in out[..d].iter_mut().zip(x) {
                *o = c * (v - mu);
            }
            embed(s, &mut out[d..d + EMBED_DIM]);
            if let Some(y) = y {
                out[d + EMBED_DIM + y] = 1.0;
            }
        }
        let cond = f.chunks(i).flat_map(|row| row[d..].to_vec()).collect();
        Ok((Tensor::new(&[b, i], f)?, Tensor::new(&[b, k], cond)?))
    }

    /// Records `ε̂` for a batch on `tape` with `params` as the weights.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &[Var<'t>],
        xs: &[f64],
        sigmas: &[f64],
        labels: &[Option<usize>],
    ) -> Result<Var<'t>> {
        let (x, c) = self.features(xs, sigmas, labels)?;
        let (x, c) = (tape.constant(x), tape.constant(c));
        let layer = |h: Var<'t>, w: Var<'t>, b: Var<'t>, g: Var<'t>| -> Result<Var<'t>> {
            let gate = c.matmul(g)?.offset(1.0)?;
            Ok(h.matmul(w)?.add_bias(b)?.mul(gate)?.relu()?)
        };
        let h1 = layer(x, params[0], params[1], params[2])?;
        let h2 = layer(h1, params[3], params[4], params[5])?.add(h1)?;
        let mut f = h2.matmul(params[6])?.add_bias(params[7])?;
        if self.has_skip() {
            f = f.add(x.matmul(params[8])?.mul(c.matmul(params[9])?.offset(1.0)?)?)?;
        }
        let (skip, gain) = self.output_terms(xs, sigmas);
        let shape = [sigmas.len(), self.sample_dim()];
        let skip = tape.constant(Tensor::new(&shape, skip)?);
        let gain = tape.constant(Tensor::new(&shape, gain)?);
        Ok(skip.sub(f.mul(gain)?)?)
    }

    /// Per-element `a(σ) (x - μ)` and `b(σ)`.
    fn output_terms(&self, xs: &[f64], sigmas: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.sample_dim();
        let (mu, sd) = (self.kind.data_mean(), self.kind.sigma_data());
        let mut skip = Vec::with_capacity(xs.len());
        let mut gain = Vec::with_capacity(xs.len());
        for (x, &s) in xs.chunks(d).zip(sigmas) {
            let (a, b) = output_coeffs(s, sd);
            skip.extend(x.iter().map(|v| a * (v - mu)));
            gain.extend(std::iter::repeat_n(b, d));
        }
        (skip, gain)
    }

    /// `ε̂` for a batch of flattened samples, without a tape.
    pub fn predict_batch(&self, xs: &[f64], sigmas: &[f64], labels: &[Option<usize>]) -> Result<Vec<f64>> {
        let (feats, cond) = self.features(xs, sigmas, labels)?;
        let (b, i, k, w, d) = (sigmas.len(), self.input_dim(), self.cond_dim(), self.width, self.sample_dim());
        let p = &self.params;
        let dense = |x: &[f64], k: usize, wt: &Tensor, bias: &Tensor, n: usize| {
            let mut y = gemm_nn(x, wt.data(), b, k, n);
            for row in y.chunks_mut(n) {
                for (v, bb) in row.iter_mut().zip(bias.data()) {
                    *v += bb;
                }
            }
            y
        };
        let relu = |v: f64| if v > 0.0 { v } else { 0.0 };
        let layer = |x: &[f64], n_in: usize, wt: &Tensor, bias: &Tensor, g: &Tensor| -> Vec<f64> {
            let gate = gemm_nn(cond.data(), g.data(), b, k, w);
            dense(x, n_in, wt, bias, w)
                .into_iter()
                .zip(gate)
                .map(|(v, g)| relu(v * (g + 1.0)))
                .collect()
        };
        let h1 = layer(feats.data(), i, &p[0], &p[1], &p[2]);
        let h2: Vec<f64> = layer(&h1, w, &p[3], &p[4], &p[5])
            .into_iter()
            .zip(&h1)
            .map(|(v, h)| v + h)
            .collect();
        let mut f = dense(&h2, w, &p[6], &p[7], d);
        if self.has_skip() {
            let lin = gemm_nn(feats.data(), p[8].data(), b, i, d);
            let gate = gemm_nn(cond.data(), p[9].data(), b, k, d);
            for ((f, l), g) in f.iter_mut().zip(&lin).zip(&gate) {
                *f += l * (g + 1.0);
            }
        }
        let (skip, gain) = self.output_terms(xs, sigmas);
        Ok(skip
            .iter()
            .zip(&f)
            .zip(&gain)
            .map(|((s, f), g)| s - f * g)
            .collect())
    }

    /// `ε̂` for one sample shaped like [`Self::sample_shape`].
    pub fn predict(&self, x: &Tensor, sigma: f64, label: Option<usize>) -> Result<Tensor> {
        if x.shape() != self.sample_shape().as_slice() {
            return Err(DiffusionError::Shape(format!(
                "sample {:?} vs prior {:?}",
                x.shape(),
                self.sample_shape()
            )));
        }
        let out = self.predict_batch(x.data(), &[sigma], &[label])?;
        Ok(Tensor::new(x.shape(), out)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        let meta = match self.kind {
            PriorKind::Image { image_size, pooled } => vec![0.0, image_size as f64, pooled as f64],
            PriorKind::Grid { resolution } => vec![1.0, resolution as f64, 0.0],
        };
        let mut meta = meta;
        meta.extend([self.n_labels as f64, self.width as f64]);
        c.push("meta", Tensor::vector(meta));
        for (name, t) in PARAM_NAMES.iter().zip(&self.params) {
            c.push(name, t.clone());
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let meta = c.expect("meta", &[5])?.data().to_vec();
        let as_usize = |v: f64| v as usize;
        let kind = match meta[0] as i64 {
            0 => PriorKind::Image {
                image_size: as_usize(meta[1]),
                pooled: as_usize(meta[2]),
            },
            1 => PriorKind::Grid {
                resolution: as_usize(meta[1]),
            },
            k => return Err(DiffusionError::Shape(format!("unknown prior kind {k}"))),
        };
        let mut m = Self {
            kind,
            n_labels: as_usize(meta[3]),
            width: as_usize(meta[4]),
            params: Vec::new(),
        };
        let (d, i, k, w) = (m.sample_dim(), m.input_dim(), m.cond_dim(), m.width);
        let shapes = [
            vec![i, w],
            vec![w],
            vec![k, w],
            vec![w, w],
            vec![w],
            vec![k, w],
            vec![w, d],
            vec![d],
            vec![i, d],
            vec![k, d],
        ];
        let n = if m.has_skip() { 10 } else { 8 };
        m.params = PARAM_NAMES[..n]
            .iter()
            .zip(&shapes)
            .map(|(n, s)| c.expect(n, s).cloned())
            .collect::<std::result::Result<_, _>>()?;
        Ok(m)
    }
}
