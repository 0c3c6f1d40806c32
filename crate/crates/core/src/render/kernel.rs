//! Ray-marching kernels for emission–absorption compositing.
//!
//! Pure functions over flat density/color buffers. The forward pass writes
//! `[H, W, 4]` (RGB + opacity); the backward pass pulls an `[H, W, 4]`
//! cotangent back onto the voxel buffers.

use super::Camera;
use crate::par;

/// Background color composited behind the residual transmittance.
pub const BACKGROUND: [f64; 3] = [1.0, 1.0, 1.0];

const ROWS_PER_CHUNK: usize = 8;

/// Trilinear stencil of a world-space point over an `R³` grid with
/// clamp-to-edge addressing. Voxel `(x, y, z)` lives at flat index
/// `(z * R + y) * R + x`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
}

pub(crate) fn stencil(p: [f64; 3], r: usize) -> Stencil {
    let hi = (r - 1) as f64;
    let top = r.saturating_sub(2);
    let axis = |v: f64| {
        let u = ((v + 1.0) * 0.5 * r as f64 - 0.5).clamp(0.0, hi);
        let base = (u as usize).min(top);
        (base, u - base as f64)
    };
    let (x0, fx) = axis(p[0]);
    let (y0, fy) = axis(p[1]);
    let (z0, fz) = axis(p[2]);
    let step = usize::from(r > 1);
    let base = (z0 * r + y0) * r + x0;
    let (sx, sy, sz) = (step, step * r, step * r * r);
    let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
    Stencil {
        idx: [
            base,
            base + sx,
            base + sy,
            base + sx + sy,
            base + sz,
            base + sx + sz,
            base + sy + sz,
            base + sx + sy + sz,
        ],
        w: [
            gx * gy * gz,
            fx * gy * gz,
            gx * fy * gz,
            fx * fy * gz,
            gx * gy * fz,
            fx * gy * fz,
            gx * fy * fz,
            fx * fy * fz,
        ],
    }
}

/// Entry/exit distances of a ray through the cube `[-1, 1]³`.
pub(crate) fn cube_interval(o: [f64; 3], d: [f64; 3]) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if o[a] < -1.0 || o[a] > 1.0 {
                return None;
            }
            continue;
        }
        let ta = (-1.0 - o[a]) / d[a];
        let tb = (1.0 - o[a]) / d[a];
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t1 > t0).then_some((t0, t1))
}

/// Ray origin, direction, entry distance and step length of one pixel, if
/// its ray meets the cube.
fn ray_setup(cam: &Camera, row: usize, col: usize) -> Option<([f64; 3], [f64; 3], f64, f64)> {
    let (o, d) = cam.ray(row, col);
    let (t0, t1) = cube_interval(o, d)?;
    Some((o, d, t0, (t1 - t0) / cam.samples as f64))
}

/// Midpoint of sample `k`.
#[inline]
fn sample_point(o: [f64; 3], d: [f64; 3], t0: f64, delta: f64, k: usize) -> [f64; 3] {
    let t = t0 + (k as f64 + 0.5) * delta;
    [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]
}

/// Interleaves density and color into `[σ, r, g, b]` per voxel.
fn interleave(density: &[f64], color: &[f64]) -> Vec<[f64; 4]> {
    density
        .iter()
        .zip(color.chunks_exact(3))
        .map(|(&d, c)| [d, c[0], c[1], c[2]])
        .collect()
}

#[inline]
fn sample_fields(fields: &[[f64; 4]], st: &Stencil) -> (f64, [f64; 3]) {
    let mut acc = [0.0; 4];
    for k in 0..8 {
        let w = st.w[k];
        let f = &fields[st.idx[k]];
        acc[0] += w * f[0];
        acc[1] += w * f[1];
        acc[2] += w * f[2];
        acc[3] += w * f[3];
    }
    (acc[0], [acc[1], acc[2], acc[3]])
}

/// Renders `[H, W, 4]`: composited RGB over the background, then opacity
/// `1 - T_final`.
pub fn forward(density: &[f64], color: &[f64], r: usize, cam: &Camera) -> Vec<f64> {
    let (h, w) = (cam.height, cam.width);
    let fields = interleave(density, color);
    let mut out = vec![0.0; h * w * 4];
    par::for_each_chunk_mut(&mut out, w * 4, |row, buf| {
        for col in 0..w {
            let px = &mut buf[col * 4..col * 4 + 4];
            let Some((o, d, t0, delta)) = ray_setup(cam, row, col) else {
                px[..3].copy_from_slice(&BACKGROUND);
                px[3] = 0.0;
                continue;
            };
            // Accumulates sum_k w_k (bg - c_k); since sum_k w_k = 1 - T this
            // equals bg*T + sum_k w_k c_k while staying <= bg in floating point.
            let mut trans = 1.0;
            let mut deficit = [0.0; 3];
            for k in 0..cam.samples {
                let p = sample_point(o, d, t0, delta, k);
                let (sigma, c) = sample_fields(&fields, &stencil(p, r));
                let a = (-sigma * delta).exp();
                let wgt = trans * (1.0 - a);
                for ch in 0..3 {
                    deficit[ch] += wgt * (BACKGROUND[ch] - c[ch]);
                }
                trans *= a;
            }
            for ch in 0..3 {
                px[ch] = (BACKGROUND[ch] - deficit[ch]).max(0.0);
            }
            px[3] = 1.0 - trans;
        }
    });
    out
}

/// Pulls a `[H, W, 4]` cotangent back to `(d density [R³], d color [3R³])`.
pub fn backward(
    density: &[f64],
    color: &[f64],
    r: usize,
    cam: &Camera,
    g: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (cam.height, cam.width);
    let n = r * r * r;
    let fields = interleave(density, color);
    let chunks = h.div_ceil(ROWS_PER_CHUNK);
    let partials = par::map_range(chunks, |ci| {
        let mut acc = vec![[0.0f64; 4]; n];
        let s = cam.samples;
        let mut col_s = vec![[0.0; 3]; s];
        let mut wts = vec![0.0; s];
        let mut trans_after = vec![0.0; s];
        let mut stencils = Vec::with_capacity(s);
        for row in ci * ROWS_PER_CHUNK..((ci + 1) * ROWS_PER_CHUNK).min(h) {
            for col in 0..w {
                let gp = &g[(row * w + col) * 4..(row * w + col) * 4 + 4];
                if gp.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let Some((o, d, t0, delta)) = ray_setup(cam, row, col) else {
                    continue;
                };
                stencils.clear();
                let mut trans = 1.0;
                for k in 0..s {
                    let st = stencil(sample_point(o, d, t0, delta, k), r);
                    let (sigma, c) = sample_fields(&fields, &st);
                    let a = (-sigma * delta).exp();
                    col_s[k] = c;
                    wts[k] = trans * (1.0 - a);
                    trans *= a;
                    trans_after[k] = trans;
                    stencils.push(st);
                }
                let t_final = trans;
                let g_rgb = [gp[0], gp[1], gp[2]];
                let g_alpha = gp[3];
                let dot = |c: &[f64; 3]| c[0] * g_rgb[0] + c[1] * g_rgb[1] + c[2] * g_rgb[2];
                let bg_term = t_final * dot(&BACKGROUND);
                // suffix = sum_{j>k} w_j (g . c_j)
                let mut suffix = 0.0;
                for k in (0..s).rev() {
                    let gc_k = dot(&col_s[k]);
                    let d_sigma =
                        delta * (trans_after[k] * gc_k - suffix - bg_term + t_final * g_alpha);
                    suffix += wts[k] * gc_k;
                    let st = &stencils[k];
                    for c in 0..8 {
                        let wv = st.w[c];
                        let wk = wv * wts[k];
                        let a = &mut acc[st.idx[c]];
                        a[0] += wv * d_sigma;
                        a[1] += wk * g_rgb[0];
                        a[2] += wk * g_rgb[1];
                        a[3] += wk * g_rgb[2];
                    }
                }
            }
        }
        acc
    });
    let mut gd = vec![0.0; n];
    let mut gc = vec![0.0; 3 * n];
    for part in partials {
        for ((d, c), a) in gd.iter_mut().zip(gc.chunks_exact_mut(3)).zip(&part) {
            *d += a[0];
            c[0] += a[1];
            c[1] += a[2];
            c[2] += a[3];
        }
    }
    (gd, gc)
}
