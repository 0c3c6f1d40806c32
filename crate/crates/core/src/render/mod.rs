//! Differentiable multi-view rendering of voxel density grids.
//!
//! A [`DensityGrid`] stores unconstrained raw fields over the cube
//! `[-1, 1]³`; density is `softplus(raw_density)` and color is
//! `sigmoid(raw_albedo)`. Cameras are orthographic and sit on a ring around
//! the vertical axis. Rays are marched with `S` equidistant midpoint samples
//! over their chord through the cube and composited front to back over a
//! white background.

mod export;
pub mod kernel;

pub use export::{export_image, export_obj, read_ppm, write_contact_sheet};

use std::f64::consts::PI;

use thiserror::Error;

use crate::tensor::{self, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("camera list is empty")]
    NoCameras,
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("pixel value {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("threshold must be positive, got {0}")]
    Threshold(f64),
    #[error("malformed image: {0}")]
    Image(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RenderError>;

/// Voxel asset: raw density `[R, R, R]` and raw albedo `[R, R, R, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    resolution: usize,
    raw_density: Tensor,
    raw_albedo: Tensor,
}

/// Raw density whose softplus underflows to exactly zero.
pub const EMPTY_RAW_DENSITY: f64 = -1000.0;

impl DensityGrid {
    pub fn new(raw_density: Tensor, raw_albedo: Tensor) -> Result<Self> {
        let r = raw_density.shape().first().copied().unwrap_or(0);
        if r < 2 || raw_density.shape() != [r, r, r] {
            return Err(RenderError::Grid(format!(
                "density shape {:?} is not a cube of side >= 2",
                raw_density.shape()
            )));
        }
        if raw_albedo.shape() != [r, r, r, 3] {
            return Err(RenderError::Grid(format!(
                "albedo shape {:?} does not match resolution {r}",
                raw_albedo.shape()
            )));
        }
        if !raw_density.all_finite() || !raw_albedo.all_finite() {
            return Err(RenderError::Grid("non-finite raw values".into()));
        }
        Ok(Self {
            resolution: r,
            raw_density,
            raw_albedo,
        })
    }

    /// Grid with exactly zero density and mid-gray albedo.
    pub fn empty(resolution: usize) -> Result<Self> {
        Self::filled(resolution, EMPTY_RAW_DENSITY, 0.0)
    }

    pub fn filled(resolution: usize, raw_density: f64, raw_albedo: f64) -> Result<Self> {
        let r = resolution;
        Self::new(
            Tensor::full(&[r, r, r], raw_density)?,
            Tensor::full(&[r, r, r, 3], raw_albedo)?,
        )
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn raw_density(&self) -> &Tensor {
        &self.raw_density
    }

    pub fn raw_albedo(&self) -> &Tensor {
        &self.raw_albedo
    }

    /// Mutable raw density and albedo buffers.
    pub fn raw_fields_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.raw_density.data_mut(), self.raw_albedo.data_mut())
    }

    pub fn density(&self) -> Vec<f64> {
        self.raw_density.data().iter().map(|&x| tensor::softplus(x)).collect()
    }

    pub fn color(&self) -> Vec<f64> {
        self.raw_albedo.data().iter().map(|&x| tensor::sigmoid(x)).collect()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.resolution + y) * self.resolution + x
    }

    /// World-space center of voxel `(x, y, z)`.
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        let c = |i: usize| -1.0 + (i as f64 + 0.5) * 2.0 / self.resolution as f64;
        [c(x), c(y), c(z)]
    }

    pub fn voxel_size(&self) -> f64 {
        2.0 / self.resolution as f64
    }

    /// Records the raw fields as leaves and derives density and color.
    pub fn record<'t>(&self, tape: &'t Tape) -> Result<GridVars<'t>> {
        let raw_density = tape.leaf(self.raw_density.clone());
        let raw_albedo = tape.leaf(self.raw_albedo.clone());
        GridVars::from_raw(self.resolution, raw_density, raw_albedo)
    }

    /// Rotates the contents by 90° about the vertical (y) axis:
    /// voxel `(x, y, z)` moves to `(R-1-z, y, x)`.
    pub fn rotate_quarter(&self) -> Self {
        let r = self.resolution;
        let mut d = vec![0.0; r * r * r];
        let mut a = vec![0.0; 3 * r * r * r];
        for z in 0..r {
            for y in 0..r {
                for x in 0..r {
                    let src = self.index(x, y, z);
                    let dst = self.index(r - 1 - z, y, x);
                    d[dst] = self.raw_density.data()[src];
                    a[dst * 3..dst * 3 + 3]
                        .copy_from_slice(&self.raw_albedo.data()[src * 3..src * 3 + 3]);
                }
            }
        }
        Self::new(
            Tensor::new(&[r, r, r], d).expect("same shape"),
            Tensor::new(&[r, r, r, 3], a).expect("same shape"),
        )
        .expect("rotation preserves validity")
    }
}

/// A grid's fields recorded on a tape.
#[derive(Clone, Copy)]
pub struct GridVars<'t> {
    pub resolution: usize,
    pub raw_density: Var<'t>,
    pub raw_albedo: Var<'t>,
    /// `softplus(raw_density)`, shape `[R, R, R]`.
    pub density: Var<'t>,
    /// `sigmoid(raw_albedo)`, shape `[R, R, R, 3]`.
    pub color: Var<'t>,
}

impl<'t> GridVars<'t> {
    pub fn from_raw(resolution: usize, raw_density: Var<'t>, raw_albedo: Var<'t>) -> Result<Self> {
        let r = resolution;
        if raw_density.shape() != [r, r, r] || raw_albedo.shape() != [r, r, r, 3] {
            return Err(RenderError::Grid(format!(
                "raw shapes {:?}/{:?} do not match resolution {r}",
                raw_density.shape(),
                raw_albedo.shape()
            )));
        }
        Ok(Self {
            resolution,
            raw_density,
            raw_albedo,
            density: raw_density.softplus()?,
            color: raw_albedo.sigmoid()?,
        })
    }
}

/// Orthographic camera looking at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub azimuth: f64,
    pub elevation: f64,
    pub height: usize,
    pub width: usize,
    pub samples: usize,
}

/// Half-extent of the orthographic image plane in world units.
pub const IMAGE_HALF_EXTENT: f64 = 1.0;

impl Camera {
    pub fn new(azimuth: f64, elevation: f64, height: usize, width: usize, samples: usize) -> Result<Self> {
        if height < 8 || width < 8 {
            return Err(RenderError::Camera(format!(
                "image {height}x{width} below the 8x8 minimum"
            )));
        }
        if samples == 0 {
            return Err(RenderError::Camera("samples per ray must be positive".into()));
        }
        if !azimuth.is_finite() || !elevation.is_finite() || elevation.abs() >= PI / 2.0 {
            return Err(RenderError::Camera(format!(
                "angles ({azimuth}, {elevation}) invalid"
            )));
        }
        Ok(Self {
            azimuth,
            elevation,
            height,
            width,
            samples,
        })
    }

    /// Unit direction the camera looks along.
    pub fn forward(&self) -> [f64; 3] {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [-ce * sa, -se, -ce * ca]
    }

    pub fn right(&self) -> [f64; 3] {
        let (sa, ca) = self.azimuth.sin_cos();
        [ca, 0.0, -sa]
    }

    pub fn up(&self) -> [f64; 3] {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [-se * sa, ce, -se * ca]
    }

    /// Origin and direction of the ray through pixel `(row, col)`.
    pub fn ray(&self, row: usize, col: usize) -> ([f64; 3], [f64; 3]) {
        let u = IMAGE_HALF_EXTENT * (-1.0 + (col as f64 + 0.5) * 2.0 / self.width as f64);
        let v = IMAGE_HALF_EXTENT * (1.0 - (row as f64 + 0.5) * 2.0 / self.height as f64);
        let (f, r, up) = (self.forward(), self.right(), self.up());
        let o = [
            u * r[0] + v * up[0] - 4.0 * f[0],
            u * r[1] + v * up[1] - 4.0 * f[1],
            u * r[2] + v * up[2] - 4.0 * f[2],
        ];
        (o, f)
    }
}

/// `n` cameras at azimuths `2πk/n` sharing one elevation, `S = 64`.
pub fn make_view_ring(n: usize, elevation: f64, height: usize, width: usize) -> Result<Vec<Camera>> {
    ring_with_samples(n, elevation, height, width, DEFAULT_SAMPLES)
}

pub const DEFAULT_SAMPLES: usize = 64;

pub fn ring_with_samples(
    n: usize,
    elevation: f64,
    height: usize,
    width: usize,
    samples: usize,
) -> Result<Vec<Camera>> {
    if n == 0 {
        return Err(RenderError::NoCameras);
    }
    (0..n)
        .map(|k| Camera::new(2.0 * PI * k as f64 / n as f64, elevation, height, width, samples))
        .collect()
}

/// One rendered view on a tape.
#[derive(Clone, Copy)]
pub struct View<'t> {
    /// `[H, W, 3]` composited color.
    pub rgb: Var<'t>,
    /// `[H, W]` opacity `1 - T_final`.
    pub alpha: Var<'t>,
}

/// Views rendered from one grid, in camera order.
pub struct ViewSet<'t> {
    pub views: Vec<View<'t>>,
    pub cameras: Vec<Camera>,
    /// The grid the views were rendered from.
    pub grid: GridVars<'t>,
}

impl ViewSet<'_> {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// Detached RGB images.
    pub fn images(&self) -> Vec<Tensor> {
        self.views.iter().map(|v| v.rgb.detach()).collect()
    }
}

/// Records the `[H, W, 4]` RGBA render of `grid` seen from `cam`.
pub fn render_rgba<'t>(grid: &GridVars<'t>, cam: &Camera) -> Result<Var<'t>> {
    let tape = grid.density.tape();
    let r = grid.resolution;
    let dens = grid.density.value();
    let col = grid.color.value();
    let out = kernel::forward(dens.data(), col.data(), r, cam);
    let value = Tensor::new(&[cam.height, cam.width, 4], out)?;
    let cam = *cam;
    let var = tape.custom(
        "render",
        &[grid.density, grid.color],
        value,
        Box::new(move |g, _, p| {
            let (gd, gc) = kernel::backward(p[0].data(), p[1].data(), r, &cam, g);
            vec![Some(gd), Some(gc)]
        }),
    )?;
    Ok(var)
}

/// Records one view: color `[H, W, 3]` and opacity `[H, W]`.
pub fn render_view<'t>(grid: &GridVars<'t>, cam: &Camera) -> Result<View<'t>> {
    let rgba = render_rgba(grid, cam)?;
    let rgb = rgba.slice_last(0, 3)?;
    let alpha = rgba.slice_last(3, 4)?.reshape(&[cam.height, cam.width])?;
    Ok(View { rgb, alpha })
}

/// Renders every camera in order.
pub fn render_views<'t>(grid: &GridVars<'t>, cams: &[Camera]) -> Result<ViewSet<'t>> {
    if cams.is_empty() {
        return Err(RenderError::NoCameras);
    }
    let views = cams
        .iter()
        .map(|c| render_view(grid, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewSet {
        views,
        cameras: cams.to_vec(),
        grid: *grid,
    })
}

/// Tape-free render of the `[H, W, 3]` color image.
pub fn render_image(grid: &DensityGrid, cam: &Camera) -> Tensor {
    let rgba = kernel::forward(&grid.density(), &grid.color(), grid.resolution, cam);
    let rgb: Vec<f64> = rgba.chunks(4).flat_map(|p| p[..3].to_vec()).collect();
    Tensor::new(&[cam.height, cam.width, 3], rgb).expect("camera dims are positive")
}

/// Tape-free render of the `[H, W]` opacity map.
pub fn render_alpha(grid: &GridVars<'_>, cam: &Camera) -> Tensor {
    let rgba = kernel::forward(
        grid.density.value().data(),
        grid.color.value().data(),
        grid.resolution,
        cam,
    );
    let a: Vec<f64> = rgba.chunks(4).map(|p| p[3]).collect();
    Tensor::new(&[cam.height, cam.width], a).expect("camera dims are positive")
}

/// Tape-free opacity map of a grid.
pub fn silhouette(grid: &DensityGrid, cam: &Camera) -> Tensor {
    let rgba = kernel::forward(&grid.density(), &grid.color(), grid.resolution, cam);
    let a: Vec<f64> = rgba.chunks(4).map(|p| p[3]).collect();
    Tensor::new(&[cam.height, cam.width], a).expect("camera dims are positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: [f64; 3]) -> f64 {
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }

    #[test]
    fn ring_azimuths() {
        let ring = make_view_ring(4, 0.0, 16, 16).unwrap();
        let deg: Vec<f64> = ring.iter().map(|c| c.azimuth.to_degrees()).collect();
        for (d, want) in deg.iter().zip([0.0, 90.0, 180.0, 270.0]) {
            assert!((d - want).abs() < 1e-12);
        }
        let one = make_view_ring(1, 0.3, 16, 16).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].azimuth, 0.0);
        let eight = make_view_ring(8, 0.4, 16, 16).unwrap();
        for w in eight.windows(2) {
            assert!(((w[1].azimuth - w[0].azimuth).to_degrees() - 45.0).abs() < 1e-12);
        }
        assert!(matches!(make_view_ring(0, 0.0, 16, 16), Err(RenderError::NoCameras)));
    }

    #[test]
    fn camera_basis_is_orthonormal() {
        let c = Camera::new(0.7, 0.26, 8, 8, 4).unwrap();
        let (f, r, u) = (c.forward(), c.right(), c.up());
        for v in [f, r, u] {
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
        let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        assert!(dot(f, r).abs() < 1e-12);
        assert!(dot(f, u).abs() < 1e-12);
        assert!(dot(r, u).abs() < 1e-12);
        assert!(Camera::new(0.0, 0.0, 7, 8, 4).is_err());
    }

    #[test]
    fn empty_grid_renders_background_exactly() {
        let g = DensityGrid::empty(8).unwrap();
        let cam = Camera::new(0.3, 0.2, 16, 16, 32).unwrap();
        let img = render_image(&g, &cam);
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn grid_shape_validation() {
        let bad = DensityGrid::new(
            Tensor::zeros(&[4, 4, 4]).unwrap(),
            Tensor::zeros(&[4, 4, 3]).unwrap(),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn single_view_set_matches_render_view() {
        let g = DensityGrid::filled(6, 0.5, 0.2).unwrap();
        let cam = Camera::new(0.1, 0.2, 8, 8, 16).unwrap();
        let tape = Tape::new();
        let gv = g.record(&tape).unwrap();
        let set = render_views(&gv, &[cam]).unwrap();
        let single = render_view(&gv, &cam).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.views[0].rgb.detach(), single.rgb.detach());
        assert!(render_views(&gv, &[]).is_err());
    }
}
