use cg3d_core::dataset::{concept, generate_shape, softplus_inv};
use cg3d_core::render::{
    make_view_ring, render_image, ring_with_samples, silhouette, Camera, DensityGrid,
};
use cg3d_core::rng;
use cg3d_core::tensor::Tensor;
use proptest::prelude::*;

/// In-cube chord length of a ray through `[-1, 1]³`.
fn chord(o: [f64; 3], d: [f64; 3]) -> f64 {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a].abs() > 1.0 {
                return 0.0;
            }
            continue;
        }
        let (t1, t2) = ((-1.0 - o[a]) / d[a], (1.0 - o[a]) / d[a]);
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    (hi - lo).max(0.0)
}

#[test]
fn empty_grid_is_background() {
    for elev in [0.0, 0.4, -0.7] {
        for cam in make_view_ring(5, elev, 12, 10).unwrap() {
            let img = render_image(&DensityGrid::empty(6).unwrap(), &cam);
            assert!(img.data().iter().all(|&v| v == 1.0));
        }
    }
}

#[test]
fn uniform_density_follows_beer_lambert() {
    let r = 8;
    for sigma in [0.05, 0.5, 1.0, 2.0] {
        let grid = DensityGrid::filled(r, softplus_inv(sigma), 0.0).unwrap();
        for elev in [0.0, 0.3] {
            for cam in ring_with_samples(3, elev, 16, 16, 64).unwrap() {
                let alpha = silhouette(&grid, &cam);
                for row in 0..cam.height {
                    for col in 0..cam.width {
                        let (o, d) = cam.ray(row, col);
                        let len = chord(o, d);
                        let want = (-sigma * len).exp();
                        let got = 1.0 - alpha.data()[row * cam.width + col];
                        assert!(
                            sigma * len > 4.0 || (got - want).abs() <= 0.02 * want,
                            "σ {sigma} L {len}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn opaque_red_voxel_on_axis() {
    let r = 7;
    let base = DensityGrid::empty(r).unwrap();
    let mut raw = vec![-1000.0; r * r * r];
    raw[base.index(3, 3, 3)] = 400.0;
    let albedo: Vec<f64> = (0..r * r * r).flat_map(|_| [20.0, -20.0, -20.0]).collect();
    let grid = DensityGrid::new(
        Tensor::new(&[r, r, r], raw).unwrap(),
        Tensor::new(&[r, r, r, 3], albedo).unwrap(),
    )
    .unwrap();
    for samples in [64, 512] {
        let cam = Camera::new(0.0, 0.0, 9, 9, samples).unwrap();
        let img = render_image(&grid, &cam);
        let px = &img.data()[(4 * 9 + 4) * 3..(4 * 9 + 4) * 3 + 3];
        for (got, want) in px.iter().zip([1.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 0.05, "S {samples}: {px:?}");
        }
    }
}

#[test]
fn sphere_silhouettes_match_around_ring() {
    let g = generate_shape(
        &concept("sphere").unwrap().without_jitter(),
        32,
        &mut rng::stream(0, "t"),
    )
    .unwrap();
    let counts: Vec<f64> = make_view_ring(4, 15f64.to_radians(), 64, 64)
        .unwrap()
        .iter()
        .map(|c| silhouette(&g, c).data().iter().filter(|&&a| a > 0.5).count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / 4.0;
    assert!(counts.iter().all(|c| (c - mean).abs() <= 0.01 * mean), "{counts:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transmittance_monotone_in_density(
        raw in prop::collection::vec(-3f64..3.0, 64),
        bump in prop::collection::vec(0f64..2.0, 64),
        elev in -1.0f64..1.0,
        azim in 0f64..std::f64::consts::TAU,
    ) {
        let albedo = Tensor::full(&[4, 4, 4, 3], 0.0).unwrap();
        let lo = DensityGrid::new(Tensor::new(&[4, 4, 4], raw.clone()).unwrap(), albedo.clone()).unwrap();
        let hi_raw: Vec<f64> = raw.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let hi = DensityGrid::new(Tensor::new(&[4, 4, 4], hi_raw).unwrap(), albedo).unwrap();
        let cam = Camera::new(azim, elev, 8, 8, 32).unwrap();
        let (a, b) = (silhouette(&lo, &cam), silhouette(&hi, &cam));
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!(*y >= *x, "{y} < {x}");
        }
    }

    #[test]
    fn colors_stay_in_unit_range(
        raw in prop::collection::vec(-5f64..8.0, 27),
        albedo in prop::collection::vec(-6f64..6.0, 81),
    ) {
        let g = DensityGrid::new(
            Tensor::new(&[3, 3, 3], raw).unwrap(),
            Tensor::new(&[3, 3, 3, 3], albedo).unwrap(),
        ).unwrap();
        let img = render_image(&g, &Camera::new(0.7, 0.2, 8, 8, 16).unwrap());
        prop_assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
