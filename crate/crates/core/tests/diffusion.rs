use cg3d_core::critic::template_for;
use cg3d_core::dataset::{concept, generate_samples, generate_shape, CorpusManifest, DEFAULT_CONCEPTS};
use cg3d_core::diffusion::{
    draw_batch, dsm_loss, dsm_loss_value, forward_noise, sample, sds_gradient, train_prior,
    Denoiser, DiffusionSchedule, TrainConfig,
};
use cg3d_core::render::{render_view, Camera};
use cg3d_core::rng;
use cg3d_core::tensor::{Tape, Tensor};

#[test]
fn noised_residual_variance_matches_sigma() {
    let sched = DiffusionSchedule::training();
    let n = 100_000;
    let mut r = rng::stream(0, "noise");
    let x0 = Tensor::new(&[n], rng::normal_vec(&mut r, n)).unwrap();
    for t in [1, 250, 600, 1000] {
        let eps = Tensor::new(&[n], rng::normal_vec(&mut r, n)).unwrap();
        let xt = forward_noise(&x0, t, &eps, &sched).unwrap();
        let d: Vec<f64> = xt.data().iter().zip(x0.data()).map(|(a, b)| a - b).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let s2 = sched.sigma(t).powi(2);
        assert!((var - s2).abs() <= 0.03 * s2, "t {t}: {var} vs {s2}");
    }
}

#[test]
fn zero_prediction_loss_is_weighted_dimension() {
    let sched = DiffusionSchedule::training();
    let mut model = Denoiser::image_prior(3, 0).unwrap();
    for p in model.params_mut() {
        p.data_mut().fill(0.0);
    }
    let x0 = Tensor::full(&model.sample_shape(), 0.3).unwrap();
    let rows: Vec<(&Tensor, Option<usize>)> = (0..10_000).map(|i| (&x0, Some(i % 3))).collect();
    let mut batch = draw_batch(&rows, &sched, &mut rng::stream(0, "batch"));
    // At the data center the skip term vanishes, so zero weights predict ε̂ = 0.
    batch.x_t.fill(model.kind.data_mean());
    let loss = dsm_loss_value(&model, &batch).unwrap();
    let mean_weight = (1..=sched.len())
        .map(|t| sched.dsm_weight(t) / sched.sigma(t).powi(2))
        .sum::<f64>()
        / sched.len() as f64;
    let want = mean_weight * model.sample_dim() as f64;
    assert!((loss - want).abs() <= 0.05 * want, "{loss} vs {want}");

    let tape = Tape::new();
    let params: Vec<_> = model.params().iter().map(|p| tape.leaf(p.clone())).collect();
    let recorded = dsm_loss(&model, &tape, &params, &batch).unwrap().item();
    assert!((recorded - loss).abs() <= 1e-9 * loss);
}

#[test]
fn distillation_gradient_matches_surrogate() {
    let sched = DiffusionSchedule::training().with_sds_weight(|_, s| s * s).unwrap();
    let model = Denoiser::image_prior(3, 4).unwrap();
    let grid = generate_shape(&concept("cube").unwrap(), 16, &mut rng::stream(1, "g")).unwrap();
    let cam = Camera::new(0.4, 0.2, 64, 64, 32).unwrap();
    let mut r = rng::stream(2, "eps");
    for t in [3, 400, 999] {
        let eps = Tensor::new(&model.sample_shape(), rng::normal_vec(&mut r, model.sample_dim())).unwrap();
        let tape = Tape::new();
        let vars = grid.record(&tape).unwrap();
        let got = sds_gradient(&model, &vars, &cam, Some(1), t, &eps, &sched).unwrap();

        let tape = Tape::new();
        let vars = grid.record(&tape).unwrap();
        let x = model.prepare_var(render_view(&vars, &cam).unwrap().rgb).unwrap();
        let xt = forward_noise(&x.value(), t, &eps, &sched).unwrap();
        let eps_hat = model.predict(&xt, sched.sigma(t), Some(1)).unwrap();
        let w = sched.sds_weight(t);
        let r_detached: Vec<f64> = eps_hat.data().iter().zip(eps.data()).map(|(a, b)| w * (a - b)).collect();
        let surrogate = x.dot(tape.constant(Tensor::new(x.value().shape(), r_detached).unwrap())).unwrap();
        let g = tape.backward(surrogate).unwrap();
        for (a, b) in [
            (&got.raw_density, g.data(vars.raw_density)),
            (&got.raw_albedo, g.data(vars.raw_albedo)),
        ] {
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let worst = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(worst <= 1e-10 * scale.max(1.0), "t {t}: {worst}");
        }
    }
}

/// Best soft-IoU of a sample's opacity against any template mask, all
/// brought to the prior's pooled resolution.
fn nearest_template_iou(x: &Tensor, masks: &[Vec<f64>]) -> f64 {
    let opacity: Vec<f64> = x
        .data()
        .chunks(3)
        .map(|p| ((1.0 - p.iter().cloned().fold(f64::INFINITY, f64::min)) / 0.8).clamp(0.0, 1.0))
        .collect();
    masks
        .iter()
        .map(|m| {
            let inter: f64 = opacity.iter().zip(m).map(|(a, b)| a * b).sum();
            let union: f64 = opacity.iter().zip(m).map(|(a, b)| a + b - a * b).sum();
            inter / union
        })
        .fold(0.0, f64::max)
}

#[test]
fn image_prior_learns_the_corpus() {
    let manifest = CorpusManifest {
        samples_per_concept: 30,
        ..Default::default()
    };
    let samples = generate_samples(&manifest, 0..manifest.len()).unwrap();
    let mut model = Denoiser::image_prior(3, 0).unwrap();
    let data: Vec<(Tensor, usize)> = samples
        .iter()
        .flat_map(|s| s.images.iter().map(|i| (model.prepare(i).unwrap(), s.label)).collect::<Vec<_>>())
        .collect();
    let cfg = TrainConfig {
        steps: 6000,
        ..Default::default()
    };
    let curve = train_prior(&mut model, &data, &DiffusionSchedule::training(), &cfg).unwrap();
    let at_2000 = curve.losses[1800..2000].iter().sum::<f64>() / 200.0;
    assert!(at_2000 < 0.5 * curve.head(20), "{at_2000} vs {}", curve.head(20));

    let cams = manifest.cameras().unwrap();
    let mut masks = Vec::new();
    for c in DEFAULT_CONCEPTS {
        for mask in &template_for(c, &cams).unwrap().masks {
            let rgb: Vec<f64> = mask.data().iter().flat_map(|&v| [v, v, v]).collect();
            let size = manifest.image_size;
            let pooled = model.prepare(&Tensor::new(&[size, size, 3], rgb).unwrap()).unwrap();
            masks.push(pooled.data().chunks(3).map(|p| p[0]).collect::<Vec<f64>>());
        }
    }
    let sched = DiffusionSchedule::sampling();
    let good = (0..200u64)
        .filter(|&k| {
            let x = sample(&model, None, &sched, &mut rng::indexed_stream(0, "sample", k)).unwrap();
            nearest_template_iou(&x, &masks) > 0.5
        })
        .count();
    assert!(good >= 120, "{good}/200 samples near a template");
}
