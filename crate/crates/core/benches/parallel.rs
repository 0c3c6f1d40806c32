use std::hint::black_box;

use cg3d_core::dataset::{concept, generate_samples, generate_shape, CorpusManifest};
use cg3d_core::par;
use cg3d_core::render::{make_view_ring, render_image, render_views};
use cg3d_core::rng;
use cg3d_core::tensor::Tape;
use criterion::{criterion_group, criterion_main, Criterion};

/// Runs `f` on the default pool ("parallel") or on one worker
/// ("sequential"). Without the `parallel` feature only the fallback exists.
struct Mode {
    name: &'static str,
    #[cfg(feature = "parallel")]
    pool: rayon::ThreadPool,
}

impl Mode {
    fn all() -> Vec<Mode> {
        #[cfg(feature = "parallel")]
        {
            let pool = |n: usize| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            vec![
                Mode {
                    name: "parallel",
                    pool: pool(rayon::current_num_threads()),
                },
                Mode {
                    name: "sequential",
                    pool: pool(1),
                },
            ]
        }
        #[cfg(not(feature = "parallel"))]
        {
            vec![Mode { name: "sequential" }]
        }
    }

    fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        {
            self.pool.install(f)
        }
        #[cfg(not(feature = "parallel"))]
        {
            f()
        }
    }
}

fn bench(c: &mut Criterion) {
    let grid = generate_shape(&concept("torus").unwrap(), 32, &mut rng::stream(0, "bench")).unwrap();
    let cams = make_view_ring(4, 15f64.to_radians(), 64, 64).unwrap();
    let manifest = CorpusManifest {
        samples_per_concept: 4,
        image_size: 32,
        ..Default::default()
    };
    let modes = Mode::all();
    println!("parallel feature: {}", par::is_parallel());

    let mut g = c.benchmark_group("render_image");
    for m in &modes {
        g.bench_function(m.name, |b| {
            b.iter(|| m.run(|| cams.iter().map(|cam| render_image(black_box(&grid), cam)).collect::<Vec<_>>()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("render_backward");
    for m in &modes {
        g.bench_function(m.name, |b| {
            b.iter(|| {
                m.run(|| {
                    let tape = Tape::new();
                    let vars = grid.record(&tape).unwrap();
                    let views = render_views(&vars, &cams).unwrap();
                    let total = views.views.iter().fold(None, |acc, v| {
                        let s = v.alpha.sum().unwrap();
                        Some(acc.map_or(s, |a: cg3d_core::tensor::Var<'_>| a.add(s).unwrap()))
                    });
                    black_box(tape.backward(total.unwrap()).unwrap());
                })
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("corpus_samples");
    g.sample_size(10);
    for m in &modes {
        g.bench_function(m.name, |b| b.iter(|| m.run(|| generate_samples(&manifest, 0..manifest.len()).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
