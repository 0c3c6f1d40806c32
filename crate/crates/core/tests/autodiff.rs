use cg3d_core::critic::{build_query, CriticParams, CriticQuery};
use cg3d_core::render::{render_views, ring_with_samples, Camera, DensityGrid, GridVars};
use cg3d_core::rng::{self, Rng};
use cg3d_core::tensor::{
    grad_check, grad_check_coords, softmax2, stack_scalars, ReduceKind, Result, Tape, Tensor, Var,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

const H: f64 = 1e-5;
const INSTANCES: usize = 20;

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Magnitudes in `[lo, hi)` with random signs.
fn signed(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(lo..hi);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Distinct values at least 0.1 apart, shuffled.
fn separated(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 + rng.random_range(0.0..0.01)).collect();
    v.shuffle(rng);
    Tensor::new(shape, v).unwrap()
}

fn out_shape<F>(op: &F, inputs: &[Tensor]) -> Vec<usize>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    op(&tape, &leaves).unwrap().shape()
}

/// Worst relative error over `n` instances of `⟨op(x), w⟩` with random `w`.
fn worst_error<G, F>(name: &str, n: usize, gen: G, op: F) -> f64
where
    G: Fn(&mut Rng) -> Vec<Tensor>,
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let mut rng = rng::stream(7, name);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let mut inputs = gen(&mut rng);
        let shape = out_shape(&op, &inputs);
        inputs.push(signed(&mut rng, &shape, 0.5, 1.5));
        let k = inputs.len() - 1;
        let err = grad_check(|tape, x| op(tape, &x[..k])?.dot(x[k]), &inputs, H).unwrap();
        worst = worst.max(err);
    }
    worst
}

macro_rules! op_test {
    ($name:ident, $gen:expr, $op:expr) => {
        op_test!($name, $gen, $op, 1e-6);
    };
    ($name:ident, $gen:expr, $op:expr, $tol:expr) => {
        #[test]
        fn $name() {
            let err = worst_error(stringify!($name), INSTANCES, $gen, $op);
            assert!(err < $tol, "{} rel err {err:e}", stringify!($name));
        }
    };
}

fn pair(lo: f64, hi: f64) -> impl Fn(&mut Rng) -> Vec<Tensor> {
    move |r| vec![uniform(r, &[2, 3], lo, hi), uniform(r, &[2, 3], lo, hi)]
}

fn one(lo: f64, hi: f64) -> impl Fn(&mut Rng) -> Vec<Tensor> {
    move |r| vec![uniform(r, &[2, 3], lo, hi)]
}

op_test!(add, pair(-2.0, 2.0), |_, x| x[0].add(x[1]));
op_test!(sub, pair(-2.0, 2.0), |_, x| x[0].sub(x[1]));
op_test!(mul, pair(-2.0, 2.0), |_, x| x[0].mul(x[1]));
op_test!(
    div,
    |r| vec![uniform(r, &[2, 3], -2.0, 2.0), signed(r, &[2, 3], 0.5, 2.0)],
    |_, x| x[0].div(x[1])
);
op_test!(
    scalar_broadcast,
    |r| vec![uniform(r, &[2, 3], -2.0, 2.0), signed(r, &[], 0.5, 2.0)],
    |_, x| x[0].mul(x[1])?.add(x[1])?.div(x[1])?.sub(x[1])
);
op_test!(exp, one(-2.0, 2.0), |_, x| x[0].exp());
op_test!(log, one(0.2, 3.0), |_, x| x[0].log());
op_test!(softplus, one(-4.0, 4.0), |_, x| x[0].softplus());
op_test!(sigmoid, one(-4.0, 4.0), |_, x| x[0].sigmoid());
op_test!(relu, |r| vec![signed(r, &[2, 3], 0.01, 2.0)], |_, x| x[0].relu());
op_test!(neg, one(-2.0, 2.0), |_, x| x[0].neg());
op_test!(scale, one(-2.0, 2.0), |_, x| x[0].scale(1.7));
op_test!(offset, one(-2.0, 2.0), |_, x| x[0].offset(-0.3));
op_test!(one_minus, one(-2.0, 2.0), |_, x| x[0].one_minus());
op_test!(square, one(-2.0, 2.0), |_, x| x[0].square());
op_test!(
    matmul,
    |r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[4, 2], -1.0, 1.0)],
    |_, x| x[0].matmul(x[1]),
    1e-7
);
op_test!(
    add_bias,
    |r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[4], -1.0, 1.0)],
    |_, x| x[0].add_bias(x[1])
);
op_test!(sum, one(-2.0, 2.0), |_, x| x[0].sum());
op_test!(mean, one(-2.0, 2.0), |_, x| x[0].mean());
op_test!(max, |r| vec![separated(r, &[2, 3])], |_, x| x[0].max());
op_test!(sum_axis, |r| vec![uniform(r, &[2, 3, 2], -1.0, 1.0)], |_, x| {
    x[0].reduce(ReduceKind::Sum, Some(1))
});
op_test!(mean_axis, |r| vec![uniform(r, &[2, 3, 2], -1.0, 1.0)], |_, x| {
    x[0].reduce(ReduceKind::Mean, Some(0))
});
op_test!(max_axis, |r| vec![separated(r, &[3, 4])], |_, x| {
    x[0].reduce(ReduceKind::Max, Some(1))
});
op_test!(reshape, one(-2.0, 2.0), |_, x| x[0].reshape(&[3, 2]));
op_test!(slice_last, |r| vec![uniform(r, &[2, 5], -1.0, 1.0)], |_, x| {
    x[0].slice_last(1, 4)
});
op_test!(avg_pool2d, |r| vec![uniform(r, &[4, 4, 2], -1.0, 1.0)], |_, x| {
    x[0].avg_pool2d(2)
});
op_test!(dot, pair(-2.0, 2.0), |_, x| x[0].dot(x[1]));
op_test!(
    stack,
    |r| (0..3).map(|_| uniform(r, &[], -1.0, 1.0)).collect(),
    stack_scalars
);
op_test!(
    softmax_pair,
    |r| vec![uniform(r, &[], -4.0, 4.0), uniform(r, &[], -4.0, 4.0)],
    |tape, x| {
        let (p, q) = softmax2(x[0], x[1])?;
        stack_scalars(tape, &[p, q])
    }
);

#[test]
fn sigmoid_of_affine_map() {
    let mut rng = rng::stream(1, "affine");
    for _ in 0..INSTANCES {
        let w = uniform(&mut rng, &[3, 4], -1.0, 1.0);
        let x = uniform(&mut rng, &[4, 1], -1.0, 1.0);
        let err = grad_check(|_, v| v[0].matmul(v[1])?.sigmoid()?.sum(), &[w, x], H).unwrap();
        assert!(err < 1e-6, "rel err {err:e}");
    }
}

/// Raw fields spread across the occupancy threshold, with no voxel so
/// dense that it hides the ones behind it.
fn chain_grid(r: usize, rng: &mut Rng) -> DensityGrid {
    let n = r * r * r;
    let d = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a = (0..3 * n).map(|_| rng.random_range(-1.5..1.5)).collect();
    DensityGrid::new(
        Tensor::new(&[r, r, r], d).unwrap(),
        Tensor::new(&[r, r, r, 3], a).unwrap(),
    )
    .unwrap()
}

fn chain_reward<'t>(
    r: usize,
    cams: &[Camera],
    q: &CriticQuery,
    critic: &CriticParams,
    x: &[Var<'t>],
) -> Result<Var<'t>> {
    let vars = GridVars::from_raw(r, x[0], x[1]).unwrap();
    let views = render_views(&vars, cams).unwrap();
    Ok(critic.eval(q, &views).unwrap().reward)
}

#[test]
fn render_then_reward_chain() {
    let r = 8;
    let grid = chain_grid(r, &mut rng::stream(2, "chain"));
    let cams = ring_with_samples(4, 15f64.to_radians(), 16, 16, 32).unwrap();
    let q = build_query("a sphere", "sphere", true).unwrap();
    let critic = CriticParams::default();
    let point = [grid.raw_density().clone(), grid.raw_albedo().clone()];
    let near_threshold: Vec<bool> = grid.density().iter().map(|&s| (s - 1.0).abs() < 1e-3).collect();
    let coords: Vec<(usize, usize)> = (0..r * r * r)
        .filter(|&j| !near_threshold[j])
        .map(|j| (0, j))
        .chain((0..3 * r * r * r).step_by(7).map(|j| (1, j)))
        .collect();
    let err = grad_check_coords(|_, x| chain_reward(r, &cams, &q, &critic, x), &point, 1e-4, &coords).unwrap();
    assert!(err < 1e-4, "rel err {err:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sum_gradient_is_ones(v in prop::collection::vec(-1e3f64..1e3, 1..20)) {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(v.clone()));
        let g = tape.backward(x.sum().unwrap()).unwrap();
        prop_assert!(g.data(x).iter().all(|&d| d == 1.0));
    }

    #[test]
    fn backward_is_linear_in_root(
        v in prop::collection::vec(-3f64..3.0, 2..10),
        a in -5f64..5.0,
        b in -5f64..5.0,
    ) {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(v));
        let f = x.sigmoid().unwrap().sum().unwrap();
        let g = x.square().unwrap().sum().unwrap();
        let combo = f.scale(a).unwrap().add(g.scale(b).unwrap()).unwrap();
        let (gf, gg, gc) = (
            tape.backward(f).unwrap().data(x),
            tape.backward(g).unwrap().data(x),
            tape.backward(combo).unwrap().data(x),
        );
        for i in 0..gc.len() {
            prop_assert!((gc[i] - (a * gf[i] + b * gg[i])).abs() < 1e-12 * (1.0 + gc[i].abs()));
        }
    }

    #[test]
    fn softplus_sigmoid_stay_finite(x in -1e4f64..1e4) {
        let tape = Tape::new();
        let v = tape.leaf(Tensor::scalar(x));
        let s = v.softplus().unwrap();
        let g = tape.backward(s).unwrap().get(v).item();
        prop_assert!(s.item().is_finite() && s.item() >= 0.0);
        prop_assert!((0.0..=1.0).contains(&g));
    }
}
