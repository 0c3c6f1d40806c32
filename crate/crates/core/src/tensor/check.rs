//! Central finite-difference gradient checking.

use super::{Result, Tape, Tensor, Var};

fn eval<F>(f: &F, point: &[Tensor]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = point.iter().map(|t| tape.leaf(t.clone())).collect();
    Ok(f(&tape, &leaves)?.item())
}

/// Worst relative error between the tape gradient of `f` and central
/// differences with step `h`, over every coordinate of every input.
///
/// The relative error uses `max(|analytic|, |numeric|, 1e-12)` as denominator.
pub fn grad_check<F>(f: F, point: &[Tensor], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let coords: Vec<(usize, usize)> = point
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
        .collect();
    grad_check_coords(f, point, h, &coords)
}

/// As [`grad_check`], restricted to `(input index, flat element index)`
/// coordinates.
pub fn grad_check_coords<F>(f: F, point: &[Tensor], h: f64, coords: &[(usize, usize)]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = point.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = f(&tape, &leaves)?;
    let grads = tape.backward(root)?;
    let analytic: Vec<Vec<f64>> = leaves.iter().map(|&l| grads.data(l)).collect();

    let mut worst = 0.0f64;
    for &(i, j) in coords {
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[i] = bump(&point[i], j, h)?;
        minus[i] = bump(&point[i], j, -h)?;
        let numeric = (eval(&f, &plus)? - eval(&f, &minus)?) / (2.0 * h);
        let a = analytic[i][j];
        let denom = a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

fn bump(t: &Tensor, j: usize, h: f64) -> Result<Tensor> {
    let mut d = t.data().to_vec();
    d[j] += h;
    Tensor::new(t.shape(), d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = Tensor::vector(vec![0.5, -1.25, 2.0]);
        let err = grad_check(
            |tape, x| {
                let w = tape.constant(w.clone());
                x[0].dot(w)?.offset(3.0)
            },
            &[Tensor::vector(vec![0.1, 0.2, 0.3])],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = grad_check(
            |tape, _x| Ok(tape.scalar(4.0)),
            &[Tensor::vector(vec![1.0, 2.0])],
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }
}
