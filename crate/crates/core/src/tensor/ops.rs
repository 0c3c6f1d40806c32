use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::{same_shape, Result, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryKind {
    Exp,
    Log,
    Softplus,
    Sigmoid,
    Relu,
    Neg,
    Scale(f64),
    Offset(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

/// `ln(1 + e^x)` without overflow for large `x` or underflow to zero for
/// moderately negative `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two-way softmax via shift-by-max. Returns `(p_yes, p_no)`.
pub fn softmax2_values(z_yes: f64, z_no: f64) -> (f64, f64) {
    let m = z_yes.max(z_no);
    let ey = (z_yes - m).exp();
    let en = (z_no - m).exp();
    let s = ey + en;
    (ey / s, en / s)
}

/// Records the two-way softmax of scalar logits; returns `(p_yes, p_no)`.
pub fn softmax2<'t>(z_yes: Var<'t>, z_no: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    z_yes.check_same_tape(&z_no)?;
    let (zy, zn) = (z_yes.value(), z_no.value());
    if !zy.is_scalar() || !zn.is_scalar() {
        return Err(TensorError::ShapeMismatch {
            op: "softmax2",
            lhs: zy.shape().to_vec(),
            rhs: zn.shape().to_vec(),
        });
    }
    if !zy.item().is_finite() || !zn.item().is_finite() {
        return Err(TensorError::NonFinite { op: "softmax2" });
    }
    let tape = z_yes.tape();
    let (py, pn) = softmax2_values(zy.item(), zn.item());
    // dp_yes/dz_yes = p(1-p), dp_yes/dz_no = -p(1-p); p_no mirrors it.
    let p_yes = tape.custom(
        "softmax2_yes",
        &[z_yes, z_no],
        Tensor::scalar(py),
        Box::new(move |g, _, _| {
            let d = g[0] * py * pn;
            vec![Some(vec![d]), Some(vec![-d])]
        }),
    )?;
    let p_no = tape.custom(
        "softmax2_no",
        &[z_yes, z_no],
        Tensor::scalar(pn),
        Box::new(move |g, _, _| {
            let d = g[0] * py * pn;
            vec![Some(vec![-d]), Some(vec![d])]
        }),
    )?;
    Ok((p_yes, p_no))
}

enum Broadcast {
    None,
    Lhs,
    Rhs,
}

fn broadcast_mode(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::None)
    } else if b.len() == 1 {
        Ok(Broadcast::Rhs)
    } else if a.len() == 1 {
        Ok(Broadcast::Lhs)
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn reduce_to(mode_is_scalar: bool, g: Vec<f64>) -> Vec<f64> {
    if mode_is_scalar {
        vec![g.iter().sum()]
    } else {
        g
    }
}

impl<'t> Var<'t> {
    pub fn binary(self, kind: BinaryKind, other: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        let op = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        let mode = broadcast_mode(op, &a, &b)?;
        let out_shape = match mode {
            Broadcast::Lhs => b.shape().to_vec(),
            _ => a.shape().to_vec(),
        };
        let n = a.len().max(b.len());
        let av = |i: usize| if a.len() == 1 { a.data()[0] } else { a.data()[i] };
        let bv = |i: usize| if b.len() == 1 { b.data()[0] } else { b.data()[i] };
        if kind == BinaryKind::Div {
            if let Some(i) = (0..b.len()).find(|&i| b.data()[i] == 0.0) {
                return Err(TensorError::Domain {
                    op,
                    detail: format!("division by zero at index {i}"),
                });
            }
        }
        let data: Vec<f64> = (0..n)
            .map(|i| match kind {
                BinaryKind::Add => av(i) + bv(i),
                BinaryKind::Sub => av(i) - bv(i),
                BinaryKind::Mul => av(i) * bv(i),
                BinaryKind::Div => av(i) / bv(i),
            })
            .collect();
        let value = Tensor::new(&out_shape, data)?;
        let (a_scalar, b_scalar) = match mode {
            Broadcast::None => (false, false),
            Broadcast::Lhs => (true, false),
            Broadcast::Rhs => (false, true),
        };
        let backward: super::BackwardFn = Box::new(move |g, _out, p| {
            let (a, b) = (p[0], p[1]);
            let av = |i: usize| if a_scalar { a.data()[0] } else { a.data()[i] };
            let bv = |i: usize| if b_scalar { b.data()[0] } else { b.data()[i] };
            let (ga, gb): (Vec<f64>, Vec<f64>) = match kind {
                BinaryKind::Add => (g.to_vec(), g.to_vec()),
                BinaryKind::Sub => (g.to_vec(), g.iter().map(|x| -x).collect()),
                BinaryKind::Mul => (
                    g.iter().enumerate().map(|(i, x)| x * bv(i)).collect(),
                    g.iter().enumerate().map(|(i, x)| x * av(i)).collect(),
                ),
                BinaryKind::Div => (
                    g.iter().enumerate().map(|(i, x)| x / bv(i)).collect(),
                    g.iter()
                        .enumerate()
                        .map(|(i, x)| -x * av(i) / (bv(i) * bv(i)))
                        .collect(),
                ),
            };
            vec![
                Some(reduce_to(a_scalar, ga)),
                Some(reduce_to(b_scalar, gb)),
            ]
        });
        self.tape().custom(op, &[self, other], value, backward)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Add, other)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Sub, other)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Mul, other)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Div, other)
    }

    pub fn unary(self, kind: UnaryKind) -> Result<Var<'t>> {
        let a = self.value();
        let (op, f): (&'static str, fn(f64, f64) -> f64) = match kind {
            UnaryKind::Exp => ("exp", |x, _| x.exp()),
            UnaryKind::Log => ("log", |x, _| x.ln()),
            UnaryKind::Softplus => ("softplus", |x, _| softplus(x)),
            UnaryKind::Sigmoid => ("sigmoid", |x, _| sigmoid(x)),
            UnaryKind::Relu => ("relu", |x, _| x.max(0.0)),
            UnaryKind::Neg => ("neg", |x, _| -x),
            UnaryKind::Scale(_) => ("scale", |x, c| x * c),
            UnaryKind::Offset(_) => ("offset", |x, c| x + c),
        };
        let c = match kind {
            UnaryKind::Scale(c) | UnaryKind::Offset(c) => c,
            _ => 0.0,
        };
        if kind == UnaryKind::Log {
            if let Some(i) = a.data().iter().position(|&x| x <= 0.0) {
                return Err(TensorError::Domain {
                    op,
                    detail: format!("log of {} at index {i}", a.data()[i]),
                });
            }
        }
        let value = a.map(|x| f(x, c));
        let backward: super::BackwardFn = Box::new(move |g, out, p| {
            let x = p[0].data();
            let y = out.data();
            let d: Vec<f64> = match kind {
                UnaryKind::Exp => g.iter().zip(y).map(|(g, y)| g * y).collect(),
                UnaryKind::Log => g.iter().zip(x).map(|(g, x)| g / x).collect(),
                UnaryKind::Softplus => g.iter().zip(x).map(|(g, &x)| g * sigmoid(x)).collect(),
                UnaryKind::Sigmoid => g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                UnaryKind::Relu => g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect(),
                UnaryKind::Neg => g.iter().map(|g| -g).collect(),
                UnaryKind::Scale(c) => g.iter().map(|g| g * c).collect(),
                UnaryKind::Offset(_) => g.to_vec(),
            };
            vec![Some(d)]
        });
        self.tape().custom(op, &[self], value, backward)
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Exp)
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Log)
    }

    pub fn softplus(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Softplus)
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Relu)
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Neg)
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        self.unary(UnaryKind::Scale(c))
    }

    pub fn offset(self, c: f64) -> Result<Var<'t>> {
        self.unary(UnaryKind::Offset(c))
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(self) -> Result<Var<'t>> {
        self.neg()?.offset(1.0)
    }

    pub fn square(self) -> Result<Var<'t>> {
        self.mul(self)
    }

    /// 2-D matrix product.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let value = Tensor::new(&[m, n], gemm_nn(a.data(), b.data(), m, k, n))?;
        let backward: super::BackwardFn = Box::new(move |g, _, p| {
            let ga = gemm_nt(g, p[1].data(), m, n, k);
            let gb = gemm_tn(p[0].data(), g, m, k, n);
            vec![Some(ga), Some(gb)]
        });
        self.tape().custom("matmul", &[self, other], value, backward)
    }

    /// `a[m×n] + bias[n]`, broadcasting the bias over rows.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(&bias)?;
        let (a, b) = (self.value(), bias.value());
        if a.rank() != 2 || b.rank() != 1 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let n = b.len();
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + b.data()[i % n])
            .collect();
        let value = Tensor::new(a.shape(), data)?;
        let backward: super::BackwardFn = Box::new(move |g, _, _| {
            let mut gb = vec![0.0; n];
            for row in g.chunks(n) {
                gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            vec![Some(g.to_vec()), Some(gb)]
        });
        self.tape().custom("add_bias", &[self, bias], value, backward)
    }

    /// Reduction over one axis, or over everything when `axis` is `None`.
    ///
    /// The max backward routes the full gradient to the first maximal
    /// element along the reduced extent.
    pub fn reduce(self, kind: ReduceKind, axis: Option<usize>) -> Result<Var<'t>> {
        let a = self.value();
        let shape = a.shape().to_vec();
        let (outer, extent, inner, out_shape) = match axis {
            None => (1, a.len(), 1, Vec::new()),
            Some(ax) => {
                if ax >= shape.len() {
                    return Err(TensorError::Axis {
                        axis: ax,
                        rank: shape.len(),
                    });
                }
                let outer: usize = shape[..ax].iter().product();
                let inner: usize = shape[ax + 1..].iter().product();
                let mut out = shape.clone();
                out.remove(ax);
                (outer, shape[ax], inner, out)
            }
        };
        let x = a.data();
        let mut data = vec![0.0; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |e: usize| x[(o * extent + e) * inner + i];
                let slot = o * inner + i;
                data[slot] = match kind {
                    ReduceKind::Sum => (0..extent).map(at).sum(),
                    ReduceKind::Mean => (0..extent).map(at).sum::<f64>() / extent as f64,
                    ReduceKind::Max => {
                        let mut best = 0;
                        for e in 1..extent {
                            if at(e) > at(best) {
                                best = e;
                            }
                        }
                        argmax[slot] = best;
                        at(best)
                    }
                };
            }
        }
        let op = match kind {
            ReduceKind::Sum => "sum",
            ReduceKind::Mean => "mean",
            ReduceKind::Max => "max",
        };
        let value = Tensor::new(&out_shape, data)?;
        let total = a.len();
        let backward: super::BackwardFn = Box::new(move |g, _, _| {
            let mut gx = vec![0.0; total];
            for o in 0..outer {
                for i in 0..inner {
                    let slot = o * inner + i;
                    match kind {
                        ReduceKind::Sum | ReduceKind::Mean => {
                            let v = if kind == ReduceKind::Mean {
                                g[slot] / extent as f64
                            } else {
                                g[slot]
                            };
                            for e in 0..extent {
                                gx[(o * extent + e) * inner + i] = v;
                            }
                        }
                        ReduceKind::Max => {
                            gx[(o * extent + argmax[slot]) * inner + i] = g[slot];
                        }
                    }
                }
            }
            vec![Some(gx)]
        });
        self.tape().custom(op, &[self], value, backward)
    }

    pub fn sum(self) -> Result<Var<'t>> {
        self.reduce(ReduceKind::Sum, None)
    }

    pub fn mean(self) -> Result<Var<'t>> {
        self.reduce(ReduceKind::Mean, None)
    }

    pub fn max(self) -> Result<Var<'t>> {
        self.reduce(ReduceKind::Max, None)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        self.tape().custom(
            "reshape",
            &[self],
            value,
            Box::new(|g, _, _| vec![Some(g.to_vec())]),
        )
    }

    /// Slice `[start, end)` of the last axis.
    pub fn slice_last(self, start: usize, end: usize) -> Result<Var<'t>> {
        let a = self.value();
        let shape = a.shape().to_vec();
        let last = *shape.last().ok_or(TensorError::Axis { axis: 0, rank: 0 })?;
        if start >= end || end > last {
            return Err(TensorError::Domain {
                op: "slice_last",
                detail: format!("range {start}..{end} outside 0..{last}"),
            });
        }
        let w = end - start;
        let rows = a.len() / last;
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&a.data()[r * last + start..r * last + end]);
        }
        let mut out_shape = shape.clone();
        *out_shape.last_mut().unwrap() = w;
        let value = Tensor::new(&out_shape, data)?;
        let total = a.len();
        self.tape().custom(
            "slice_last",
            &[self],
            value,
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; total];
                for r in 0..rows {
                    gx[r * last + start..r * last + end].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Block-average pooling of an `[H, W, C]` image by `factor` per axis.
    pub fn avg_pool2d(self, factor: usize) -> Result<Var<'t>> {
        let a = self.value();
        let s = a.shape().to_vec();
        if s.len() != 3 || factor == 0 || !s[0].is_multiple_of(factor) || !s[1].is_multiple_of(factor) {
            return Err(TensorError::Domain {
                op: "avg_pool2d",
                detail: format!("shape {s:?} not divisible by factor {factor}"),
            });
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        let (ph, pw) = (h / factor, w / factor);
        let norm = 1.0 / (factor * factor) as f64;
        let x = a.data();
        let mut data = vec![0.0; ph * pw * c];
        for y in 0..h {
            for xx in 0..w {
                let o = ((y / factor) * pw + xx / factor) * c;
                let i = (y * w + xx) * c;
                for ch in 0..c {
                    data[o + ch] += x[i + ch] * norm;
                }
            }
        }
        let value = Tensor::new(&[ph, pw, c], data)?;
        self.tape().custom(
            "avg_pool2d",
            &[self],
            value,
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; h * w * c];
                for y in 0..h {
                    for xx in 0..w {
                        let o = ((y / factor) * pw + xx / factor) * c;
                        let i = (y * w + xx) * c;
                        for ch in 0..c {
                            gx[i + ch] = g[o + ch] * norm;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Inner product of two same-shaped tensors, as a scalar.
    pub fn dot(self, other: Var<'t>) -> Result<Var<'t>> {
        same_shape("dot", &self.value(), &other.value())?;
        self.mul(other)?.sum()
    }
}

/// Stacks scalar vars into a rank-1 var.
pub fn stack_scalars<'t>(tape: &'t Tape, items: &[Var<'t>]) -> Result<Var<'t>> {
    let data: Vec<f64> = items.iter().map(|v| v.item()).collect();
    let n = data.len();
    tape.custom(
        "stack",
        items,
        Tensor::new(&[n], data)?,
        Box::new(move |g, _, _| (0..n).map(|i| Some(vec![g[i]])).collect()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn exp_values() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 1.0]));
        let y = x.exp().unwrap().value();
        assert_eq!(y.data()[0], 1.0);
        assert!(close(y.data()[1], std::f64::consts::E, 1e-15));
    }

    #[test]
    fn softplus_deep_negative_no_overflow() {
        let v = softplus(-50.0);
        assert!(v > 0.0 && v < 1e-20);
        assert!(close(softplus(800.0), 800.0, 1e-12));
    }

    #[test]
    fn mul_gradient_product_rule() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![2.0]));
        let b = tape.leaf(Tensor::vector(vec![3.0]));
        let y = a.mul(b).unwrap().sum().unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.data(a), vec![3.0]);
        assert_eq!(g.data(b), vec![2.0]);
    }

    #[test]
    fn binary_shape_mismatch_names_both_shapes() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        match a.add(b) {
            Err(TensorError::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2]);
                assert_eq!(rhs, vec![3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_broadcast_both_sides() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = tape.leaf(Tensor::scalar(2.0));
        let y = s.mul(a).unwrap().sum().unwrap();
        assert_eq!(y.item(), 12.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(s).item(), 6.0);
        assert_eq!(g.data(a), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn domain_violations_rejected() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(a.log(), Err(TensorError::Domain { .. })));
        let b = tape.leaf(Tensor::vector(vec![1.0, 1.0]));
        assert!(matches!(b.div(a), Err(TensorError::Domain { .. })));
    }

    #[test]
    fn non_finite_forward_rejected() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1000.0]));
        assert!(matches!(a.exp(), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn matmul_hand_values() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Tensor::new(&[2, 1], vec![5.0, 6.0]).unwrap());
        let c = a.matmul(b).unwrap();
        assert_eq!(c.shape(), vec![2, 1]);
        assert_eq!(c.value().data(), &[17.0, 39.0]);
        let eye = tape.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        assert_eq!(eye.matmul(a).unwrap().value().data(), a.value().data());
        assert!(matches!(
            b.matmul(b),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn reductions() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert_eq!(a.sum().unwrap().item(), 6.0);
        let c = tape.leaf(Tensor::full(&[2, 3], 4.25).unwrap());
        assert_eq!(c.mean().unwrap().item(), 4.25);
        assert!(matches!(
            a.reduce(ReduceKind::Sum, Some(1)),
            Err(TensorError::Axis { axis: 1, rank: 1 })
        ));
        let m = tape.leaf(Tensor::new(&[2, 3], vec![1.0, 5.0, 2.0, 7.0, 0.0, 9.0]).unwrap());
        let r = m.reduce(ReduceKind::Sum, Some(0)).unwrap();
        assert_eq!(r.value().data(), &[8.0, 5.0, 11.0]);
        let r = m.reduce(ReduceKind::Max, Some(1)).unwrap();
        assert_eq!(r.value().data(), &[5.0, 9.0]);
    }

    #[test]
    fn max_backward_first_argmax() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 5.0, 5.0]));
        let m = a.max().unwrap();
        let g = tape.backward(m).unwrap();
        assert_eq!(g.data(a), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn softmax2_examples() {
        let (p, q) = softmax2_values(0.3, 0.3);
        assert_eq!(p, 0.5);
        assert_eq!(q, 0.5);
        let (p, _) = softmax2_values(2.0, 0.0);
        assert!(close(p, 1.0 / (1.0 + (-2.0f64).exp()), 1e-15));
        assert!(close(p, 0.880_797_077_977_882_3, 1e-12));
        let (p, q) = softmax2_values(1000.0, 0.0);
        assert!(p.is_finite() && q.is_finite());
        assert_eq!(p, 1.0);
    }

    #[test]
    fn softmax2_recorded_gradient() {
        let tape = Tape::new();
        let zy = tape.leaf(Tensor::scalar(0.7));
        let zn = tape.leaf(Tensor::scalar(-0.4));
        let (py, _) = softmax2(zy, zn).unwrap();
        let g = tape.backward(py).unwrap();
        let p = py.item();
        assert!(close(g.get(zy).item(), p * (1.0 - p), 1e-15));
        assert!(close(g.get(zn).item(), -p * (1.0 - p), 1e-15));
    }

    #[test]
    fn pool_and_slice() {
        let tape = Tape::new();
        let img = tape.leaf(Tensor::new(&[2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap());
        let p = img.avg_pool2d(2).unwrap();
        assert_eq!(p.value().data(), &[3.0, 4.0]);
        let s = img.slice_last(1, 2).unwrap();
        assert_eq!(s.value().data(), &[1.0, 3.0, 5.0, 7.0]);
    }
}
