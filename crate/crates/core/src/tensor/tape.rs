use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::{Result, Tensor, TensorError};

/// Local backward rule of a recorded node.
///
/// Receives the upstream gradient (flattened like the node's value), the
/// node's own value and its parents' values; returns one optional gradient
/// contribution per parent, in parent order.
pub type BackwardFn = Box<dyn Fn(&[f64], &Tensor, &[&Tensor]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    op: &'static str,
    value: Rc<Tensor>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

/// Append-only record of a computation.
///
/// Single-writer: a tape is `!Sync` and lives on the thread that records it.
/// Nodes are pushed in evaluation order, so every parent id precedes its
/// children.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.tape.nodes.borrow();
        let n = &nodes[self.id];
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("op", &n.op)
            .field("shape", &n.value.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push("leaf", value, Vec::new(), None)
    }

    /// Records a constant. Gradients flowing into it are discarded.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push("const", value, Vec::new(), None)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }

    /// Records a node with a caller-supplied backward rule.
    ///
    /// Rejects non-finite forward values and parents from other tapes.
    pub fn custom<'t>(
        &'t self,
        op: &'static str,
        parents: &[Var<'t>],
        value: Tensor,
        backward: BackwardFn,
    ) -> Result<Var<'t>> {
        for p in parents {
            if !std::ptr::eq(p.tape, self) {
                return Err(TensorError::ForeignTape);
            }
        }
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op });
        }
        Ok(self.push(
            op,
            value,
            parents.iter().map(|p| p.id).collect(),
            Some(backward),
        ))
    }

    fn push(
        &self,
        op: &'static str,
        value: Tensor,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            op,
            value: Rc::new(value),
            parents,
            backward,
        });
        Var { tape: self, id }
    }

    /// Gradients of a scalar `root` with respect to every node.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let v = root.value();
        if !v.is_scalar() {
            return Err(TensorError::NonScalarRoot(v.shape().to_vec()));
        }
        self.vjp(root, &Tensor::full(v.shape(), 1.0)?)
    }

    /// Vector-Jacobian product: pulls `cotangent` (shaped like `output`)
    /// back to every node recorded before `output`.
    pub fn vjp(&self, output: Var<'_>, cotangent: &Tensor) -> Result<Gradients> {
        if !std::ptr::eq(output.tape, self) {
            return Err(TensorError::ForeignTape);
        }
        let nodes = self.nodes.borrow();
        let out_node = &nodes[output.id];
        super::same_shape("vjp", &out_node.value, cotangent)?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.id + 1];
        grads[output.id] = Some(cotangent.data().to_vec());
        // Reverse topological order: each node is visited once, after all
        // of its consumers have deposited their contributions.
        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if let Some(rule) = &node.backward {
                let parents: Vec<&Tensor> =
                    node.parents.iter().map(|&p| &*nodes[p].value).collect();
                let contribs = rule(&g, &node.value, &parents);
                debug_assert_eq!(contribs.len(), node.parents.len());
                for (&p, c) in node.parents.iter().zip(contribs) {
                    let Some(c) = c else { continue };
                    match &mut grads[p] {
                        Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(c),
                    }
                }
            }
            grads[id] = Some(g);
        }
        let shapes = nodes[..=output.id]
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// The single value of a scalar var.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    /// Copy of the value with no tape attachment.
    pub fn detach(&self) -> Tensor {
        (*self.value()).clone()
    }

    pub(crate) fn check_same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::ForeignTape)
        }
    }
}

/// Result of a backward pass.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not reach the root.
    pub fn get(&self, v: Var<'_>) -> Tensor {
        self.get_id(v.id).unwrap_or_else(|| {
            let shape = v.shape();
            Tensor::zeros(&shape).expect("recorded shapes are valid")
        })
    }

    fn get_id(&self, id: usize) -> Option<Tensor> {
        let g = self.grads.get(id)?.as_ref()?;
        Some(Tensor::new(&self.shapes[id], g.clone()).expect("gradient matches node shape"))
    }

    /// Gradient data for `v`, or zeros.
    pub fn data(&self, v: Var<'_>) -> Vec<f64> {
        self.get(v).into_data()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = x.mul(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 6.0);
    }

    #[test]
    fn disconnected_leaf_is_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let z = tape.leaf(Tensor::vector(vec![5.0, 6.0, 7.0]));
        let y = x.exp().unwrap().sum().unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.data(z), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(
            tape.backward(x),
            Err(TensorError::NonScalarRoot(_))
        ));
    }

    #[test]
    fn parents_precede_children() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.3, -0.2]));
        let y = x.sigmoid().unwrap().mul(x).unwrap().sum().unwrap();
        let nodes = tape.nodes.borrow();
        for (id, n) in nodes.iter().enumerate() {
            assert!(n.parents.iter().all(|&p| p < id));
        }
        assert_eq!(y.id(), nodes.len() - 1);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // y = x*x + x*x uses x four times.
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.5));
        let a = x.mul(x).unwrap();
        let y = a.add(a).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 6.0);
    }

    #[test]
    fn foreign_tape_rejected() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = t1.leaf(Tensor::scalar(1.0));
        let b = t2.leaf(Tensor::scalar(1.0));
        assert_eq!(a.add(b).unwrap_err(), TensorError::ForeignTape);
    }
}
