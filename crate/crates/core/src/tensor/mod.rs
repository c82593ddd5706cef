//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Every value is an f64 node in a dynamically built computation graph.
//! Forward ops record a backward closure; [`Tensor::backward`] walks the
//! graph in reverse topological order and accumulates gradients into the
//! `grad` buffer of every node on the differentiation path.
//!
//! Tensors are row-major and at most two-dimensional, which is all the
//! reading pipeline needs: sequences of hidden states are `(n, d)` matrices,
//! logit vectors are `(n,)`, losses are scalars.

mod check;
pub(crate) mod linalg;
mod ops;

pub use check::grad_check;
pub use ops::Mode;

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

type BackwardFn = Box<dyn Fn(&[f64])>;

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    /// Leaf parameter: the optimizer reads and writes this node.
    requires_grad: bool,
    /// On the differentiation path (a leaf, or downstream of one).
    needs_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Shared handle to a graph node. Cloning is cheap and aliases the same node.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Node>>,
}

impl Tensor {
    fn new_node(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(RefCell::new(Node {
                shape,
                data,
                grad: None,
                requires_grad,
                needs_grad: requires_grad,
                parents: Vec::new(),
                backward: None,
            })),
        }
    }

    /// A constant (non-trainable) tensor.
    pub fn constant(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new_node(shape.to_vec(), data, false)
    }

    /// A trainable leaf parameter.
    pub fn parameter(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new_node(shape.to_vec(), data, true)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::constant(shape, vec![0.0; shape.iter().product()])
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::constant(&[1], vec![v])
    }

    /// Gaussian init with the given standard deviation (Box-Muller over the
    /// seeded stream, so initialization is reproducible).
    pub fn randn(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor {
        use rand::Rng;
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            data.push(std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos());
        }
        Tensor::parameter(shape, data)
    }

    /// Result node of an op: `needs_grad` if any parent does.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>, parents: &[&Tensor]) -> Tensor {
        let needs = parents.iter().any(|p| p.needs_grad());
        let t = Tensor::new_node(shape, data, false);
        {
            let mut node = t.inner.borrow_mut();
            node.needs_grad = needs;
            node.parents = parents.iter().map(|p| (*p).clone()).collect();
        }
        t
    }

    pub(crate) fn set_backward(&self, f: impl Fn(&[f64]) + 'static) {
        self.inner.borrow_mut().backward = Some(Box::new(f));
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    /// Number of rows when viewed as a matrix (1 for vectors/scalars).
    pub fn rows(&self) -> usize {
        let node = self.inner.borrow();
        if node.shape.len() == 2 {
            node.shape[0]
        } else {
            1
        }
    }

    /// Size of the last axis.
    pub fn cols(&self) -> usize {
        let node = self.inner.borrow();
        *node.shape.last().unwrap_or(&1)
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub(crate) fn needs_grad(&self) -> bool {
        self.inner.borrow().needs_grad
    }

    /// Borrow the raw row-major data.
    pub fn data(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.borrow(), |n| n.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> f64 {
        let node = self.inner.borrow();
        assert_eq!(node.data.len(), 1, "item() on non-scalar tensor");
        node.data[0]
    }

    pub fn get_flat(&self, i: usize) -> f64 {
        self.inner.borrow().data[i]
    }

    pub fn set_flat(&self, i: usize, v: f64) {
        self.inner.borrow_mut().data[i] = v;
    }

    /// Overwrite the data buffer in place (same length required).
    pub fn set_data(&self, data: &[f64]) {
        let mut node = self.inner.borrow_mut();
        assert_eq!(node.data.len(), data.len(), "set_data length mismatch");
        node.data.copy_from_slice(data);
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Add `g` into this node's grad buffer (no-op off the diff path).
    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut node = self.inner.borrow_mut();
        if !node.needs_grad {
            return;
        }
        let len = node.data.len();
        debug_assert_eq!(g.len(), len);
        let buf = node.grad.get_or_insert_with(|| vec![0.0; len]);
        for (b, gi) in buf.iter_mut().zip(g) {
            *b += gi;
        }
    }

    pub(crate) fn check_same_shape(&self, rhs: &Tensor, op: &str) -> Result<()> {
        let (a, b) = (self.shape(), rhs.shape());
        if a != b {
            return Err(Error::shape(op, format!("operand shapes {a:?} vs {b:?}")));
        }
        Ok(())
    }

    pub(crate) fn check_2d(&self, op: &str) -> Result<(usize, usize)> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::shape(op, format!("expected 2-d operand, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    /// Reverse-mode pass from a scalar loss. Gradients accumulate into every
    /// node on the differentiation path; call [`Tensor::zero_grad`] on
    /// parameters between steps.
    pub fn backward(&self) {
        assert_eq!(self.numel(), 1, "backward() requires a scalar loss");
        let order = Self::topo_order(self);
        self.accumulate_grad(&[1.0]);
        for t in order.iter().rev() {
            let (g, has_backward) = {
                let node = t.inner.borrow();
                (node.grad.clone(), node.backward.is_some())
            };
            let Some(g) = g else { continue };
            if !has_backward {
                continue;
            }
            // Take the closure out so the node is not borrowed while parents
            // are mutated; put it back afterwards.
            let f = t.inner.borrow_mut().backward.take().unwrap();
            f(&g);
            t.inner.borrow_mut().backward = Some(f);
        }
    }

    fn topo_order(root: &Tensor) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            let key = Rc::as_ptr(&t.inner) as usize;
            if !visited.insert(key) {
                continue;
            }
            stack.push((t.clone(), true));
            for p in t.inner.borrow().parents.iter() {
                stack.push((p.clone(), false));
            }
        }
        order
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let node = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &node.shape)
            .field("requires_grad", &node.requires_grad)
            .field("data", &node.data)
            .finish()
    }
}

#[cfg(test)]
mod tests;
