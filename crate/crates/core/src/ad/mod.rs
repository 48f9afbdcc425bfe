//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! Graphs are define-by-run and owned by their output tensors: every op
//! result holds strong references to its inputs, so the DAG for one forward
//! pass lives exactly as long as tensors derived from it. There is no global
//! tape and no graph reuse across steps — each forward pass builds a fresh
//! graph, which [`Tensor::backward`] walks once in reverse topological order.
//!
//! Leaves created with [`Tensor::param`] carry a gradient accumulator;
//! repeated backward calls without [`Tensor::zero_grad`] accumulate into it.

use std::cell::{Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

mod conv;
mod linalg;
mod ops;
mod sample;

pub mod gradcheck;

pub use sample::ScatterSpec;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);
static DEBUG_NONFINITE: AtomicBool = AtomicBool::new(false);
static NO_GRAD: AtomicBool = AtomicBool::new(false);

/// When enabled, every op scans its output and panics on the first
/// non-finite value, naming the op that produced it. Off by default.
pub fn set_debug_nonfinite(enabled: bool) {
    DEBUG_NONFINITE.store(enabled, Ordering::Relaxed);
}

pub fn debug_nonfinite_enabled() -> bool {
    DEBUG_NONFINITE.load(Ordering::Relaxed)
}

/// While the guard lives, ops produce plain constants and no graph is
/// recorded. Used for evaluation passes over tracked parameters.
pub struct NoGradGuard {
    previous: bool,
}

pub fn no_grad() -> NoGradGuard {
    let previous = NO_GRAD.swap(true, Ordering::Relaxed);
    NoGradGuard { previous }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        NO_GRAD.store(self.previous, Ordering::Relaxed);
    }
}

/// Backward rule of one op: given the gradient w.r.t. the op output and an
/// input slot index, add this op's contribution into the slot's gradient
/// accumulator. Called once per differentiable input slot.
pub(crate) type BackFn<T> = Box<dyn Fn(&[T], usize, &mut [T])>;

pub(crate) struct Node<T: Scalar> {
    id: u64,
    op: &'static str,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    requires_grad: bool,
    grad: Option<RefCell<Vec<T>>>,
    parents: Vec<Tensor<T>>,
    backward: Option<BackFn<T>>,
}

/// Dense n-dimensional tensor with optional gradient tracking.
///
/// Cloning is cheap (reference counted). A scalar has shape `[]` and one
/// element. Data is row-major.
pub struct Tensor<T: Scalar>(Rc<Node<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("op", &self.0.op)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub(crate) fn check_shape_len(shape: &[usize], len: usize) {
    let numel: usize = shape.iter().product();
    assert!(
        numel == len,
        "shape {:?} implies {} elements, data has {}",
        shape,
        numel,
        len
    );
}

impl<T: Scalar> Tensor<T> {
    fn new_node(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        grad: Option<RefCell<Vec<T>>>,
        parents: Vec<Tensor<T>>,
        backward: Option<BackFn<T>>,
    ) -> Self {
        check_shape_len(&shape, data.len());
        assert!(
            shape.iter().all(|&d| d > 0),
            "dimension sizes must be positive, got {:?}",
            shape
        );
        if debug_nonfinite_enabled() {
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                panic!(
                    "non-finite value produced by op `{}` (first at flat index {}, shape {:?})",
                    op, i, shape
                );
            }
        }
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            op,
            shape,
            data: RefCell::new(data),
            requires_grad,
            grad,
            parents,
            backward,
        }))
    }

    /// Constant tensor: no gradient tracking.
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Self {
        Self::new_node("const", shape.to_vec(), data, false, None, Vec::new(), None)
    }

    /// Leaf parameter: tracked, with a zeroed gradient accumulator.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Self {
        let n = data.len();
        Self::new_node(
            "param",
            shape.to_vec(),
            data,
            true,
            Some(RefCell::new(vec![T::zero(); n])),
            Vec::new(),
            None,
        )
    }

    pub fn scalar(v: T) -> Self {
        Self::from_vec(vec![v], &[])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n: usize = shape.iter().product();
        Self::from_vec(vec![v; n], shape)
    }

    /// Result of an op. Tracking propagates if any parent tracks; otherwise
    /// the graph edges are dropped and the result is a plain constant.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: BackFn<T>,
    ) -> Self {
        let track = !NO_GRAD.load(Ordering::Relaxed) && parents.iter().any(|p| p.requires_grad());
        if track {
            Self::new_node(op, shape, data, true, None, parents, Some(backward))
        } else {
            Self::new_node(op, shape, data, false, None, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn len(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.parents.is_empty() && self.0.backward.is_none()
    }

    pub fn op_name(&self) -> &'static str {
        self.0.op
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    /// Mutable access to the raw buffer. Only meaningful for leaves between
    /// optimization steps; mutating an interior node of a live graph breaks
    /// the gradients saved by its consumers.
    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        assert!(self.len() == 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data.borrow()[0]
    }

    /// Accumulated gradient of a leaf, if it has one.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.as_ref().map(|g| g.borrow().clone())
    }

    pub fn zero_grad(&self) {
        if let Some(g) = &self.0.grad {
            for v in g.borrow_mut().iter_mut() {
                *v = T::zero();
            }
        }
    }

    /// Constant copy of this tensor, cut off from the graph.
    pub fn detach(&self) -> Tensor<T> {
        Self::from_vec(self.to_vec(), &self.0.shape.clone())
    }

    /// Backpropagate from a scalar loss, accumulating dLoss/dLeaf into every
    /// reachable leaf created with [`Tensor::param`].
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::NonScalarBackward(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(()); // constant loss: all gradients are zero
        }
        let order = self.topo_order();
        let mut grads: HashMap<u64, Vec<T>> = HashMap::new();
        grads.insert(self.0.id, vec![T::one()]);
        for node in order.iter().rev() {
            let g = match grads.remove(&node.0.id) {
                Some(g) => g,
                None => continue,
            };
            if let Some(cell) = &node.0.grad {
                let mut acc = cell.borrow_mut();
                for (a, gi) in acc.iter_mut().zip(g.iter()) {
                    *a += *gi;
                }
            }
            if let Some(back) = &node.0.backward {
                for (slot, parent) in node.0.parents.iter().enumerate() {
                    if !parent.requires_grad() {
                        continue;
                    }
                    let buf = grads
                        .entry(parent.0.id)
                        .or_insert_with(|| vec![T::zero(); parent.len()]);
                    back(&g, slot, buf);
                }
            }
        }
        Ok(())
    }

    /// Tracked ancestors in topological order (inputs before consumers),
    /// including `self` last. Visits each node exactly once.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        enum Step<S: Scalar> {
            Enter(Tensor<S>),
            Exit(Tensor<S>),
        }
        let mut order = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack = vec![Step::Enter(self.clone())];
        while let Some(step) = stack.pop() {
            match step {
                Step::Enter(t) => {
                    if !visited.insert(t.0.id) {
                        continue;
                    }
                    stack.push(Step::Exit(t.clone()));
                    for p in &t.0.parents {
                        if p.requires_grad() && !visited.contains(&p.0.id) {
                            stack.push(Step::Enter(p.clone()));
                        }
                    }
                }
                Step::Exit(t) => order.push(t),
            }
        }
        order
    }

    /// Structural snapshot of the graph below this tensor, in topological
    /// order. Intended for diagnostics and structural tests.
    pub fn trace(&self) -> GraphTrace {
        let order = self.topo_order();
        let nodes = order
            .iter()
            .map(|t| GraphNodeInfo {
                id: t.0.id,
                op: t.0.op,
                inputs: t.0.parents.iter().map(|p| p.0.id).collect(),
                is_leaf: t.is_leaf(),
            })
            .collect();
        GraphTrace { nodes }
    }
}

/// One op record in a [`GraphTrace`].
#[derive(Debug, Clone)]
pub struct GraphNodeInfo {
    pub id: u64,
    pub op: &'static str,
    pub inputs: Vec<u64>,
    pub is_leaf: bool,
}

/// Topologically ordered view of a computation graph.
#[derive(Debug, Clone)]
pub struct GraphTrace {
    pub nodes: Vec<GraphNodeInfo>,
}

impl GraphTrace {
    pub fn leaf_ids(&self) -> Vec<u64> {
        self.nodes.iter().filter(|n| n.is_leaf).map(|n| n.id).collect()
    }

    /// True if every node's inputs appear before it (the defining property
    /// of a topological order over an acyclic graph).
    pub fn is_topologically_ordered(&self) -> bool {
        let mut seen = HashSet::new();
        for node in &self.nodes {
            for input in &node.inputs {
                // untracked inputs are not part of the trace
                if self.nodes.iter().any(|n| n.id == *input) && !seen.contains(input) {
                    return false;
                }
            }
            seen.insert(node.id);
        }
        true
    }
}
