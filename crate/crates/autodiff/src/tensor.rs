use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{AutodiffError, Result};

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Whether newly created operations are recorded on the graph.
pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Restores the previous grad mode when dropped.
pub struct GradModeGuard {
    prev: bool,
}

impl Drop for GradModeGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|c| c.set(self.prev));
    }
}

pub(crate) fn set_grad_enabled(enabled: bool) -> GradModeGuard {
    let prev = GRAD_ENABLED.with(|c| c.replace(enabled));
    GradModeGuard { prev }
}

/// Disables graph recording until the guard is dropped.
pub fn no_grad() -> GradModeGuard {
    set_grad_enabled(false)
}

/// Runs `f` with graph recording disabled.
pub fn with_no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = no_grad();
    f()
}

/// Recorded primitive. Each variant holds its parents.
pub(crate) enum Op {
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    MulConst(Tensor, Rc<Vec<f64>>),
    Neg(Tensor),
    Scale(Tensor, f64),
    AddScalar(Tensor),
    Expand(Tensor),
    Sum(Tensor),
    SumAxis(Tensor, usize),
    RepeatAxis(Tensor, usize),
    Reshape(Tensor),
    Transpose(Tensor),
    MatMul(Tensor, Tensor),
    LeakyRelu(Tensor, f64),
    Relu(Tensor),
    Abs(Tensor),
    Powf(Tensor, f64),
    Exp(Tensor),
    Ln(Tensor),
    Concat(Vec<Tensor>, usize),
    Slice(Tensor, usize, usize),
    LogSoftmax(Tensor),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![a, b],
            Op::Concat(parts, _) => parts.iter().collect(),
            Op::MulConst(a, _)
            | Op::Neg(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Expand(a)
            | Op::Sum(a)
            | Op::SumAxis(a, _)
            | Op::RepeatAxis(a, _)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::LeakyRelu(a, _)
            | Op::Relu(a)
            | Op::Abs(a)
            | Op::Powf(a, _)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Slice(a, _, _)
            | Op::LogSoftmax(a) => vec![a],
        }
    }
}

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Option<Op>,
    pub(crate) grad: RefCell<Option<Vec<f64>>>,
}

/// A dense row-major f64 tensor, optionally recorded on the autodiff graph.
///
/// Cloning is cheap: clones share the same node. Node ids are assigned in
/// creation order, so every node's id exceeds the ids of its parents and a
/// descending-id sweep is a valid reverse topological order.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("data", &self.0.data)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Option<Op>) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data,
            requires_grad,
            op,
            grad: RefCell::new(None),
        }))
    }

    /// Result of an operation; recorded only if grad mode is on and some parent needs gradients.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>, op: Op) -> Tensor {
        let record = is_grad_enabled() && op.parents().iter().any(|p| p.requires_grad());
        if record {
            Tensor::build(shape, data, true, Some(op))
        } else {
            Tensor::build(shape, data, false, None)
        }
    }

    /// Constant tensor (no gradient tracking).
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if shape.contains(&0) {
            return Err(AutodiffError::Invalid(format!(
                "zero-sized dimension in shape {shape:?}"
            )));
        }
        if numel(shape) != data.len() {
            return Err(AutodiffError::Invalid(format!(
                "shape {shape:?} needs {} values, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Tensor::build(shape.to_vec(), data, false, None))
    }

    /// Leaf tensor whose gradient is accumulated by [`Tensor::backward`].
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::new(shape, data)?;
        Ok(t.into_leaf(true))
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::build(Vec::new(), vec![value], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::build(shape.to_vec(), vec![0.0; numel(shape)], false, None)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::build(shape.to_vec(), vec![1.0; numel(shape)], false, None)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        let n = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != w) {
            return Err(AutodiffError::Invalid("ragged rows".into()));
        }
        Tensor::new(&[n, w], rows.concat())
    }

    fn into_leaf(self, requires_grad: bool) -> Tensor {
        match Rc::try_unwrap(self.0) {
            Ok(node) => Tensor::build(node.shape, node.data, requires_grad, None),
            Err(rc) => Tensor::build(rc.shape.clone(), rc.data.clone(), requires_grad, None),
        }
    }

    /// Same values, detached from the graph, with gradient tracking switched on.
    pub fn requires_grad_leaf(&self) -> Tensor {
        Tensor::build(self.0.shape.clone(), self.0.data.clone(), true, None)
    }

    /// Same values, detached from the graph.
    pub fn detach(&self) -> Tensor {
        if !self.requires_grad() {
            return self.clone();
        }
        Tensor::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(AutodiffError::NotScalar {
                op: "item",
                shape: self.0.shape.clone(),
            });
        }
        Ok(self.0.data[0])
    }

    /// Element of a rank-2 tensor.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.0.data[row * self.0.shape[1] + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.0.shape[1];
        &self.0.data[row * w..(row + 1) * w]
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    /// Accumulated gradient, or zeros if nothing has been accumulated.
    pub fn grad_or_zeros(&self) -> Vec<f64> {
        self.grad().unwrap_or_else(|| vec![0.0; self.numel()])
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Replaces the values of a leaf, keeping its gradient accumulator.
    ///
    /// The result is a new leaf; graphs recorded against the old values are unaffected.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Tensor> {
        if data.len() != self.numel() {
            return Err(AutodiffError::Invalid(format!(
                "replacement data has {} values, tensor has {}",
                data.len(),
                self.numel()
            )));
        }
        let t = Tensor::build(self.0.shape.clone(), data, self.requires_grad(), None);
        *t.0.grad.borrow_mut() = self.grad();
        Ok(t)
    }
}
