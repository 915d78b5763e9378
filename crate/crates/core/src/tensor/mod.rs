//! Dense row-major tensors with tape-based reverse-mode differentiation.
//!
//! A [`Tensor`] is an immutable, cheaply clonable handle. Every forward op
//! returns a new tensor; when any input requires a gradient (and recording is
//! enabled, see [`no_grad`]) the output carries a tape node holding the inputs
//! and a one-shot backward closure. [`Tensor::backward`] replays those nodes in
//! reverse topological order exactly once, accumulating into the `grad` field
//! of every leaf that requires it.
//!
//! All forward ops validate their output: a non-finite value is reported as
//! [`Error::NonFinite`](crate::Error::NonFinite) instead of being propagated.

mod autograd;
mod element;
mod linalg;
mod ops;
mod reduce;
pub(crate) mod shape;

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

pub use autograd::{is_grad_enabled, no_grad};
pub use element::{DType, Element};
pub use ops::BinaryOp;
pub use reduce::ReduceOp;

use crate::error::{Error, Result};

pub(crate) type BackwardFn<T> = Box<dyn FnOnce(&[T]) -> Vec<Option<Vec<T>>> + Send>;

pub(crate) struct Node<T: Element> {
    pub(crate) op: &'static str,
    pub(crate) inputs: Vec<Tensor<T>>,
    pub(crate) backward: BackwardFn<T>,
}

pub(crate) enum NodeState<T: Element> {
    Leaf,
    Pending(Node<T>),
    Consumed,
}

struct Inner<T: Element> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    retain_grad: AtomicBool,
    grad: Mutex<Option<Vec<T>>>,
    node: Mutex<NodeState<T>>,
}

/// An n-dimensional array of `T` with an optional gradient.
pub struct Tensor<T: Element = f32> {
    inner: Arc<Inner<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.inner.shape);
        if self.numel() <= 16 {
            s.field("data", &self.inner.data);
        }
        s.field("requires_grad", &self.inner.requires_grad).finish()
    }
}

fn lock<U>(m: &Mutex<U>) -> MutexGuard<'_, U> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl<T: Element> Tensor<T> {
    fn from_parts(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, node: NodeState<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Arc::new(Inner {
                shape,
                data,
                requires_grad,
                retain_grad: AtomicBool::new(false),
                grad: Mutex::new(None),
                node: Mutex::new(node),
            }),
        }
    }

    /// Builds a leaf tensor, checking that `data` fills `shape` exactly.
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "from_vec",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Self::from_parts(shape.to_vec(), data, false, NodeState::Leaf))
    }

    pub fn scalar(value: T) -> Self {
        Self::from_parts(Vec::new(), vec![value], false, NodeState::Leaf)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n], false, NodeState::Leaf)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    /// Returns a leaf copy of this tensor (sharing no tape) with the flag set.
    pub fn requires_grad(self, flag: bool) -> Self {
        Self::from_parts(
            self.inner.shape.clone(),
            self.inner.data.clone(),
            flag,
            NodeState::Leaf,
        )
    }

    /// Same values, no history, no gradient.
    pub fn detach(&self) -> Self {
        Self::from_parts(
            self.inner.shape.clone(),
            self.inner.data.clone(),
            false,
            NodeState::Leaf,
        )
    }

    /// Asks `backward` to also store the gradient of this non-leaf tensor.
    pub fn retain_grad(&self) {
        self.inner.retain_grad.store(true, Ordering::Relaxed);
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn ndim(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::shape(
                "item",
                format!("expected one element, shape is {:?}", self.shape()),
            ));
        }
        Ok(self.inner.data[0])
    }

    pub fn requires_grad_flag(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        matches!(*lock(&self.inner.node), NodeState::Leaf)
    }

    /// Name of the op that produced this tensor, if it still has a pending node.
    pub fn op_name(&self) -> Option<&'static str> {
        match &*lock(&self.inner.node) {
            NodeState::Pending(n) => Some(n.op),
            _ => None,
        }
    }

    /// Accumulated gradient as a fresh detached tensor.
    pub fn grad(&self) -> Option<Tensor<T>> {
        lock(&self.inner.grad)
            .as_ref()
            .map(|g| Self::from_parts(self.inner.shape.clone(), g.clone(), false, NodeState::Leaf))
    }

    pub fn grad_vec(&self) -> Option<Vec<T>> {
        lock(&self.inner.grad).clone()
    }

    pub fn zero_grad(&self) {
        *lock(&self.inner.grad) = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        let mut slot = lock(&self.inner.grad);
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn node_lock(&self) -> MutexGuard<'_, NodeState<T>> {
        lock(&self.inner.node)
    }

    pub(crate) fn retains_grad(&self) -> bool {
        self.inner.retain_grad.load(Ordering::Relaxed)
    }

    pub(crate) fn ptr_id(&self) -> usize {
        Arc::as_ptr(&self.inner) as *const () as usize
    }

    /// Converts to another element type as a new leaf.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor::<U>::from_parts(
            self.inner.shape.clone(),
            self.inner.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            false,
            NodeState::Leaf,
        )
    }

    /// Central constructor for op outputs: validates finiteness, and records a
    /// tape node when recording is on and some input requires a gradient.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: &[&Tensor<T>],
        backward: impl FnOnce(&[T]) -> Vec<Option<Vec<T>>> + Send + 'static,
    ) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        let track = autograd::is_grad_enabled() && inputs.iter().any(|t| t.requires_grad_flag());
        if !track {
            return Ok(Self::from_parts(shape, data, false, NodeState::Leaf));
        }
        let node = Node {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward),
        };
        Ok(Self::from_parts(shape, data, true, NodeState::Pending(node)))
    }
}

impl<T: Element> PartialEq for Tensor<T> {
    /// Value equality: same shape and bit-identical data.
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self
                .data()
                .iter()
                .zip(other.data())
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}
