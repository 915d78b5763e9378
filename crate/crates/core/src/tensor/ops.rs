use super::shape::{broadcast_index_map, broadcast_shape};
use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Elementwise binary operations with trailing-dimension broadcasting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Elementwise maximum. The gradient goes to the left operand on ties.
    Max,
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Max => "max",
        }
    }

    fn apply<T: Element>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Max => {
                if a >= b {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// Sums `grad` (laid out over `out_shape`) back onto a source that was
/// broadcast through `map`.
fn reduce_to_source<T: Element>(grad: &[T], map: Option<&[usize]>, src_len: usize) -> Vec<T> {
    match map {
        None => grad.to_vec(),
        Some(map) => {
            let mut out = vec![T::zero(); src_len];
            for (g, &i) in grad.iter().zip(map) {
                out[i] = out[i] + *g;
            }
            out
        }
    }
}

impl<T: Element> Tensor<T> {
    /// Applies `op` elementwise, broadcasting `self` and `other` together.
    pub fn binary(&self, op: BinaryOp, other: &Tensor<T>) -> Result<Tensor<T>> {
        let out_shape = broadcast_shape(self.shape(), other.shape())?;
        if op == BinaryOp::Div && other.data().iter().any(|v| *v == T::zero()) {
            return Err(Error::Arithmetic {
                op: "div",
                detail: "division by exact zero".into(),
            });
        }
        // None means "same layout as the output", which skips the index maps.
        let map_a = (self.shape() != out_shape.as_slice())
            .then(|| broadcast_index_map(self.shape(), &out_shape));
        let map_b = (other.shape() != out_shape.as_slice())
            .then(|| broadcast_index_map(other.shape(), &out_shape));
        let (a, b) = (self.data(), other.data());
        let n: usize = out_shape.iter().product();
        let data: Vec<T> = match (&map_a, &map_b) {
            (None, None) => a.iter().zip(b).map(|(&x, &y)| op.apply(x, y)).collect(),
            _ => (0..n)
                .map(|i| {
                    let x = a[map_a.as_ref().map_or(i, |m| m[i])];
                    let y = b[map_b.as_ref().map_or(i, |m| m[i])];
                    op.apply(x, y)
                })
                .collect(),
        };

        let (lhs, rhs) = (self.clone(), other.clone());
        Tensor::from_op(op.name(), out_shape, data, &[self, other], move |g| {
            let (a, b) = (lhs.data(), rhs.data());
            let at = |i: usize| a[map_a.as_ref().map_or(i, |m| m[i])];
            let bt = |i: usize| b[map_b.as_ref().map_or(i, |m| m[i])];
            let (ga, gb): (Vec<T>, Vec<T>) = match op {
                BinaryOp::Add => (g.to_vec(), g.to_vec()),
                BinaryOp::Sub => (g.to_vec(), g.iter().map(|&v| -v).collect()),
                BinaryOp::Mul => g
                    .iter()
                    .enumerate()
                    .map(|(i, &gi)| (gi * bt(i), gi * at(i)))
                    .unzip(),
                BinaryOp::Div => g
                    .iter()
                    .enumerate()
                    .map(|(i, &gi)| {
                        let (x, y) = (at(i), bt(i));
                        (gi / y, -gi * x / (y * y))
                    })
                    .unzip(),
                BinaryOp::Max => g
                    .iter()
                    .enumerate()
                    .map(|(i, &gi)| {
                        if at(i) >= bt(i) {
                            (gi, T::zero())
                        } else {
                            (T::zero(), gi)
                        }
                    })
                    .unzip(),
            };
            vec![
                lhs.requires_grad_flag()
                    .then(|| reduce_to_source(&ga, map_a.as_deref(), lhs.numel())),
                rhs.requires_grad_flag()
                    .then(|| reduce_to_source(&gb, map_b.as_deref(), rhs.numel())),
            ]
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryOp::Add, other)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryOp::Sub, other)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryOp::Mul, other)
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryOp::Div, other)
    }

    pub fn maximum(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryOp::Max, other)
    }

    pub fn add_scalar(&self, s: T) -> Result<Tensor<T>> {
        self.add(&Tensor::scalar(s))
    }

    pub fn mul_scalar(&self, s: T) -> Result<Tensor<T>> {
        self.mul(&Tensor::scalar(s))
    }

    pub fn relu(&self) -> Result<Tensor<T>> {
        let data = self.data().iter().map(|&v| v.max(T::zero())).collect();
        let x = self.clone();
        Tensor::from_op("relu", self.shape().to_vec(), data, &[self], move |g| {
            let gx = g
                .iter()
                .zip(x.data())
                .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                .collect();
            vec![Some(gx)]
        })
    }

    /// Same data under a new shape with the same number of elements.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape()),
            ));
        }
        Tensor::from_op("reshape", shape.to_vec(), self.to_vec(), &[self], |g| {
            vec![Some(g.to_vec())]
        })
    }
}
