use super::shape::{check_axes, strides};
use super::{Element, Tensor};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    /// Maximum; the gradient flows to the first maximal element of each group.
    Max,
}

impl<T: Element> Tensor<T> {
    /// Reduces over `axes` (`None` = every axis).
    ///
    /// With `keepdim` the reduced axes stay as extent 1, otherwise they are
    /// removed (reducing everything yields a zero-dim scalar).
    pub fn reduce(&self, op: ReduceOp, axes: Option<&[usize]>, keepdim: bool) -> Result<Tensor<T>> {
        let rank = self.ndim();
        let axes: Vec<usize> = match axes {
            Some(a) => {
                check_axes("reduce", a, rank)?;
                a.to_vec()
            }
            None => (0..rank).collect(),
        };
        let in_shape = self.shape().to_vec();
        let reduced: Vec<bool> = (0..rank).map(|d| axes.contains(&d)).collect();
        let kept_shape: Vec<usize> = in_shape
            .iter()
            .zip(&reduced)
            .map(|(&e, &r)| if r { 1 } else { e })
            .collect();
        let out_shape: Vec<usize> = if keepdim {
            kept_shape.clone()
        } else {
            in_shape
                .iter()
                .zip(&reduced)
                .filter(|(_, &r)| !r)
                .map(|(&e, _)| e)
                .collect()
        };

        // Output slot of every input element.
        let kept_strides = strides(&kept_shape);
        let in_strides = strides(&in_shape);
        let slot: Vec<usize> = (0..self.numel())
            .map(|flat| {
                (0..rank)
                    .filter(|&d| !reduced[d])
                    .map(|d| (flat / in_strides[d]) % in_shape[d] * kept_strides[d])
                    .sum()
            })
            .collect();

        let out_len: usize = kept_shape.iter().product();
        let group = self.numel().checked_div(out_len).unwrap_or(0);
        let x = self.data();
        let (data, argmax) = match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                let mut acc = vec![T::zero(); out_len];
                for (v, &s) in x.iter().zip(&slot) {
                    acc[s] = acc[s] + *v;
                }
                if op == ReduceOp::Mean {
                    let inv = T::one() / T::from_f64(group as f64);
                    acc.iter_mut().for_each(|v| *v = *v * inv);
                }
                (acc, None)
            }
            ReduceOp::Max => {
                let mut best: Vec<Option<(T, usize)>> = vec![None; out_len];
                for (i, (v, &s)) in x.iter().zip(&slot).enumerate() {
                    if best[s].is_none_or(|(b, _)| *v > b) {
                        best[s] = Some((*v, i));
                    }
                }
                let vals = best.iter().map(|b| b.map_or(T::zero(), |(v, _)| v)).collect();
                let idx: Vec<usize> = best.iter().map(|b| b.map_or(0, |(_, i)| i)).collect();
                (vals, Some(idx))
            }
        };

        let n_in = self.numel();
        let name = match op {
            ReduceOp::Sum => "sum",
            ReduceOp::Mean => "mean",
            ReduceOp::Max => "max_reduce",
        };
        Tensor::from_op(name, out_shape, data, &[self], move |g| {
            let gx = match (&argmax, op) {
                (Some(idx), _) => {
                    let mut gx = vec![T::zero(); n_in];
                    for (gi, &i) in g.iter().zip(idx) {
                        gx[i] = gx[i] + *gi;
                    }
                    gx
                }
                (None, ReduceOp::Mean) => {
                    let inv = T::one() / T::from_f64(group as f64);
                    slot.iter().map(|&s| g[s] * inv).collect()
                }
                (None, _) => slot.iter().map(|&s| g[s]).collect(),
            };
            vec![Some(gx)]
        })
    }

    pub fn sum(&self, axes: Option<&[usize]>, keepdim: bool) -> Result<Tensor<T>> {
        self.reduce(ReduceOp::Sum, axes, keepdim)
    }

    pub fn mean(&self, axes: Option<&[usize]>, keepdim: bool) -> Result<Tensor<T>> {
        self.reduce(ReduceOp::Mean, axes, keepdim)
    }

    pub fn max(&self, axes: Option<&[usize]>, keepdim: bool) -> Result<Tensor<T>> {
        self.reduce(ReduceOp::Max, axes, keepdim)
    }
}
