use super::{Element, Tensor};
use crate::error::{Error, Result};

impl<T: Element> Tensor<T> {
    /// `[m,k] @ [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k, n) = match (self.shape(), other.shape()) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            (a, b) => {
                return Err(Error::shape(
                    "matmul",
                    format!("cannot multiply {a:?} by {b:?}"),
                ))
            }
        };
        let mut out = vec![T::zero(); m * n];
        let row = |cols: usize| (cols as isize, 1isize);
        T::gemm(m, k, n, T::one(), self.data(), row(k), other.data(), row(n), T::zero(), &mut out);

        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op("matmul", vec![m, n], out, &[self, other], move |g| {
            // dA = G @ B^T, dB = A^T @ G
            let ga = a.requires_grad_flag().then(|| {
                let mut ga = vec![T::zero(); m * k];
                T::gemm(m, n, k, T::one(), g, (n as isize, 1), b.data(), (1, n as isize), T::zero(), &mut ga);
                ga
            });
            let gb = b.requires_grad_flag().then(|| {
                let mut gb = vec![T::zero(); k * n];
                T::gemm(k, m, n, T::one(), a.data(), (1, k as isize), g, (n as isize, 1), T::zero(), &mut gb);
                gb
            });
            vec![ga, gb]
        })
    }

    /// Transpose of a rank-2 tensor (materialized).
    pub fn transpose(&self) -> Result<Tensor<T>> {
        let [r, c] = *self.shape() else {
            return Err(Error::shape(
                "transpose",
                format!("expected rank 2, got {:?}", self.shape()),
            ));
        };
        let data = transpose_buf(self.data(), r, c);
        Tensor::from_op("transpose", vec![c, r], data, &[self], move |g| {
            vec![Some(transpose_buf(g, c, r))]
        })
    }
}

fn transpose_buf<T: Copy>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for j in 0..cols {
        out.extend((0..rows).map(|i| src[i * cols + j]));
    }
    out
}
