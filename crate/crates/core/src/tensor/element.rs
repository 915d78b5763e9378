use std::fmt::{Debug, Display};

use num_traits::Float;

/// Storage type tag, recorded in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

/// Scalar types a [`Tensor`](super::Tensor) can hold.
///
/// `f32` is the training default; `f64` exists so gradient checks have enough
/// headroom for finite differences.
pub trait Element:
    Float + Default + Debug + Display + Send + Sync + std::iter::Sum + 'static
{
    const DTYPE: DType;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c <- alpha * a @ b + beta * c` with explicit row/column strides.
    ///
    /// Strides let callers multiply by a transposed operand without copying it.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! check_gemm_bounds {
    ($m:expr, $k:expr, $n:expr, $a:expr, $sa:expr, $b:expr, $sb:expr, $c:expr) => {
        let span = |rows: usize, cols: usize, (rs, cs): (isize, isize)| -> usize {
            if rows == 0 || cols == 0 {
                0
            } else {
                ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
            }
        };
        assert!($sa.0 >= 0 && $sa.1 >= 0 && $sb.0 >= 0 && $sb.1 >= 0);
        assert!(span($m, $k, $sa) <= $a.len(), "gemm: lhs buffer too small");
        assert!(span($k, $n, $sb) <= $b.len(), "gemm: rhs buffer too small");
        assert!($m * $n <= $c.len(), "gemm: output buffer too small");
    };
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    ) {
        check_gemm_bounds!(m, k, n, a, a_strides, b, b_strides, c);
        if m == 0 || n == 0 {
            return;
        }
        // SAFETY: the bounds check above guarantees every strided access stays
        // inside the slices, and `c` is exclusively borrowed.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                a_strides.0,
                a_strides.1,
                b.as_ptr(),
                b_strides.0,
                b_strides.1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    ) {
        check_gemm_bounds!(m, k, n, a, a_strides, b, b_strides, c);
        if m == 0 || n == 0 {
            return;
        }
        // SAFETY: see the f32 implementation.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                a_strides.0,
                a_strides.1,
                b.as_ptr(),
                b_strides.0,
                b_strides.1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}
