//! Finite-difference gradient checking.
//!
//! The function under test is projected onto a fixed random direction
//! (`loss = sum(f(x) * r)`) so a single backward pass exercises the full
//! vector-Jacobian product. Numerical derivatives use central differences and
//! only ever call `f` forward under [`no_grad`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{no_grad, Tensor};

/// Default step for central differences at 64-bit precision.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor in the relative error, so that gradients which are
/// zero up to rounding do not inflate the ratio.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst elementwise relative error per checked input.
    pub max_rel_error: Vec<f64>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares analytic and central-difference gradients of `f` at `inputs`.
///
/// Every input is treated as a differentiable leaf; `step` is the difference
/// step `h`.
pub fn check<F>(f: F, inputs: &[Tensor<f64>], step: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|t| t.detach().requires_grad(true)).collect();
    let out = f(&leaves)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..out.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dir = Tensor::from_vec(dir, out.shape())?;
    out.mul(&dir)?.sum(None, false)?.backward()?;

    let project = |xs: &[Tensor<f64>]| -> Result<f64> {
        let y = no_grad(|| f(xs))?;
        Ok(y.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum())
    };

    let mut report = GradCheckReport {
        max_rel_error: Vec::with_capacity(inputs.len()),
    };
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = leaf
            .grad_vec()
            .unwrap_or_else(|| vec![0.0; leaf.numel()]);
        let mut worst = 0.0f64;
        for j in 0..leaf.numel() {
            let mut probe: Vec<Tensor<f64>> = leaves.iter().map(Tensor::detach).collect();
            let mut plus = leaf.to_vec();
            plus[j] += step;
            probe[i] = Tensor::from_vec(plus, leaf.shape())?;
            let f_plus = project(&probe)?;
            let mut minus = leaf.to_vec();
            minus[j] -= step;
            probe[i] = Tensor::from_vec(minus, leaf.shape())?;
            let f_minus = project(&probe)?;
            let numeric = (f_plus - f_minus) / (2.0 * step);
            worst = worst.max(relative_error(analytic[j], numeric));
        }
        if !worst.is_finite() {
            return Err(Error::NonFinite { op: "gradcheck" });
        }
        report.max_rel_error.push(worst);
    }
    Ok(report)
}
