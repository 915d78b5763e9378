//! Reverse-mode differentiation through a one-layer network, then the same
//! gradients checked against central differences.
//!
//! cargo run --example tensor_autograd

use leafnet::gradcheck::{check, DEFAULT_STEP};
use leafnet::Tensor;

fn layer(xs: &[Tensor<f64>]) -> leafnet::Result<Tensor<f64>> {
    let (x, w, b) = (&xs[0], &xs[1], &xs[2]);
    x.matmul(w)?.add(b)?.relu()?.mean(None, false)
}

fn main() -> leafnet::Result<()> {
    let x = Tensor::from_vec(vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75], &[2, 3])?;
    let w = Tensor::from_vec(vec![0.2, -0.4, 0.6, 0.1, -0.3, 0.8], &[3, 2])?.requires_grad(true);
    // broadcast over the batch dimension
    let b = Tensor::from_vec(vec![0.05, -0.05], &[2])?.requires_grad(true);

    let loss = layer(&[x.clone(), w.clone(), b.clone()])?;
    loss.backward()?;
    println!("loss        {:.6}", loss.item()?);
    println!("dloss/dw    {:?}", w.grad_vec().unwrap());
    println!("dloss/db    {:?}", b.grad_vec().unwrap());

    let report = check(layer, &[x, w.detach(), b.detach()], DEFAULT_STEP, 0)?;
    println!("worst relative error vs finite differences: {:.2e}", report.worst());
    Ok(())
}
