//! Builds ResNet-34 with a 4-class head and runs one forward pass at 224x224,
//! printing the activation shape after each stage.
//!
//! cargo run --release --example resnet34_forward -- [batch]

use std::time::Instant;

use leafnet::nn::{build_resnet34, Mode, Module};
use leafnet::{no_grad, Tensor};

fn main() -> leafnet::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let mut model = build_resnet34::<f32>(4, 0)?;
    model.set_mode(Mode::Eval);
    println!("blocks per stage {:?}", model.stages.iter().map(Vec::len).collect::<Vec<_>>());
    println!("{} parameters", model.parameter_count());

    let x = Tensor::from_vec((0..n * 3 * 224 * 224).map(|i| (i % 97) as f32 / 97.0 - 0.5).collect(), &[n, 3, 224, 224])?;
    let start = Instant::now();
    let (logits, stages) = no_grad(|| model.forward_stages(&x))?;
    for (s, t) in stages.iter().enumerate() {
        println!("stage{} -> {:?}", s + 1, t.shape());
    }
    println!("logits {:?} in {:.2}s", logits.shape(), start.elapsed().as_secs_f64());
    Ok(())
}
