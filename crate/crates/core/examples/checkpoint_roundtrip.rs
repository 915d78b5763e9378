//! Saves a model, dumps the start of the file, reloads it into a differently
//! seeded model and compares outputs; then flips one byte and reloads again.
//!
//! cargo run --example checkpoint_roundtrip

use leafnet::checkpoint::{load, save, state_dict};
use leafnet::nn::{Mode, Module, ResNet, ResNetConfig};
use leafnet::{no_grad, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("compact.leafckpt");
    let mut source = ResNet::<f32>::new(ResNetConfig::compact(4), 1)?;
    save(&source, &path)?;
    let bytes = std::fs::read(&path)?;
    println!("{} tensors, {} bytes", state_dict(&source).len(), bytes.len());
    for row in bytes[..48].chunks(16) {
        let hex: Vec<String> = row.iter().map(|b| format!("{b:02x}")).collect();
        let text: String = row.iter().map(|&b| if b.is_ascii_graphic() { b as char } else { '.' }).collect();
        println!("  {}  {text}", hex.join(" "));
    }

    let mut copy = ResNet::<f32>::new(ResNetConfig::compact(4), 2)?;
    load(&mut copy, &path)?;
    source.set_mode(Mode::Eval);
    copy.set_mode(Mode::Eval);
    let x = Tensor::from_vec((0..3 * 16 * 16).map(|i| (i as f32 * 0.1).sin()).collect(), &[1, 3, 16, 16])?;
    let (a, b) = (no_grad(|| source.forward(&x))?, no_grad(|| copy.forward(&x))?);
    println!("reloaded logits identical: {}", a.data() == b.data());

    let mut damaged = bytes;
    damaged[100] ^= 0x01;
    let bad = dir.path().join("damaged.leafckpt");
    std::fs::write(&bad, &damaged)?;
    match load(&mut copy, &bad) {
        Err(e) => println!("damaged file: {e}"),
        Ok(()) => println!("damaged file loaded?!"),
    }
    Ok(())
}
