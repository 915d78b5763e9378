//! Imports pretrained backbone weights through a name map.
//!
//! With no arguments, exports a small model, re-imports its backbone into a
//! fresh model and prints the import summary.
//!
//! With a dump from `scripts/convert_torchvision.py`, imports it into a
//! 1000-class ResNet-34 (head included) and, given the `--parity-out`
//! directory, compares eval-mode logits against the stored reference:
//!
//! cargo run --release --example import_pretrained -- dump.leafckpt [parity_dir]

use std::path::{Path, PathBuf};

use leafnet::checkpoint::{import_pretrained, state_dict, Checkpoint, HeadPolicy, ImportMode, NameMap};
use leafnet::nn::{build_resnet34, Mode, Module, ResNet, ResNetConfig};
use leafnet::Tensor;

fn read_f32(path: &Path) -> Vec<f32> {
    std::fs::read(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn self_demo() -> leafnet::Result<()> {
    let source = ResNet::<f32>::new(ResNetConfig::compact(3), 11)?;
    let dump = state_dict(&source);
    println!("exported {} tensors", dump.len());

    let mut target = ResNet::<f32>::new(ResNetConfig::compact(5), 12)?;
    let summary = import_pretrained(&dump, &mut target, &NameMap::identity(&source), ImportMode::Strict)?;
    print!("{}", summary.to_text());
    println!("head keeps its fresh {}-class initialization", target.num_classes());
    Ok(())
}

fn torchvision(dump_path: &Path, parity: Option<PathBuf>) -> leafnet::Result<()> {
    let dump = Checkpoint::read(dump_path)?;
    let mut model = build_resnet34::<f32>(1000, 0)?;
    let map = NameMap::torchvision_resnet(&[3, 4, 6, 3]).with_head(HeadPolicy::Import);
    let summary = import_pretrained(&dump, &mut model, &map, ImportMode::Strict)?;
    print!("{}", summary.to_text());

    if let Some(dir) = parity {
        let input = read_f32(&dir.join("input.f32"));
        let expected = read_f32(&dir.join("logits.f32"));
        let n = input.len() / (3 * 224 * 224);
        model.set_mode(Mode::Eval);
        let logits = leafnet::no_grad(|| model.forward(&Tensor::from_vec(input, &[n, 3, 224, 224])?))?;
        let (mut max_abs, mut max_ref) = (0.0f32, 0.0f32);
        for (a, b) in logits.data().iter().zip(&expected) {
            max_abs = max_abs.max((a - b).abs());
            max_ref = max_ref.max(b.abs());
        }
        println!("logits: max |ours - reference| = {max_abs:.3e} (reference max |logit| {max_ref:.3})");
    }
    Ok(())
}

fn main() -> leafnet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.as_slice() {
        [] => self_demo(),
        [dump] => torchvision(Path::new(dump), None),
        [dump, dir, ..] => torchvision(Path::new(dump), Some(PathBuf::from(dir))),
    }
}
