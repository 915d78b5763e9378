//! Trains a compact residual network from scratch on synthetic coloured
//! shapes and prints per-epoch test accuracy.
//!
//! cargo run --release --example toy_training -- [epochs] [seed]

use leafnet::data::{stratified_split, AugmentSpec, BatchSpec, Normalization, ShapesTask};
use leafnet::nn::{ResNet, ResNetConfig};
use leafnet::train::{fit, FitConfig, Policy};

fn main() -> leafnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(7);

    let task = ShapesTask::primaries();
    let all = task.generate(100, 32, seed);
    let split = stratified_split(&ShapesTask::records(&all), &task.class_name_refs(), 0.2, seed)?;
    let (train, test) = (all.select(&split.train)?, all.select(&split.test)?);
    println!("{} train / {} test images", train.ids().len(), test.ids().len());

    let mut model = ResNet::<f32>::new(ResNetConfig::compact(task.num_classes()), seed)?;
    let cfg = FitConfig {
        batch: BatchSpec {
            batch_size: 16,
            shuffle: true,
            augment: AugmentSpec {
                rotation_deg: 0.0,
                brightness_delta: 0.0,
                ..AugmentSpec::default()
            },
            normalization: Normalization::IDENTITY,
            resolution: 32,
        },
        max_lr: 0.05,
        policy: Policy::OneCycle,
        seed,
        ..FitConfig::default()
    };
    let report = fit(&mut model, &train, &test, epochs, &cfg, &mut |e| {
        println!(
            "epoch {:>2}  train_loss {:>8}  test_loss {:.4}  test_acc {:.3}  ({:.1}s)",
            e.epoch,
            e.train_loss.map_or("-".into(), |v| format!("{v:.4}")),
            e.test_loss,
            e.test_accuracy,
            e.seconds
        );
    })?;
    println!("final test accuracy {:.3}", report.final_accuracy());
    Ok(())
}
