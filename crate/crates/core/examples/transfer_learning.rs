//! Pretrains on one synthetic colour task, then compares two-phase
//! fine-tuning against training from scratch on a second task with the same
//! five-epoch budget.
//!
//! cargo run --release --example transfer_learning -- [seeds] [train_per_class] [-v]

use leafnet::data::{AugmentSpec, BatchSpec, InMemoryDataset, Normalization, ShapesTask};
use leafnet::nn::{ResNet, ResNetConfig};
use leafnet::train::{fine_tune, fit, FitConfig};

fn config(seed: u64, batch_size: usize, max_lr: f64) -> FitConfig {
    FitConfig {
        batch: BatchSpec {
            batch_size,
            shuffle: true,
            augment: AugmentSpec::NONE,
            normalization: Normalization::IDENTITY,
            resolution: 32,
        },
        max_lr,
        seed,
        ..FitConfig::default()
    }
}

fn task_b(seed: u64, per_class: usize) -> (InMemoryDataset, InMemoryDataset) {
    // a small training set keeps from-scratch training from saturating
    let task = ShapesTask::pastels();
    (task.generate(per_class, 32, 1000 + seed), task.generate(40, 32, 2000 + seed))
}

fn main() -> leafnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let per_class: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(12);
    let verbose = args.next().is_some_and(|a| a == "-v");
    let mut show = |e: &leafnet::train::EpochRecord| {
        if verbose {
            println!("    phase {} epoch {} test_acc {:.3} test_loss {:.4}", e.phase, e.epoch, e.test_accuracy, e.test_loss);
        }
    };

    let mut wins = 0;
    for seed in 0..seeds {
        // pretrain on red/green/blue
        let a = ShapesTask::primaries();
        let (a_train, a_test) = (a.generate(80, 32, seed), a.generate(20, 32, 500 + seed));
        let mut pretrained = ResNet::<f32>::new(ResNetConfig::compact(3), seed)?;
        let pre = fit(&mut pretrained, &a_train, &a_test, 6, &config(seed, 16, 0.05), &mut |_| {})?;

        let (b_train, b_test) = task_b(seed, per_class);
        pretrained.replace_head(3)?;
        let tuned = fine_tune(&mut pretrained, &b_train, &b_test, 1, 4, &config(seed, 4, 0.05), &mut show)?;

        let mut scratch = ResNet::<f32>::new(ResNetConfig::compact(3), seed)?;
        let base = fit(&mut scratch, &b_train, &b_test, 5, &config(seed, 4, 0.05), &mut show)?;

        let win = tuned.final_accuracy() > base.final_accuracy();
        wins += win as usize;
        println!(
            "seed {seed}: task A {:.3} | task B fine-tuned {:.3} vs scratch {:.3} {}",
            pre.final_accuracy(),
            tuned.final_accuracy(),
            base.final_accuracy(),
            if win { "(transfer wins)" } else { "" }
        );
    }
    println!("transfer beat scratch on {wins} of {seeds} seeds");
    Ok(())
}
