//! Decodes images, resizes them, augments and normalizes one training batch,
//! and prints per-channel statistics.
//!
//! cargo run --example image_pipeline -- [resolution] [image ...]

use std::path::PathBuf;

use leafnet::data::{make_batches, AugmentSpec, BatchSpec, ClassId, FileDataset, Normalization, SampleRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> leafnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let resolution: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(64);
    let mut paths: Vec<PathBuf> = args.map(PathBuf::from).collect();
    if paths.is_empty() {
        let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
        paths = vec![fixtures.join("solid_red.png"), fixtures.join("gradient.png")];
    }
    let records = paths
        .iter()
        .enumerate()
        .map(|(i, p)| SampleRecord {
            image_id: format!("img{i}"),
            image_path: p.clone(),
            class_id: ClassId(0),
        })
        .collect();
    let data = FileDataset::new(records);
    let spec = BatchSpec {
        batch_size: paths.len(),
        shuffle: false,
        augment: AugmentSpec::default(),
        normalization: Normalization::imagenet(),
        resolution,
    };
    for (name, train) in [("eval", false), ("train", true)] {
        let batch = make_batches(&data, &spec, train, &mut ChaCha8Rng::seed_from_u64(1))?.remove(0);
        let plane = resolution * resolution;
        println!("{name} batch {:?}", batch.images.shape());
        for (i, img) in batch.images.data().chunks(3 * plane).enumerate() {
            let stats: Vec<String> = img
                .chunks(plane)
                .map(|ch| {
                    let mean = ch.iter().sum::<f32>() / plane as f32;
                    let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / plane as f32;
                    format!("{mean:+.3}/{:.3}", var.sqrt())
                })
                .collect();
            println!("  {}  mean/std per channel {}", paths[batch.indices[i]].display(), stats.join("  "));
        }
    }
    Ok(())
}
