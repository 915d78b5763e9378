//! Stratified 80/20 split of a label file, or of a synthetic imbalanced set
//! with the leaf corpus's class sizes when no file is given.
//!
//! cargo run --example stratified_split -- [labels.csv] [seed]

use std::path::Path;

use leafnet::data::{parse_labels, stratified_split, ClassId, LabelRecord, CLASS_NAMES, DEFAULT_TEST_FRACTION};

fn main() -> leafnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let labels = args.next();
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let records = match &labels {
        Some(path) => parse_labels(Path::new(path))?,
        None => [516usize, 91, 622, 592]
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| {
                (0..n).map(move |i| LabelRecord {
                    image_id: format!("{}_{i:04}", CLASS_NAMES[c]),
                    class_id: ClassId(c),
                })
            })
            .collect(),
    };
    let split = stratified_split(&records, &CLASS_NAMES, DEFAULT_TEST_FRACTION, seed)?;
    println!("{:<18} {:>6} {:>6}", "class", "train", "test");
    for c in &split.counts {
        println!("{:<18} {:>6} {:>6}", c.class_name, c.train, c.test);
    }
    println!("{} train / {} test", split.train.len(), split.test.len());
    println!("first test ids: {:?}", &split.test[..split.test.len().min(5)]);
    Ok(())
}
