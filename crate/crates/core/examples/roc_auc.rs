//! Confusion matrix, one-vs-rest ROC curves and AUC from a scores CSV
//! (`image_id,true_class,<class columns>`, as written by `leafnet evaluate`).
//!
//! cargo run --example roc_auc -- [scores.csv]

use std::path::PathBuf;

use leafnet::cli::parse_scores;
use leafnet::metrics::report;

fn main() -> leafnet::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/metrics_12.csv"));
    let (names, _, labels, scores) = parse_scores(&path)?;
    let r = report(&scores, &labels, &names)?;
    print!("{}", r.to_text());
    for curve in r.curves.iter().flatten() {
        let pts: Vec<String> = curve.points.iter().map(|p| format!("({:.2},{:.2})", p.fpr, p.tpr)).collect();
        println!("roc[{}]: {}", names[curve.class_id], pts.join(" "));
    }
    Ok(())
}
