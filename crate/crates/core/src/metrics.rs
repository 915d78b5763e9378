//! Confusion matrices, one-vs-rest ROC curves and AUC.
//!
//! ROC points keep their integer true/false positive counts, and
//! [`auc`] integrates the trapezoids exactly in integer arithmetic before a
//! single division. The area therefore equals the Mann-Whitney statistic
//! with half credit for ties, correctly rounded.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[i][j]`: samples of true class `i` predicted as class `j`.
    pub counts: Vec<Vec<u64>>,
}

/// Per-class outcome counts derived from a [`ConfusionMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

/// TPR/FPR for one class. A zero denominator yields 0 with the flag cleared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub tpr: f64,
    pub fpr: f64,
    pub tpr_defined: bool,
    pub fpr_defined: bool,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    pub fn class_counts(&self, class: usize) -> Result<ClassCounts> {
        if class >= self.num_classes() {
            return Err(Error::index(
                "class_counts",
                format!("class {class} not in [0, {})", self.num_classes()),
            ));
        }
        let tp = self.counts[class][class];
        let row: u64 = self.counts[class].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[class]).sum();
        let (fn_, fp) = (row - tp, col - tp);
        Ok(ClassCounts {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        })
    }
}

/// Counts predictions against ground truth over `num_classes` classes.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "{} predictions but {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract("confusion matrix of zero samples"));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::index(
                "confusion_matrix",
                format!("class id {} not in [0, {num_classes})", p.max(t)),
            ));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

/// `TPR = TP/(TP+FN)`, `FPR = FP/(FP+TN)` for `class` treated as positive.
pub fn tpr_fpr(cm: &ConfusionMatrix, class: usize) -> Result<Rates> {
    let c = cm.class_counts(class)?;
    let (tpr, tpr_defined) = ratio(c.tp, c.tp + c.fn_);
    let (fpr, fpr_defined) = ratio(c.fp, c.fp + c.tn);
    Ok(Rates {
        tpr,
        fpr,
        tpr_defined,
        fpr_defined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are predicted positive. The sentinels use `+inf`
    /// (nothing positive) and `-inf` (everything positive).
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub tp: u64,
    pub fp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class_id: usize,
    pub positives: u64,
    pub negatives: u64,
    pub points: Vec<RocPoint>,
}

/// Sweeps thresholds over the distinct scores in descending order.
///
/// `truth[i]` marks sample `i` as positive. Needs at least one positive and
/// one negative.
pub fn roc_curve(scores: &[f64], truth: &[bool], class_id: usize) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::contract(format!(
            "{} scores but {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::contract(format!("non-finite score {bad}")));
    }
    let positives = truth.iter().filter(|&&t| t).count() as u64;
    let negatives = truth.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::contract(format!(
            "degenerate ROC for class {class_id}: {positives} positives, {negatives} negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let point = |threshold: f64, tp: u64, fp: u64| RocPoint {
        threshold,
        fpr: fp as f64 / negatives as f64,
        tpr: tp as f64 / positives as f64,
        tp,
        fp,
    };
    let mut points = vec![point(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(point(threshold, tp, fp));
    }
    points.push(point(f64::NEG_INFINITY, positives, negatives));
    Ok(RocCurve {
        class_id,
        positives,
        negatives,
        points,
    })
}

/// Trapezoidal area under the curve, evaluated exactly on the integer counts.
pub fn auc(curve: &RocCurve) -> f64 {
    // each trapezoid contributes (fp_i - fp_{i-1}) * (tp_i + tp_{i-1}) / (2 P N)
    let twice_area: u128 = curve
        .points
        .windows(2)
        .map(|w| (w[1].fp - w[0].fp) as u128 * (w[1].tp + w[0].tp) as u128)
        .sum();
    let den = 2 * curve.positives as u128 * curve.negatives as u128;
    if den == 0 {
        return 0.0;
    }
    // both operands are exact in f64 for any realistic sample size
    twice_area as f64 / den as f64
}

/// Index of the largest score, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub num_samples: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// One-vs-rest AUC; `None` when the class is absent from (or is all of) the truth.
    pub per_class_auc: Vec<Option<f64>>,
    /// Mean of the defined per-class AUCs.
    pub macro_auc: Option<f64>,
    pub curves: Vec<Option<RocCurve>>,
}

/// Assembles every metric from an `N x C` matrix of class probabilities.
pub fn report(scores: &[Vec<f64>], truth: &[usize], class_names: &[String]) -> Result<MetricsReport> {
    let c = class_names.len();
    if scores.is_empty() {
        return Err(Error::contract("metrics report over zero samples"));
    }
    if scores.len() != truth.len() {
        return Err(Error::contract(format!(
            "{} score rows but {} labels",
            scores.len(),
            truth.len()
        )));
    }
    for (i, row) in scores.iter().enumerate() {
        if row.len() != c {
            return Err(Error::shape("report", format!("row {i} has {} scores, expected {c}", row.len())));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-5 {
            return Err(Error::contract(format!("score row {i} sums to {s}, not 1")));
        }
    }
    let pred: Vec<usize> = scores.iter().map(|r| argmax(r)).collect();
    let confusion = confusion_matrix(&pred, truth, c)?;

    let mut per_class_auc = Vec::with_capacity(c);
    let mut curves = Vec::with_capacity(c);
    for k in 0..c {
        let col: Vec<f64> = scores.iter().map(|r| r[k]).collect();
        let is_pos: Vec<bool> = truth.iter().map(|&t| t == k).collect();
        match roc_curve(&col, &is_pos, k) {
            Ok(curve) => {
                per_class_auc.push(Some(auc(&curve)));
                curves.push(Some(curve));
            }
            Err(_) => {
                per_class_auc.push(None);
                curves.push(None);
            }
        }
    }
    let defined: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
    let macro_auc = (!defined.is_empty()).then(|| {
        let mut sum = 0.0;
        for v in &defined {
            sum += v;
        }
        sum / defined.len() as f64
    });
    Ok(MetricsReport {
        class_names: class_names.to_vec(),
        num_samples: truth.len(),
        accuracy: confusion.accuracy(),
        confusion,
        per_class_auc,
        macro_auc,
        curves,
    })
}

fn fmt_auc(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

impl MetricsReport {
    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples: {}", self.num_samples);
        let _ = writeln!(s, "accuracy: {:.3}", self.accuracy);
        let _ = writeln!(s, "confusion matrix (rows = truth, columns = prediction):");
        let width = self.class_names.iter().map(String::len).max().unwrap_or(0);
        for (name, row) in self.class_names.iter().zip(&self.confusion.counts) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
            let _ = writeln!(s, "  {name:<width$} {}", cells.join(""));
        }
        for (k, name) in self.class_names.iter().enumerate() {
            let flag = if self.per_class_auc[k].is_none() {
                " (excluded: class absent or sole class in truth)"
            } else {
                ""
            };
            let _ = writeln!(s, "auc[{name}]: {}{flag}", fmt_auc(self.per_class_auc[k]));
        }
        let _ = writeln!(s, "macro auc: {}", fmt_auc(self.macro_auc));
        s
    }

    /// `metric,class,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,class,value\n");
        let _ = writeln!(s, "accuracy,,{}", self.accuracy);
        let _ = writeln!(s, "macro_auc,,{}", self.macro_auc.map_or(String::new(), |v| v.to_string()));
        for (k, name) in self.class_names.iter().enumerate() {
            let _ = writeln!(
                s,
                "auc,{name},{}",
                self.per_class_auc[k].map_or(String::new(), |v| v.to_string())
            );
        }
        for (i, truth) in self.class_names.iter().enumerate() {
            for (j, pred) in self.class_names.iter().enumerate() {
                let _ = writeln!(s, "confusion,{truth}->{pred},{}", self.confusion.counts[i][j]);
            }
        }
        s
    }
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let cm = confusion_matrix(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        assert_eq!(cm.accuracy(), 1.0);
        for k in 0..3 {
            let r = tpr_fpr(&cm, k).unwrap();
            assert_eq!((r.tpr, r.fpr), (1.0, 0.0));
        }
    }

    #[test]
    fn hand_counted_two_class_matrix() {
        let cm = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(confusion_matrix(&[], &[], 2), Err(Error::Contract(_))));
        assert!(matches!(confusion_matrix(&[0], &[0, 1], 2), Err(Error::Contract(_))));
        assert!(matches!(confusion_matrix(&[2], &[0], 2), Err(Error::Index { .. })));
    }

    #[test]
    fn always_positive_classifier() {
        let cm = confusion_matrix(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        let r = tpr_fpr(&cm, 0).unwrap();
        assert_eq!((r.tpr, r.fpr), (1.0, 1.0));
        // class 1 is never predicted
        let r1 = tpr_fpr(&cm, 1).unwrap();
        assert_eq!((r1.tpr, r1.fpr), (0.0, 0.0));
        assert!(r1.tpr_defined && r1.fpr_defined);
    }

    #[test]
    fn rates_from_direct_formula() {
        let cm = ConfusionMatrix {
            counts: vec![vec![3, 1], vec![2, 4]],
        };
        let r = tpr_fpr(&cm, 0).unwrap();
        assert_eq!(r.tpr, 3.0 / 4.0);
        assert_eq!(r.fpr, 2.0 / 6.0);
    }

    #[test]
    fn zero_denominator_flagged() {
        let cm = confusion_matrix(&[0, 0], &[0, 0], 2).unwrap();
        let r = tpr_fpr(&cm, 1).unwrap();
        assert!(!r.tpr_defined);
        assert_eq!(r.tpr, 0.0);
        assert!(r.fpr_defined);
    }

    #[test]
    fn hand_sweep() {
        let c = roc_curve(&[0.9, 0.8, 0.7, 0.6], &[true, true, false, true], 0).unwrap();
        let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(
            pts,
            vec![
                (0.0, 0.0),
                (0.0, 1.0 / 3.0),
                (0.0, 2.0 / 3.0),
                (1.0, 2.0 / 3.0),
                (1.0, 1.0),
                (1.0, 1.0)
            ]
        );
        assert_eq!(auc(&c), 2.0 / 3.0);
    }

    #[test]
    fn perfect_and_uninformative_scores() {
        let perfect = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false], 0).unwrap();
        assert!(perfect.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc(&perfect), 1.0);

        let flat = roc_curve(&[0.5; 4], &[true, false, true, false], 0).unwrap();
        let pts: Vec<(f64, f64)> = flat.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 1.0), (1.0, 1.0)]);
        assert_eq!(auc(&flat), 0.5);
    }

    #[test]
    fn single_class_truth_is_degenerate() {
        assert!(roc_curve(&[0.1, 0.2], &[true, true], 0).is_err());
    }

    #[test]
    fn report_on_uniform_scores() {
        let names: Vec<String> = ["a", "b", "c", "d"].map(String::from).to_vec();
        let scores = vec![vec![0.25; 4]; 8];
        let truth = vec![0, 1, 2, 3, 0, 1, 2, 3];
        let r = report(&scores, &truth, &names).unwrap();
        assert!(r.per_class_auc.iter().all(|a| *a == Some(0.5)));
        assert_eq!(r.accuracy, 0.25);
    }

    #[test]
    fn report_excludes_absent_class() {
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let scores = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.6, 0.3, 0.1]];
        let r = report(&scores, &[0, 1, 0], &names).unwrap();
        assert_eq!(r.per_class_auc[2], None);
        assert_eq!(r.macro_auc, Some(1.0));
        assert!(r.to_text().contains("excluded"));
    }

    #[test]
    fn report_rejects_unnormalized_rows() {
        let names: Vec<String> = ["a", "b"].map(String::from).to_vec();
        assert!(report(&[vec![0.7, 0.7]], &[0], &names).is_err());
        assert!(report(&[], &[], &names).is_err());
    }
}
