use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with class 1 (successful pass) as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: tp + fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub accuracy: f64,
    /// Successful-pass class.
    pub success: ClassMetrics,
    /// Failed-pass class.
    pub failure: ClassMetrics,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

/// Confusion-matrix metrics; a probability at or above `threshold` predicts success.
pub fn classification_metrics(labels: &[u8], probabilities: &[f64], threshold: f64) -> Result<MetricsReport> {
    if labels.is_empty() {
        return Err(Error::Data("metrics need at least one sample".into()));
    }
    if labels.len() != probabilities.len() {
        return Err(Error::Data(format!(
            "{} labels but {} probabilities",
            labels.len(),
            probabilities.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(probabilities) {
        let pred = p >= threshold;
        match (y, pred) {
            (1, true) => cm.tp += 1,
            (0, true) => cm.fp += 1,
            (1, false) => cm.fn_ += 1,
            (0, false) => cm.tn += 1,
            _ => return Err(Error::Data(format!("label must be 0 or 1, got {y}"))),
        }
    }
    let success = ClassMetrics::from_counts(cm.tp, cm.fp, cm.fn_);
    let failure = ClassMetrics::from_counts(cm.tn, cm.fn_, cm.fp);
    Ok(MetricsReport {
        threshold,
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        success,
        failure,
        macro_precision: (success.precision + failure.precision) / 2.0,
        macro_recall: (success.recall + failure.recall) / 2.0,
        macro_f1: (success.f1 + failure.f1) / 2.0,
        confusion: cm,
    })
}

/// One row of the accuracy/precision/recall/F1 summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub label: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Table1Row {
    /// Row using macro-averaged precision/recall/F1.
    pub fn macro_averaged(label: impl Into<String>, r: &MetricsReport) -> Self {
        Table1Row {
            label: label.into(),
            accuracy: r.accuracy,
            precision: r.macro_precision,
            recall: r.macro_recall,
            f1: r.macro_f1,
        }
    }

    /// Row using the failed-pass class as the positive class.
    pub fn failure_class(label: impl Into<String>, r: &MetricsReport) -> Self {
        Table1Row {
            label: label.into(),
            accuracy: r.accuracy,
            precision: r.failure.precision,
            recall: r.failure.recall,
            f1: r.failure.f1,
        }
    }
}

/// Fixed-width table: accuracy to three decimals, the rest to two.
///
/// ```text
///        Accuracy  Precision  Recall  F1 Score
/// n=1       0.685       0.54    0.55      0.54
/// ```
pub fn format_table1(rows: &[Table1Row]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6} {:>8}  {:>9}  {:>6}  {:>8}", "", "Accuracy", "Precision", "Recall", "F1 Score");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<6} {:>8.3}  {:>9.2}  {:>6.2}  {:>8.2}",
            r.label, r.accuracy, r.precision, r.recall, r.f1
        );
    }
    out
}

impl MetricsReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let cm = &self.confusion;
        let _ = writeln!(out, "threshold {}", self.threshold);
        let _ = writeln!(out, "samples {}  accuracy {:.4}", cm.total(), self.accuracy);
        let _ = writeln!(out, "{:<8} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for (name, c) in [("success", &self.success), ("failure", &self.failure)] {
            let _ = writeln!(
                out,
                "{:<8} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                name, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(
            out,
            "{:<8} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            "macro",
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            cm.total()
        );
        let _ = writeln!(out, "confusion tp={} fp={} fn={} tn={}", cm.tp, cm.fp, cm.fn_, cm.tn);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<f64>) {
        // TP=3, FP=1, FN=2, TN=4
        let labels = vec![1, 1, 1, 0, 1, 1, 0, 0, 0, 0];
        let probs = vec![0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2, 0.1, 0.2, 0.3];
        (labels, probs)
    }

    #[test]
    fn hand_counted_fixture() {
        let (l, p) = fixture();
        let r = classification_metrics(&l, &p, 0.5).unwrap();
        assert_eq!(r.confusion, ConfusionMatrix { tp: 3, fp: 1, fn_: 2, tn: 4 });
        assert_eq!(r.accuracy, 0.7);
        assert_eq!(r.success.precision, 0.75);
        assert_eq!(r.success.recall, 0.6);
        assert!((r.success.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let r = classification_metrics(&[1, 0, 1], &[0.9, 0.1, 0.6], 0.5).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.success.precision, 1.0);
        assert_eq!(r.failure.recall, 1.0);
    }

    #[test]
    fn empty_and_mismatched_rejected() {
        assert!(classification_metrics(&[], &[], 0.5).is_err());
        assert!(classification_metrics(&[1], &[0.5, 0.2], 0.5).is_err());
    }
}
