//! Confusion matrices, per-class precision/recall/F1 and evaluation reports.

use serde::Serialize;

use crate::data::{Dataset, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::nn::softmax_cross_entropy;
use crate::rng::Rng;
use crate::tensor::Scalar;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// `cm[true][predicted]` counts.
pub type ConfusionMatrix = Vec<Vec<u64>>;

pub fn empty_cm(classes: usize) -> ConfusionMatrix {
    vec![vec![0; classes]; classes]
}

/// `trace / total`, or 0 for an empty matrix.
pub fn accuracy(cm: &[Vec<u64>]) -> f64 {
    let total: u64 = cm.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let correct: u64 = (0..cm.len()).map(|i| cm[i][i]).sum();
    correct as f64 / total as f64
}

/// Each non-zero row divided by its sum; zero rows stay zero.
pub fn normalize_cm(cm: &[Vec<u64>]) -> Vec<Vec<f64>> {
    cm.iter()
        .map(|row| {
            let s: u64 = row.iter().sum();
            row.iter()
                .map(|&v| if s == 0 { 0.0 } else { v as f64 / s as f64 })
                .collect()
        })
        .collect()
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the class was never predicted (precision denominator 0).
    pub precision_undefined: bool,
    /// Set when the class never occurs (recall denominator 0).
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    /// Unweighted means over classes.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub support: u64,
    pub accuracy: f64,
}

pub fn classification_report(cm: &[Vec<u64>]) -> ClassificationReport {
    let k = cm.len();
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let classes: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let row: u64 = cm[c].iter().sum();
            let col: u64 = cm.iter().map(|r| r[c]).sum();
            let (precision, precision_undefined) = ratio(cm[c][c], col);
            let (recall, recall_undefined) = ratio(cm[c][c], row);
            ClassMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: row,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if k == 0 {
            0.0
        } else {
            classes.iter().map(f).sum::<f64>() / k as f64
        }
    };
    ClassificationReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        support: classes.iter().map(|m| m.support).sum(),
        accuracy: accuracy(cm),
        classes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub normalized: Vec<Vec<f64>>,
    pub report: ClassificationReport,
    pub accuracy: f64,
    pub loss: f64,
    pub samples: u64,
}

fn display_name(name: &str) -> String {
    let spaced = name.replace('_', " ");
    let mut chars = spaced.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => spaced,
    }
}

impl EvalReport {
    pub fn from_predictions(class_names: Vec<String>, cm: ConfusionMatrix, loss: f64) -> Self {
        let report = classification_report(&cm);
        Self {
            class_names,
            normalized: normalize_cm(&cm),
            accuracy: report.accuracy,
            samples: report.support,
            confusion: cm,
            report,
            loss,
        }
    }

    /// Precision / recall / F1 / support table with a macro-average row.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<14}{:>10}{:>10}{:>10}{:>10}\n",
            "Class", "Precision", "Recall", "F1-score", "Support"
        );
        for (name, m) in self.class_names.iter().zip(&self.report.classes) {
            let flag = if m.precision_undefined || m.recall_undefined { " *" } else { "" };
            s += &format!(
                "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}{flag}\n",
                display_name(name),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let r = &self.report;
        s += &format!(
            "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}\n",
            "Average", r.macro_precision, r.macro_recall, r.macro_f1, r.support
        );
        s += &format!("\naccuracy {:.4}  loss {:.4}  samples {}\n", self.accuracy, self.loss, self.samples);
        if r.classes.iter().any(|m| m.precision_undefined || m.recall_undefined) {
            s += "* zero denominator: metric reported as 0\n";
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Eval-mode pass over every sample of `dataset`.
pub fn evaluate<T: Scalar>(graph: &ModelGraph<T>, dataset: &Dataset, batch_size: usize) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::data("cannot evaluate an empty split"));
    }
    let classes = graph.spec().classes;
    let mut cm = empty_cm(classes);
    let mut loss_sum = 0.0;
    // no randomness on the eval path; the stream is unused
    let rng = Rng::new(0);
    for batch in crate::data::batch_plan(dataset.len(), batch_size, false, &rng, 0)? {
        let b = dataset.batch(&batch, &rng, 0)?;
        let inputs = b.inputs.cast::<T>();
        let logits = graph.forward_eval(&inputs)?;
        let (loss, _) = softmax_cross_entropy(&logits, &b.labels)?;
        loss_sum += loss * b.labels.len() as f64;
        for (row, &label) in logits.data().chunks(classes).zip(&b.labels) {
            cm[label][argmax(row)] += 1;
        }
    }
    let names = if classes == CLASS_NAMES.len() {
        CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..classes).map(|i| format!("class_{i}")).collect()
    };
    Ok(EvalReport::from_predictions(names, cm, loss_sum / dataset.len() as f64))
}
