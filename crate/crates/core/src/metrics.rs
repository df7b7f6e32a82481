//! Confusion matrices, per-class precision/recall/F1, macro and weighted
//! averages, and sparse categorical cross-entropy.
//!
//! Classes with a zero denominator score 0 and are flagged. Macro averages
//! run over the classes that occur in the ground truth; weighted averages use
//! the ground-truth support as weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no records to score")]
    Empty,
    #[error("label {0} is not one of the matrix classes")]
    UnknownClass(Label),
    #[error("counts must be a {0}x{0} matrix")]
    Shape(usize),
    #[error("probability row {0} does not sum to 1")]
    InvalidProbabilities(usize),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Rows are true classes, columns predicted classes, both in `classes` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<Label>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<Label>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = classes.len();
        if c == 0 || counts.len() != c || counts.iter().any(|r| r.len() != c) {
            return Err(MetricsError::Shape(c));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> &[Label] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// Confusion matrix over the labels occurring in either sequence, in the
/// fixed class order.
pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix> {
    let mut classes: Vec<Label> = y_true.iter().chain(y_pred).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    confusion_with_classes(&classes, y_true, y_pred)
}

pub fn confusion_with_classes(
    classes: &[Label],
    y_true: &[Label],
    y_pred: &[Label],
) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let pos = |l: Label| {
        classes
            .iter()
            .position(|&c| c == l)
            .ok_or(MetricsError::UnknownClass(l))
    };
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts[pos(t)?][pos(p)?] += 1;
    }
    ConfusionMatrix::from_counts(classes.to_vec(), counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the class was never predicted.
    pub precision_undefined: bool,
    /// Set when the class never occurs in the ground truth.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

impl EvalReport {
    pub fn class(&self, label: Label) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.loss = Some(loss);
        self
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn report(cm: &ConfusionMatrix) -> EvalReport {
    let c = cm.classes.len();
    let total = cm.total();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|i| {
            let tp = cm.counts[i][i];
            let predicted: u64 = (0..c).map(|r| cm.counts[r][i]).sum();
            let support: u64 = cm.counts[i].iter().sum();
            let (precision, precision_undefined) = ratio(tp, predicted);
            let (recall, recall_undefined) = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: cm.classes[i],
                precision,
                recall,
                f1,
                support,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect();

    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let n_present = present.len().max(1) as f64;
    let macro_avg = Averages {
        precision: present.iter().map(|m| m.precision).sum::<f64>() / n_present,
        recall: present.iter().map(|m| m.recall).sum::<f64>() / n_present,
        f1: present.iter().map(|m| m.f1).sum::<f64>() / n_present,
    };
    let weight = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / total as f64
        }
    };
    let weighted_avg = Averages {
        precision: weight(|m| m.precision),
        recall: weight(|m| m.recall),
        f1: weight(|m| m.f1),
    };
    EvalReport {
        accuracy: ratio(cm.trace(), total).0,
        per_class,
        macro_avg,
        weighted_avg,
        total,
        confusion: cm.clone(),
        loss: None,
    }
}

/// Mean `-ln p[true]` with probabilities clamped to `[1e-12, 1]`.
pub fn cross_entropy(probs: &[Vec<f64>], y_true: &[usize]) -> Result<f64> {
    if probs.len() != y_true.len() {
        return Err(MetricsError::LengthMismatch(probs.len(), y_true.len()));
    }
    if probs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for (i, (row, &t)) in probs.iter().zip(y_true).enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || t >= row.len() {
            return Err(MetricsError::InvalidProbabilities(i));
        }
        total -= row[t].clamp(PROB_CLAMP, 1.0).ln();
    }
    Ok(total / probs.len() as f64)
}
