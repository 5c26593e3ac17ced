//! Binary classification metrics: confusion matrix, accuracy / precision /
//! recall, ROC curves, AUC, and scaled-vs-original difference reports.
//!
//! The positive class throughout this crate is `NonHC` — detecting illness
//! is the point, and a false positive is preferred over a false negative.
//! Precision and recall flip if you swap the positive class, so the choice
//! is explicit in every function signature here.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, PartialEq)]
pub enum EvalError {
    /// Prediction and truth vectors differ in length (or are empty).
    ShapeError { predicted: usize, truth: usize },
    EmptyMatrix,
    /// ROC needs at least one positive and one negative example.
    DegenerateClass,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::ShapeError { predicted, truth } => {
                write!(f, "predicted {predicted} labels but truth has {truth}")
            }
            EvalError::EmptyMatrix => write!(f, "confusion matrix has no entries"),
            EvalError::DegenerateClass => {
                write!(f, "need at least one positive and one negative example")
            }
        }
    }
}

impl std::error::Error for EvalError {}

/// 2×2 confusion counts with `NonHC`-style positives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// Count prediction outcomes with the named positive class.
pub fn confusion_matrix(
    predicted: &[String],
    truth: &[String],
    positive: &str,
) -> Result<ConfusionMatrix, EvalError> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(EvalError::ShapeError { predicted: predicted.len(), truth: truth.len() });
    }
    let mut cm = ConfusionMatrix { true_pos: 0, false_pos: 0, false_neg: 0, true_neg: 0 };
    for (p, t) in predicted.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => cm.true_pos += 1,
            (true, false) => cm.false_pos += 1,
            (false, true) => cm.false_neg += 1,
            (false, false) => cm.true_neg += 1,
        }
    }
    Ok(cm)
}

/// Accuracy / precision / recall as percentages. `None` marks an undefined
/// metric (zero denominator) — never silently reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Percentages from a confusion matrix: accuracy = 100·(tp+tn)/total,
/// precision = 100·tp/(tp+fp), recall = 100·tp/(tp+fn).
pub fn scores(cm: &ConfusionMatrix) -> Result<Scores, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let pct = |num: usize, den: usize| -> Option<f64> {
        (den > 0).then(|| 100.0 * num as f64 / den as f64)
    };
    Ok(Scores {
        accuracy: 100.0 * (cm.true_pos + cm.true_neg) as f64 / total as f64,
        precision: pct(cm.true_pos, cm.true_pos + cm.false_pos),
        recall: pct(cm.true_pos, cm.true_pos + cm.false_neg),
    })
}

/// One ROC operating point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// ROC curve of positive-class scores against boolean truth.
///
/// Points appear at every distinct score threshold in descending order
/// (rows at a tied score enter as a block), preceded by the (0, 0) anchor
/// at threshold +∞. The final point is always (1, 1) at the lowest score.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<Vec<RocPoint>, EvalError> {
    if scores.len() != truth.len() || scores.is_empty() {
        return Err(EvalError::ShapeError { predicted: scores.len(), truth: truth.len() });
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // absorb the whole tie block before emitting a point
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok(points)
}

/// Trapezoidal area under an ROC curve.
pub fn auc(points: &[RocPoint]) -> f64 {
    let mut area = 0.0;
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    area
}

/// Everything the pipeline records about one model evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub scores: Scores,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
}

/// Build a full report from labels and positive-class scores.
pub fn evaluate(
    predicted: &[String],
    truth: &[String],
    positive_scores: &[f64],
    positive: &str,
) -> Result<EvalReport, EvalError> {
    let confusion = confusion_matrix(predicted, truth, positive)?;
    let truth_bool: Vec<bool> = truth.iter().map(|t| t == positive).collect();
    let roc = roc_curve(positive_scores, &truth_bool)?;
    let area = auc(&roc);
    Ok(EvalReport { confusion, scores: scores(&confusion)?, roc, auc: area })
}

/// Per-metric differences `b − a`, in percentage points. A metric undefined
/// on either side stays undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreDiff {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn diff_report(a: &Scores, b: &Scores) -> ScoreDiff {
    let sub = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => Some(y - x),
        _ => None,
    };
    ScoreDiff {
        accuracy: b.accuracy - a.accuracy,
        precision: sub(a.precision, b.precision),
        recall: sub(a.recall, b.recall),
    }
}

/// Render a metric to the two-decimal convention used by the report tables.
pub fn fmt_pct(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.2}"),
        None => "NA".to_string(),
    }
}
