//! Binary classification metrics.
//!
//! Every rate derived from a confusion matrix is kept as an exact ratio of
//! integers and only converted to floating point (or to a rounded percent
//! string) at the edge. A rate whose denominator is zero is `None`, never a
//! silent zero.

mod report;

pub use report::{emit_report, render_report, render_training_report, roc_csv, EvaluationReport, RocPoint};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("predicted ({predicted}) and actual ({actual}) label counts differ")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("no samples to score")]
    Empty,
    #[error("confusion matrix is empty (all counts zero)")]
    EmptyMatrix,
    #[error("AUC is undefined unless both classes are present")]
    SingleClass,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub positive_class: Label,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64, positive_class: Label) -> Self {
        Self {
            tp,
            fp,
            fn_,
            tn,
            positive_class,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Actual positives.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Actual negatives.
    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// The same predictions counted with the other class as positive.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
            positive_class: self.positive_class.other(),
        }
    }
}

pub type Rate = Ratio<u128>;

fn rate(num: u64, den: u64) -> Option<Rate> {
    (den != 0).then(|| Ratio::new(num as u128, den as u128))
}

/// Which metric to read from a [`MetricsReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
    Auc,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1, Metric::Auc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::Auc => "auc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: Option<Rate>,
    pub precision: Option<Rate>,
    pub recall: Option<Rate>,
    pub f1: Option<Rate>,
    /// Single-operating-point ROC area, `(TPR + TNR) / 2`.
    pub auc: Option<Rate>,
}

impl MetricsReport {
    pub fn positive_class(&self) -> Label {
        self.confusion.positive_class
    }

    pub fn exact(&self, metric: Metric) -> Option<Rate> {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
            Metric::Auc => self.auc,
        }
    }

    pub fn value(&self, metric: Metric) -> Option<f64> {
        self.exact(metric).map(ratio_to_f64)
    }

    /// Percentage with two decimals, rounded half up.
    pub fn percent(&self, metric: Metric) -> Option<String> {
        self.exact(metric).map(percent_string)
    }
}

pub fn ratio_to_f64(r: Rate) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `100 * r` rendered with two decimals, ties rounded up, computed exactly.
pub fn percent_string(r: Rate) -> String {
    let (n, d) = (*r.numer(), *r.denom());
    let hundredths = (2 * n * 10_000 + d) / (2 * d);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

/// Two-decimal, half-up percent of a floating-point fraction.
pub fn percent_string_f64(v: f64) -> String {
    let hundredths = (v * 10_000.0).round() as u64;
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

pub fn confusion(predicted: &[Label], actual: &[Label], positive_class: Label) -> Result<ConfusionMatrix, MetricsError> {
    if predicted.len() != actual.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::new(0, 0, 0, 0, positive_class);
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p == positive_class, a == positive_class) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let precision = rate(cm.tp, cm.tp + cm.fp);
    let recall = rate(cm.tp, cm.positives());
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r != Ratio::from_integer(0) => Some(Ratio::from_integer(2) * p * r / (p + r)),
        _ => None,
    };
    let auc = match (rate(cm.tp, cm.positives()), rate(cm.tn, cm.negatives())) {
        (Some(tpr), Some(tnr)) => Some((tpr + tnr) / Ratio::from_integer(2)),
        _ => None,
    };
    Ok(MetricsReport {
        confusion: *cm,
        accuracy: rate(cm.tp + cm.tn, total),
        precision,
        recall,
        f1,
        auc,
    })
}

/// Scores oriented so that larger means "more likely `positive_class`".
fn check_scores(scores: &[f64], actual: &[Label], positive_class: Label) -> Result<(u64, u64), MetricsError> {
    if scores.len() != actual.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: scores.len(),
            actual: actual.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let pos = actual.iter().filter(|&&l| l == positive_class).count() as u64;
    let neg = actual.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

/// Cumulative `(false positives, true positives)` after each distinct
/// threshold, sweeping from the highest score down. Tied scores move together.
fn sweep(scores: &[f64], actual: &[Label], positive_class: Label) -> Vec<(u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut steps = vec![(0, 0)];
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if actual[order[i]] == positive_class {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((fp, tp));
    }
    steps
}

/// Area under the ROC curve built by sweeping every distinct score threshold,
/// integrated with the trapezoid rule. Larger scores must indicate
/// `positive_class`.
pub fn auc_from_scores(scores: &[f64], actual: &[Label], positive_class: Label) -> Result<f64, MetricsError> {
    let (pos, neg) = check_scores(scores, actual, positive_class)?;
    let steps = sweep(scores, actual, positive_class);
    // twice the area, in units of one (1/neg x 1/pos) cell
    let twice_area: u128 = steps
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) as u128 * (w[1].1 + w[0].1) as u128)
        .sum();
    Ok(twice_area as f64 / (2 * pos as u128 * neg as u128) as f64)
}

pub fn roc_curve(scores: &[f64], actual: &[Label], positive_class: Label) -> Result<Vec<RocPoint>, MetricsError> {
    let (pos, neg) = check_scores(scores, actual, positive_class)?;
    Ok(sweep(scores, actual, positive_class)
        .into_iter()
        .map(|(fp, tp)| RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Deepfake as F, Real as R};

    #[test]
    fn counts_perfect_and_inverted() {
        let all = vec![F; 5];
        let cm = confusion(&all, &all, F).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (5, 0, 0, 0));
        let actual = vec![R, F, F, R];
        let inverted: Vec<_> = actual.iter().map(|l| l.other()).collect();
        let cm = confusion(&inverted, &actual, F).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
        assert!(confusion(&[R], &[R, F], R).is_err());
        assert!(confusion(&[], &[], R).is_err());
    }

    #[test]
    fn degenerate_class_leaves_rates_undefined() {
        let r = report(&ConfusionMatrix::new(0, 0, 0, 10, F)).unwrap();
        assert_eq!(r.value(Metric::Accuracy), Some(1.0));
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, None);
        assert_eq!(r.f1, None);
        assert_eq!(r.auc, None);
        assert!(report(&ConfusionMatrix::new(0, 0, 0, 0, F)).is_err());
    }

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(percent_string(Ratio::new(1, 8)), "12.50");
        assert_eq!(percent_string(Ratio::new(1, 3)), "33.33");
        assert_eq!(percent_string(Ratio::new(2, 3)), "66.67");
        // 0.000050 exactly -> 0.005% -> rounds up to 0.01
        assert_eq!(percent_string(Ratio::new(1, 20_000)), "0.01");
        assert_eq!(percent_string(Ratio::new(1, 1)), "100.00");
        assert_eq!(percent_string_f64(0.88125), "88.13");
    }

    #[test]
    fn f1_lies_between_precision_and_recall() {
        let r = report(&ConfusionMatrix::new(30, 10, 20, 40, R)).unwrap();
        let (p, rc, f) = (r.precision.unwrap(), r.recall.unwrap(), r.f1.unwrap());
        assert!(p.min(rc) <= f && f <= p.max(rc));
        assert_eq!(f, Ratio::new(60, 90));
    }

    #[test]
    fn swapping_the_positive_class() {
        let cm = ConfusionMatrix::new(1, 2, 3, 4, F);
        let s = cm.swapped();
        assert_eq!(s.positive_class, R);
        assert_eq!(s.swapped(), cm);
        assert_eq!(report(&cm).unwrap().accuracy, report(&s).unwrap().accuracy);
    }

    #[test]
    fn auc_extremes() {
        let actual = [R, R, F, F];
        assert_eq!(auc_from_scores(&[0.9, 0.8, 0.2, 0.1], &actual, R).unwrap(), 1.0);
        assert_eq!(auc_from_scores(&[0.9, 0.8, 0.2, 0.1], &actual, F).unwrap(), 0.0);
        assert_eq!(auc_from_scores(&[0.4; 4], &actual, R).unwrap(), 0.5);
        assert_eq!(auc_from_scores(&[1.0, 2.0], &[R, R], R), Err(MetricsError::SingleClass));
        assert!(auc_from_scores(&[f64::NAN, 1.0], &[R, F], R).is_err());
    }

    #[test]
    fn roc_curve_endpoints() {
        let pts = roc_curve(&[0.9, 0.5, 0.5, 0.1], &[R, F, R, F], R).unwrap();
        assert_eq!(pts.first(), Some(&RocPoint { fpr: 0.0, tpr: 0.0 }));
        assert_eq!(pts.last(), Some(&RocPoint { fpr: 1.0, tpr: 1.0 }));
        assert_eq!(pts.len(), 4);
    }
}
