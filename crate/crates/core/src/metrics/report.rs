use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::label::Label;
use crate::metrics::{
    auc_from_scores, confusion, percent_string, report, roc_curve, ConfusionMatrix, Metric, MetricsError,
    MetricsReport,
};
use crate::models::EpochRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Everything an evaluation run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub metrics: MetricsReport,
    /// Threshold-sweep AUC when per-item scores were available.
    pub score_auc: Option<f64>,
    pub roc: Vec<RocPoint>,
}

impl EvaluationReport {
    /// Counts only: the ROC curve is the single hard-label operating point.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self, MetricsError> {
        let metrics = report(cm)?;
        let roc = match (cm.positives(), cm.negatives()) {
            (0, _) | (_, 0) => Vec::new(),
            (p, n) => vec![
                RocPoint { fpr: 0.0, tpr: 0.0 },
                RocPoint {
                    fpr: cm.fp as f64 / n as f64,
                    tpr: cm.tp as f64 / p as f64,
                },
                RocPoint { fpr: 1.0, tpr: 1.0 },
            ],
        };
        Ok(Self {
            metrics,
            score_auc: None,
            roc,
        })
    }

    /// `scores` follow the model convention: larger means "real". They are
    /// negated internally when the positive class is deepfake.
    pub fn from_predictions(
        scores: &[f64],
        predicted: &[Label],
        actual: &[Label],
        positive_class: Label,
    ) -> Result<Self, MetricsError> {
        let cm = confusion(predicted, actual, positive_class)?;
        let mut out = Self::from_confusion(&cm)?;
        let oriented: Vec<f64> = match positive_class {
            Label::Real => scores.to_vec(),
            Label::Deepfake => scores.iter().map(|s| -s).collect(),
        };
        match auc_from_scores(&oriented, actual, positive_class) {
            Ok(auc) => {
                out.score_auc = Some(auc);
                out.roc = roc_curve(&oriented, actual, positive_class)?;
            }
            Err(MetricsError::SingleClass) => {}
            Err(e) => return Err(e),
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct Values {
    accuracy: Option<f64>,
    precision: Option<f64>,
    recall: Option<f64>,
    f1: Option<f64>,
    auc: Option<f64>,
}

#[derive(Serialize)]
struct Percents {
    accuracy: Option<String>,
    precision: Option<String>,
    recall: Option<String>,
    f1: Option<String>,
    auc: Option<String>,
}

#[derive(Serialize)]
struct Counts {
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    total: u64,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    positive_class: Label,
    metrics: Values,
    percent: Percents,
    confusion: Counts,
    score_auc: Option<f64>,
    config: &'a Value,
    history: &'a [EpochRecord],
    roc: &'a [RocPoint],
}

#[derive(Serialize)]
struct TrainingFile<'a> {
    config: &'a Value,
    history: &'a [EpochRecord],
    validation: Option<ReportFile<'a>>,
}

fn report_file<'a>(eval: &'a EvaluationReport, history: &'a [EpochRecord], config: &'a Value) -> ReportFile<'a> {
    let m = &eval.metrics;
    let cm = &m.confusion;
    ReportFile {
        positive_class: m.positive_class(),
        metrics: Values {
            accuracy: m.value(Metric::Accuracy),
            precision: m.value(Metric::Precision),
            recall: m.value(Metric::Recall),
            f1: m.value(Metric::F1),
            auc: m.value(Metric::Auc),
        },
        percent: Percents {
            accuracy: m.accuracy.map(percent_string),
            precision: m.precision.map(percent_string),
            recall: m.recall.map(percent_string),
            f1: m.f1.map(percent_string),
            auc: m.auc.map(percent_string),
        },
        confusion: Counts {
            tp: cm.tp,
            fp: cm.fp,
            fn_: cm.fn_,
            tn: cm.tn,
            total: cm.total(),
        },
        score_auc: eval.score_auc,
        config,
        history,
        roc: &eval.roc,
    }
}

fn to_text(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

/// JSON text of an evaluation report. Key order is fixed, so identical inputs
/// render identical bytes.
pub fn render_report(eval: &EvaluationReport, history: &[EpochRecord], config: &Value) -> String {
    to_text(&report_file(eval, history, config))
}

pub fn render_training_report(config: &Value, history: &[EpochRecord], validation: Option<&EvaluationReport>) -> String {
    let empty: &[EpochRecord] = &[];
    to_text(&TrainingFile {
        config,
        history,
        validation: validation.map(|v| report_file(v, empty, config)),
    })
}

pub fn emit_report(path: impl AsRef<Path>, eval: &EvaluationReport, history: &[EpochRecord], config: &Value) -> io::Result<()> {
    fs::write(path, render_report(eval, history, config))
}

/// `fpr,tpr` CSV for plotting.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.fpr, p.tpr));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn cnn_counts() -> ConfusionMatrix {
        ConfusionMatrix::new(15109, 1692, 2391, 15808, Label::Deepfake)
    }

    #[test]
    fn percent_strings_in_file() {
        let eval = EvaluationReport::from_confusion(&cnn_counts()).unwrap();
        let text = render_report(&eval, &[], &json!({"seed": 1}));
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["percent"]["accuracy"], "88.33");
        assert_eq!(v["percent"]["precision"], "89.93");
        assert_eq!(v["percent"]["recall"], "86.34");
        assert_eq!(v["percent"]["f1"], "88.10");
        assert_eq!(v["percent"]["auc"], "88.33");
        assert_eq!(v["positive_class"], "deepfake");
        assert_eq!(v["confusion"]["fn"], 2391);
        assert_eq!(v["history"], json!([]));
        assert_eq!(v["config"]["seed"], 1);
        assert_eq!(v["roc"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn rendering_is_byte_stable() {
        let eval = EvaluationReport::from_confusion(&cnn_counts()).unwrap();
        let history = vec![EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            train_accuracy: 0.75,
            valid_accuracy: None,
        }];
        let cfg = json!({"b": 1, "a": 2});
        assert_eq!(render_report(&eval, &history, &cfg), render_report(&eval, &history, &cfg));
    }

    #[test]
    fn undefined_metrics_are_null() {
        let eval = EvaluationReport::from_confusion(&ConfusionMatrix::new(0, 0, 0, 10, Label::Real)).unwrap();
        let v: Value = serde_json::from_str(&render_report(&eval, &[], &Value::Null)).unwrap();
        assert!(v["metrics"]["precision"].is_null());
        assert!(v["percent"]["f1"].is_null());
        assert_eq!(v["percent"]["accuracy"], "100.00");
    }

    #[test]
    fn predictions_orient_scores_by_positive_class() {
        let scores = [0.9, 0.8, 0.3, 0.1];
        let actual = [Label::Real, Label::Real, Label::Deepfake, Label::Deepfake];
        let predicted = actual;
        for positive in [Label::Real, Label::Deepfake] {
            let r = EvaluationReport::from_predictions(&scores, &predicted, &actual, positive).unwrap();
            assert_eq!(r.score_auc, Some(1.0));
        }
    }

    #[test]
    fn csv_has_header() {
        let csv = roc_csv(&[RocPoint { fpr: 0.0, tpr: 0.0 }, RocPoint { fpr: 1.0, tpr: 1.0 }]);
        assert_eq!(csv, "fpr,tpr\n0,0\n1,1\n");
    }
}
