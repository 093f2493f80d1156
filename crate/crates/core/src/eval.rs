//! Confusion matrices, accuracy / F1 metrics and fixed-width reports.
//!
//! AD is the positive class. F1 with a zero denominator is 0.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::Prediction;
use crate::corpus::{Corpus, Label, Split};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no predictions for test participants: {}", .0.join(", "))]
    MissingPrediction(Vec<String>),
    #[error("prediction for unknown participant {0:?}")]
    UnknownParticipant(String),
    #[error("participant {0:?} is not in the test split")]
    NotInTestSplit(String),
    #[error("duplicate prediction for {0:?}")]
    DuplicatePrediction(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("baseline accuracy must be positive")]
    ZeroBaseline,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, gold: Label, predicted: Label) {
        match (gold, predicted) {
            (Label::Ad, Label::Ad) => self.tp += 1,
            (Label::NonAd, Label::Ad) => self.fp += 1,
            (Label::Ad, Label::NonAd) => self.fn_ += 1,
            (Label::NonAd, Label::NonAd) => self.tn += 1,
        }
    }

    /// Same matrix with non_AD treated as the positive class.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision_pos: f64,
    pub recall_pos: f64,
    pub f1_pos: f64,
    pub precision_neg: f64,
    pub recall_neg: f64,
    pub f1_neg: f64,
    pub macro_f1: f64,
    /// Support-weighted mean of the two class F1 scores.
    pub weighted_f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 as `2tp / (2tp + fp + fn)`, equal to the harmonic mean of precision
/// and recall whenever both are defined.
fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let f1_pos = f1(cm.tp, cm.fp, cm.fn_);
    let f1_neg = f1(cm.tn, cm.fn_, cm.fp);
    let pos_support = cm.tp + cm.fn_;
    let neg_support = cm.tn + cm.fp;
    Ok(Metrics {
        accuracy: ratio(cm.tp + cm.tn, total),
        precision_pos: ratio(cm.tp, cm.tp + cm.fp),
        recall_pos: ratio(cm.tp, pos_support),
        f1_pos,
        precision_neg: ratio(cm.tn, cm.tn + cm.fn_),
        recall_neg: ratio(cm.tn, neg_support),
        f1_neg,
        macro_f1: (f1_pos + f1_neg) / 2.0,
        weighted_f1: (f1_pos * pos_support as f64 + f1_neg * neg_support as f64) / total as f64,
        support: total,
    })
}

/// Tallies predictions against the test split of `gold`. Every test
/// participant needs exactly one prediction.
pub fn confuse(predictions: &[Prediction], gold: &Corpus) -> Result<ConfusionMatrix, EvalError> {
    let labels: HashMap<&str, (Label, Split)> = gold
        .records
        .iter()
        .map(|r| (r.participant_id.as_str(), (r.label, r.split)))
        .collect();
    let mut seen = BTreeSet::new();
    let mut cm = ConfusionMatrix::default();
    for p in predictions {
        let (label, split) = labels
            .get(p.participant_id.as_str())
            .ok_or_else(|| EvalError::UnknownParticipant(p.participant_id.clone()))?;
        if *split != Split::Test {
            return Err(EvalError::NotInTestSplit(p.participant_id.clone()));
        }
        if !seen.insert(p.participant_id.as_str()) {
            return Err(EvalError::DuplicatePrediction(p.participant_id.clone()));
        }
        cm.record(*label, p.label);
    }
    let missing: Vec<String> = gold
        .in_split(Split::Test)
        .filter(|r| !seen.contains(r.participant_id.as_str()))
        .map(|r| r.participant_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPrediction(missing));
    }
    Ok(cm)
}

/// `100 * (candidate - baseline) / baseline`, unrounded; see [`format_percent`].
pub fn relative_improvement(candidate_acc: f64, baseline_acc: f64) -> Result<f64, EvalError> {
    if !(baseline_acc > 0.0) {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(100.0 * (candidate_acc - baseline_acc) / baseline_acc)
}

/// One decimal place, e.g. `11.1%`.
pub fn format_percent(value: f64) -> String {
    format!("{value:.1}%")
}

/// Fixed-width `Method | Acc (%) | F1 (%)` table (F1 is macro-F1).
///
/// With `order`, rows are emitted in that order (unlisted rows follow in
/// input order), so the output does not depend on how rows arrived.
pub fn render_report(rows: &[(String, Metrics)], order: Option<&[&str]>) -> String {
    let mut ordered: Vec<&(String, Metrics)> = Vec::with_capacity(rows.len());
    if let Some(order) = order {
        for name in order {
            ordered.extend(rows.iter().filter(|(n, _)| n == name));
        }
    }
    let rest: Vec<&(String, Metrics)> = rows
        .iter()
        .filter(|r| !ordered.iter().any(|o| o.0 == r.0))
        .collect();
    ordered.extend(rest);

    let width = ordered
        .iter()
        .map(|(n, _)| n.chars().count())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let mut out = format!(
        "{:<width$} | {:>7} | {:>6}\n",
        "Method", "Acc (%)", "F1 (%)"
    );
    out.push_str(&format!(
        "{}-|-{}-|-{}\n",
        "-".repeat(width),
        "-".repeat(7),
        "-".repeat(6)
    ));
    for (name, m) in ordered {
        out.push_str(&format!(
            "{:<width$} | {:>7.2} | {:>6.2}\n",
            name,
            100.0 * m.accuracy,
            100.0 * m.macro_f1
        ));
    }
    out
}

/// CSV version of [`render_report`] carrying every metric.
pub fn render_csv(rows: &[(String, Metrics)]) -> String {
    let mut out = String::from(
        "method,accuracy,macro_f1,f1_pos,f1_neg,weighted_f1,precision_pos,recall_pos,precision_neg,recall_neg,support\n",
    );
    for (name, m) in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            name,
            m.accuracy,
            m.macro_f1,
            m.f1_pos,
            m.f1_neg,
            m.weighted_f1,
            m.precision_pos,
            m.recall_pos,
            m.precision_neg,
            m.recall_neg,
            m.support
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::Source;
    use crate::corpus::ParticipantRecord;

    fn gold(n_per_class: usize) -> Corpus {
        let records = (0..2 * n_per_class)
            .map(|i| ParticipantRecord {
                participant_id: format!("T{i:02}"),
                label: if i < n_per_class {
                    Label::Ad
                } else {
                    Label::NonAd
                },
                split: Split::Test,
                transcript_path: String::new(),
                age: None,
                gender: None,
                segment_count: None,
            })
            .collect();
        Corpus {
            records,
            provenance: String::new(),
        }
    }

    fn pred(id: &str, label: Label) -> Prediction {
        Prediction {
            participant_id: id.into(),
            label,
            score: 0.0,
            source: Source::Mock,
        }
    }

    #[test]
    fn perfect_and_missing() {
        let g = gold(24);
        let preds: Vec<Prediction> = g
            .records
            .iter()
            .map(|r| pred(&r.participant_id, r.label))
            .collect();
        let cm = confuse(&preds, &g).unwrap();
        assert_eq!((cm.fp, cm.fn_, cm.tp + cm.tn), (0, 0, 48));
        assert_eq!(
            confuse(&preds[..47], &g),
            Err(EvalError::MissingPrediction(vec!["T47".into()]))
        );
        let mut extra = preds.clone();
        extra.push(pred("nobody", Label::Ad));
        assert_eq!(
            confuse(&extra, &g),
            Err(EvalError::UnknownParticipant("nobody".into()))
        );
    }

    #[test]
    fn hand_built_matrix() {
        let g = gold(24);
        // 20 of 24 AD correct, 20 of 24 non-AD correct
        let preds: Vec<Prediction> = g
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let flip = i % 24 >= 20;
                let l = match (r.label, flip) {
                    (l, false) => l,
                    (Label::Ad, true) => Label::NonAd,
                    (Label::NonAd, true) => Label::Ad,
                };
                pred(&r.participant_id, l)
            })
            .collect();
        assert_eq!(
            confuse(&preds, &g).unwrap(),
            ConfusionMatrix::new(20, 4, 4, 20)
        );
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionMatrix::new(20, 4, 4, 20)).unwrap();
        assert!((m.accuracy - 40.0 / 48.0).abs() < 1e-15);
        assert!((m.macro_f1 - 40.0 / 48.0).abs() < 1e-15);
        let m = metrics(&ConfusionMatrix::new(24, 0, 0, 24)).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
        let m = metrics(&ConfusionMatrix::new(0, 0, 24, 24)).unwrap();
        assert_eq!(m.f1_pos, 0.0);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(
            metrics(&ConfusionMatrix::default()),
            Err(EvalError::EmptyMatrix)
        );
    }

    #[test]
    fn improvements() {
        assert_eq!(
            format_percent(relative_improvement(83.33, 75.00).unwrap()),
            "11.1%"
        );
        assert_eq!(
            format_percent(relative_improvement(87.5, 75.0).unwrap()),
            "16.7%"
        );
        assert_eq!(
            format_percent(relative_improvement(75.0, 75.0).unwrap()),
            "0.0%"
        );
        assert_eq!(relative_improvement(1.0, 0.0), Err(EvalError::ZeroBaseline));
    }

    #[test]
    fn report_rows() {
        let cot = metrics(&ConfusionMatrix::new(18, 2, 6, 22)).unwrap();
        let text = render_report(&[("CoT".into(), cot)], None);
        assert_eq!(text.lines().count(), 3);
        assert!(text
            .lines()
            .nth(2)
            .unwrap()
            .starts_with("CoT    |   83.33 |  83.22"));
        let base = metrics(&ConfusionMatrix::new(16, 4, 8, 20)).unwrap();
        let a = vec![("Baseline".to_string(), base), ("CoT".to_string(), cot)];
        let b = vec![("CoT".to_string(), cot), ("Baseline".to_string(), base)];
        let order = ["Baseline", "CoT"];
        assert_eq!(
            render_report(&a, Some(&order)),
            render_report(&b, Some(&order))
        );
    }
}
