use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::label::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Positive, Label::Negative) => self.fp += 1,
            (Label::Negative, Label::Positive) => self.fn_ += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
        }
    }

    /// Standard metrics. A zero denominator yields 0 with its flag set.
    pub fn report(&self) -> Result<MetricsReport, EvalError> {
        let total = self.total();
        if total == 0 {
            return Err(EvalError::Empty);
        }
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                (0.0, true)
            } else {
                (num as f64 / den as f64, false)
            }
        };
        let accuracy = (self.tp + self.tn) as f64 / total as f64;
        let (precision, undefined_precision) = ratio(self.tp, self.tp + self.fp);
        let (recall, undefined_recall) = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Ok(MetricsReport {
            counts: *self,
            accuracy,
            precision,
            recall,
            f1,
            undefined_precision,
            undefined_recall,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined_precision: bool,
    pub undefined_recall: bool,
}

/// Scores predictions against ground truth. Both maps must cover exactly
/// the same videos.
pub fn compute_metrics(
    predictions: &BTreeMap<String, Label>,
    ground_truth: &BTreeMap<String, Label>,
) -> Result<MetricsReport, EvalError> {
    let missing: Vec<String> = ground_truth
        .keys()
        .filter(|k| !predictions.contains_key(*k))
        .cloned()
        .collect();
    let extra: Vec<String> = predictions
        .keys()
        .filter(|k| !ground_truth.contains_key(*k))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(EvalError::Coverage { missing, extra });
    }
    let mut counts = ConfusionCounts::default();
    for (id, &truth) in ground_truth {
        counts.record(predictions[id], truth);
    }
    counts.report()
}
