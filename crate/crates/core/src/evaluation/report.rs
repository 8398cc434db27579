use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    aggregate_model, compute_metrics, vote_videos, AbstainPolicy, ClipOutcome, EvalError,
    MetricsReport, RejectedVideo, TiePolicy, VideoPrediction, ENSEMBLE_ID,
};
use crate::inference::{ClipPrediction, FailureRecord};
use crate::label::Label;
use crate::segmenter::ClipSpec;

/// Everything needed to score one inference run.
#[derive(Debug, Clone)]
pub struct EvaluationInput<'a> {
    /// Every planned inference clip. A clip with neither a prediction nor a
    /// failure record for some model counts as failed for that model.
    pub clips: &'a [ClipSpec],
    pub predictions: &'a [ClipPrediction],
    pub failures: &'a [FailureRecord],
    pub ground_truth: &'a BTreeMap<String, Label>,
    pub abstain_policy: AbstainPolicy,
    pub tie_policy: TiePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_id: String,
    pub videos: usize,
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub abstained_clips: usize,
    pub failed_clips: usize,
    /// Videos left out of this row's metrics (strict-mode rejections or
    /// missing votes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_videos: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// One row per model followed by the ensemble row.
    pub rows: Vec<ReportRow>,
    pub tie_policy: TiePolicy,
    pub abstain_policy: AbstainPolicy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<RejectedVideo>,
    pub predictions: Vec<VideoPrediction>,
}

impl EvaluationReport {
    pub fn row(&self, model_id: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model_id == model_id)
    }

    pub fn ensemble(&self) -> Option<&ReportRow> {
        self.row(ENSEMBLE_ID)
    }

    /// True when some clip failed or some video was left out.
    pub fn is_partial(&self) -> bool {
        !self.rejected.is_empty()
            || self
                .rows
                .iter()
                .any(|r| r.failed_clips > 0 || !r.excluded_videos.is_empty())
    }

    /// Plain-text table, one line per row.
    pub fn render_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.model_id.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>8}  {:>9}  {:>7}  {:>7}",
            "model", "videos", "accuracy", "precision", "recall", "f1"
        );
        for r in &self.rows {
            let flag = |v: f64, undefined: bool| {
                if undefined {
                    "n/a".to_string()
                } else {
                    format!("{:.1}%", v * 100.0)
                }
            };
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>8}  {:>9}  {:>7}  {:>7}",
                r.model_id,
                r.videos,
                format!("{:.1}%", m.accuracy * 100.0),
                flag(m.precision, m.undefined_precision),
                flag(m.recall, m.undefined_recall),
                format!("{:.1}%", m.f1 * 100.0),
            );
        }
        out
    }
}

/// Max-aggregates each model's clips, votes across models and scores every
/// model plus the ensemble against ground truth.
pub fn evaluate(input: &EvaluationInput<'_>) -> Result<EvaluationReport, EvalError> {
    let mut models: BTreeSet<&str> = input.predictions.iter().map(|p| p.model_id.as_str()).collect();
    models.extend(input.failures.iter().map(|f| f.model_id.as_str()));
    if models.is_empty() {
        return Err(EvalError::Empty);
    }

    let predicted: HashMap<(&str, &str), &ClipPrediction> = input
        .predictions
        .iter()
        .map(|p| ((p.model_id.as_str(), p.clip_id.as_str()), p))
        .collect();
    let failed: HashMap<(&str, &str), &FailureRecord> = input
        .failures
        .iter()
        .map(|f| ((f.model_id.as_str(), f.clip_id.as_str()), f))
        .collect();

    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    let mut per_model: BTreeMap<String, BTreeMap<String, VideoPrediction>> = BTreeMap::new();

    for model in &models {
        let outcomes: Vec<(&str, &str, ClipOutcome)> = input
            .clips
            .iter()
            .map(|c| {
                let key = (*model, c.clip_id.as_str());
                let outcome = match (predicted.get(&key), failed.get(&key)) {
                    (Some(p), _) => ClipOutcome::Verdict(p.verdict),
                    (None, Some(f)) => ClipOutcome::Failed(f.error.clone()),
                    (None, None) => ClipOutcome::Failed("no prediction recorded".into()),
                };
                (c.video_id.as_str(), c.clip_id.as_str(), outcome)
            })
            .collect();
        let agg = aggregate_model(
            model,
            outcomes.iter().map(|(v, c, o)| (*v, *c, o)),
            input.abstain_policy,
        );
        let excluded: Vec<String> = agg.rejected.iter().map(|r| r.video_id.clone()).collect();
        let labels: BTreeMap<String, Label> =
            agg.videos.iter().map(|(k, v)| (k.clone(), v.label)).collect();
        rows.push(ReportRow {
            model_id: model.to_string(),
            videos: labels.len(),
            metrics: score(&labels, &without(input.ground_truth, &excluded))?,
            abstained_clips: agg.abstained_clips,
            failed_clips: agg.failed_clips,
            excluded_videos: excluded,
        });
        rejected.extend(agg.rejected);
        per_model.insert(model.to_string(), agg.videos);
    }

    let (fused, incomplete) = vote_videos(&per_model, input.tie_policy)?;
    // videos every model rejected never reach the vote at all
    let mut excluded: BTreeSet<String> = incomplete.into_iter().collect();
    excluded.extend(rejected.iter().map(|r| r.video_id.clone()));
    let excluded: Vec<String> = excluded
        .into_iter()
        .filter(|v| !fused.contains_key(v))
        .collect();
    let labels: BTreeMap<String, Label> = fused.iter().map(|(k, v)| (k.clone(), v.label)).collect();
    rows.push(ReportRow {
        model_id: ENSEMBLE_ID.to_string(),
        videos: labels.len(),
        metrics: score(&labels, &without(input.ground_truth, &excluded))?,
        abstained_clips: rows.iter().map(|r| r.abstained_clips).sum(),
        failed_clips: rows.iter().map(|r| r.failed_clips).sum(),
        excluded_videos: excluded,
    });

    let predictions = per_model
        .into_values()
        .flat_map(BTreeMap::into_values)
        .chain(fused.into_values())
        .collect();
    Ok(EvaluationReport {
        rows,
        tie_policy: input.tie_policy,
        abstain_policy: input.abstain_policy,
        rejected,
        predictions,
    })
}

// A row whose every video was excluded reports zeros with both flags set.
fn score(
    labels: &BTreeMap<String, Label>,
    truth: &BTreeMap<String, Label>,
) -> Result<MetricsReport, EvalError> {
    if labels.is_empty() && truth.is_empty() {
        return Ok(MetricsReport {
            counts: Default::default(),
            accuracy: 0.0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            undefined_precision: true,
            undefined_recall: true,
        });
    }
    compute_metrics(labels, truth)
}

fn without(truth: &BTreeMap<String, Label>, excluded: &[String]) -> BTreeMap<String, Label> {
    truth
        .iter()
        .filter(|(k, _)| !excluded.contains(k))
        .map(|(k, v)| (k.clone(), *v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::Verdict;
    use crate::TimeInterval;

    fn clip(video: &str, start: f64, end: f64) -> ClipSpec {
        ClipSpec::new(video, TimeInterval::from_secs(start, end).unwrap(), None)
    }

    fn pred(model: &str, clip: &ClipSpec, verdict: Verdict) -> ClipPrediction {
        ClipPrediction {
            clip_id: clip.clip_id.clone(),
            video_id: clip.video_id.clone(),
            model_id: model.into(),
            verdict,
            raw_text: String::new(),
            latency_ms: 1,
            attempts: 1,
        }
    }

    fn truth() -> BTreeMap<String, Label> {
        [("x".to_string(), Label::Positive), ("y".to_string(), Label::Negative)].into()
    }

    #[test]
    fn three_models_with_disagreement() {
        use Verdict::{Negative as N, Positive as P};
        let clips = vec![clip("x", 0.0, 5.0), clip("x", 5.0, 8.0), clip("y", 0.0, 5.0)];
        let script = [("a", [N, P, N]), ("b", [N, N, N]), ("c", [P, N, P])];
        let predictions: Vec<_> = script
            .iter()
            .flat_map(|(m, vs)| clips.iter().zip(vs).map(move |(c, v)| pred(m, c, *v)))
            .collect();
        let gt = truth();
        let report = evaluate(&EvaluationInput {
            clips: &clips,
            predictions: &predictions,
            failures: &[],
            ground_truth: &gt,
            abstain_policy: AbstainPolicy::Negative,
            tie_policy: TiePolicy::Positive,
        })
        .unwrap();
        // x votes (1,0,1) -> 1; y votes (0,0,1) -> 0
        assert_eq!(report.row("a").unwrap().metrics.accuracy, 1.0);
        assert_eq!(report.row("b").unwrap().metrics.accuracy, 0.5);
        assert_eq!(report.row("c").unwrap().metrics.accuracy, 0.5);
        assert_eq!(report.ensemble().unwrap().metrics.accuracy, 1.0);
        assert_eq!(report.rows.len(), 4);
        assert!(!report.is_partial());
        let table = report.render_table();
        assert!(table.contains("ensemble"));
        assert!(table.contains("100.0%"));
    }

    #[test]
    fn missing_predictions_count_as_failures() {
        let clips = vec![clip("x", 0.0, 5.0), clip("y", 0.0, 5.0)];
        let predictions = vec![pred("a", &clips[0], Verdict::Positive)];
        let gt = truth();
        let mut input = EvaluationInput {
            clips: &clips,
            predictions: &predictions,
            failures: &[],
            ground_truth: &gt,
            abstain_policy: AbstainPolicy::Negative,
            tie_policy: TiePolicy::Positive,
        };
        let report = evaluate(&input).unwrap();
        assert_eq!(report.row("a").unwrap().failed_clips, 1);
        assert!(report.is_partial());
        assert_eq!(report.row("a").unwrap().metrics.accuracy, 1.0);

        input.abstain_policy = AbstainPolicy::Strict;
        let report = evaluate(&input).unwrap();
        assert_eq!(report.row("a").unwrap().excluded_videos, vec!["y".to_string()]);
        assert_eq!(report.ensemble().unwrap().excluded_videos, vec!["y".to_string()]);
        assert_eq!(report.ensemble().unwrap().videos, 1);
        assert_eq!(report.rejected.len(), 1);
    }

    #[test]
    fn ground_truth_mismatch_is_an_error() {
        let clips = vec![clip("x", 0.0, 5.0)];
        let predictions = vec![pred("a", &clips[0], Verdict::Positive)];
        let gt = truth();
        let err = evaluate(&EvaluationInput {
            clips: &clips,
            predictions: &predictions,
            failures: &[],
            ground_truth: &gt,
            abstain_policy: AbstainPolicy::Negative,
            tie_policy: TiePolicy::Positive,
        })
        .unwrap_err();
        assert!(matches!(err, EvalError::Coverage { .. }));
    }
}
