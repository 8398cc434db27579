use std::collections::{BTreeMap, HashSet};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::client::{predict_clip, ChatClient};
use super::{ClipPrediction, InferenceError, ModelEndpoint};
use crate::dataset::PromptVariant;
use crate::segmenter::ClipRecord;

/// A (clip, model) pair that produced no prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub clip_id: String,
    pub video_id: String,
    pub model_id: String,
    pub error: String,
}

/// Predictions keyed by model id, then clip id, plus the failure ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    pub predictions: BTreeMap<String, BTreeMap<String, ClipPrediction>>,
    pub failures: Vec<FailureRecord>,
}

impl PredictionSet {
    pub fn prediction_count(&self) -> usize {
        self.predictions.values().map(BTreeMap::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClipPrediction> {
        self.predictions.values().flat_map(BTreeMap::values)
    }
}

/// Sends every clip to every endpoint with at most `max_in_flight`
/// outstanding requests per endpoint. Per-item failures are collected in
/// the ledger; only invalid arguments fail the whole batch.
pub async fn run_batch(
    client: &ChatClient,
    clips: &[ClipRecord],
    endpoints: &[ModelEndpoint],
    prompt: &PromptVariant,
    max_in_flight: usize,
) -> Result<PredictionSet, InferenceError> {
    if max_in_flight == 0 {
        return Err(InferenceError::Config("max_in_flight must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = clips.iter().find(|c| !seen.insert(c.clip_id())) {
        return Err(InferenceError::Config(format!(
            "duplicate clip id {:?}",
            dup.clip_id()
        )));
    }
    let mut seen = HashSet::new();
    for ep in endpoints {
        ep.check()?;
        if !seen.insert(ep.model_id.as_str()) {
            return Err(InferenceError::Config(format!(
                "duplicate model id {:?}",
                ep.model_id
            )));
        }
    }

    let per_endpoint = endpoints.iter().map(|ep| async move {
        let outcomes: Vec<_> = stream::iter(clips)
            .map(|clip| async move { (clip, predict_clip(client, ep, clip, prompt).await) })
            .buffer_unordered(max_in_flight)
            .collect()
            .await;
        (ep, outcomes)
    });

    let mut set = PredictionSet::default();
    for (ep, outcomes) in futures::future::join_all(per_endpoint).await {
        let by_clip = set.predictions.entry(ep.model_id.clone()).or_default();
        for (clip, outcome) in outcomes {
            match outcome {
                Ok(pred) => {
                    by_clip.insert(pred.clip_id.clone(), pred);
                }
                Err(e) => {
                    tracing::warn!(clip = clip.clip_id(), model = %ep.model_id, error = %e, "clip failed");
                    set.failures.push(FailureRecord {
                        clip_id: clip.clip_id().to_string(),
                        video_id: clip.video_id().to_string(),
                        model_id: ep.model_id.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    set.failures
        .sort_by(|a, b| (&a.model_id, &a.clip_id).cmp(&(&b.model_id, &b.clip_id)));
    Ok(set)
}
