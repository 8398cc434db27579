use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalError, VideoPrediction};
use crate::label::Label;

/// Model id used for fused predictions.
pub const ENSEMBLE_ID: &str = "ensemble";

/// Resolution of an exact tie between positive and negative votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    #[default]
    Positive,
    Negative,
    Error,
}

impl FromStr for TiePolicy {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(TiePolicy::Positive),
            "negative" => Ok(TiePolicy::Negative),
            "error" => Ok(TiePolicy::Error),
            other => Err(EvalError::Domain(format!("unknown tie policy {other:?}"))),
        }
    }
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TiePolicy::Positive => "positive",
            TiePolicy::Negative => "negative",
            TiePolicy::Error => "error",
        })
    }
}

/// The label held by strictly more than half of the models.
pub fn majority_vote(labels: &[Label], tie: TiePolicy) -> Result<Label, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::NoVotes);
    }
    let positive = labels.iter().filter(|l| l.is_positive()).count();
    let negative = labels.len() - positive;
    match positive.cmp(&negative) {
        std::cmp::Ordering::Greater => Ok(Label::Positive),
        std::cmp::Ordering::Less => Ok(Label::Negative),
        std::cmp::Ordering::Equal => match tie {
            TiePolicy::Positive => Ok(Label::Positive),
            TiePolicy::Negative => Ok(Label::Negative),
            TiePolicy::Error => Err(EvalError::Tie { positive, negative }),
        },
    }
}

/// Fuses per-model video predictions. Only videos every model predicted
/// are voted on; the rest are returned by id.
pub fn vote_videos(
    per_model: &BTreeMap<String, BTreeMap<String, VideoPrediction>>,
    tie: TiePolicy,
) -> Result<(BTreeMap<String, VideoPrediction>, Vec<String>), EvalError> {
    let mut all_ids: BTreeMap<&str, Vec<&VideoPrediction>> = BTreeMap::new();
    for videos in per_model.values() {
        for (id, pred) in videos {
            all_ids.entry(id).or_default().push(pred);
        }
    }
    let models = per_model.len();
    let mut fused = BTreeMap::new();
    let mut incomplete = Vec::new();
    for (video_id, preds) in all_ids {
        if preds.len() != models {
            incomplete.push(video_id.to_string());
            continue;
        }
        let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
        let label = majority_vote(&labels, tie)?;
        fused.insert(
            video_id.to_string(),
            VideoPrediction {
                video_id: video_id.to_string(),
                model_id: ENSEMBLE_ID.to_string(),
                label,
                clip_count: preds.iter().map(|p| p.clip_count).max().unwrap_or(0),
                positive_clips: preds.iter().map(|p| p.positive_clips).max().unwrap_or(0),
                votes: Some((labels.iter().filter(|l| l.is_positive()).count(), labels.len())),
            },
        );
    }
    Ok((fused, incomplete))
}
