use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::inference::Verdict;
use crate::label::Label;

/// What to do with a clip whose model output carried no usable answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbstainPolicy {
    /// Count it as a negative clip.
    #[default]
    Negative,
    /// Reject the whole video.
    Strict,
}

impl std::str::FromStr for AbstainPolicy {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "negative" => Ok(AbstainPolicy::Negative),
            "strict" => Ok(AbstainPolicy::Strict),
            other => Err(EvalError::Domain(format!("unknown abstain policy {other:?}"))),
        }
    }
}

impl std::fmt::Display for AbstainPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AbstainPolicy::Negative => "negative",
            AbstainPolicy::Strict => "strict",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoPrediction {
    pub video_id: String,
    pub model_id: String,
    pub label: Label,
    pub clip_count: usize,
    pub positive_clips: usize,
    /// Positive and total votes, for ensemble rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<(usize, usize)>,
}

/// Max rule: a video is positive as soon as one clip is.
pub fn aggregate_video(
    model_id: &str,
    video_id: &str,
    clip_labels: &[Label],
) -> Result<VideoPrediction, EvalError> {
    if clip_labels.is_empty() {
        return Err(EvalError::NoClips {
            video_id: video_id.to_string(),
        });
    }
    let positive_clips = clip_labels.iter().filter(|l| l.is_positive()).count();
    let label = clip_labels
        .iter()
        .copied()
        .max()
        .expect("nonempty checked above");
    Ok(VideoPrediction {
        video_id: video_id.to_string(),
        model_id: model_id.to_string(),
        label,
        clip_count: clip_labels.len(),
        positive_clips,
        votes: None,
    })
}

/// How a planned clip fared with one model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClipOutcome {
    Verdict(Verdict),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedVideo {
    pub video_id: String,
    pub model_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelAggregate {
    pub videos: BTreeMap<String, VideoPrediction>,
    pub rejected: Vec<RejectedVideo>,
    pub abstained_clips: usize,
    pub failed_clips: usize,
}

/// Aggregates one model's clip outcomes, grouped by video. Abstentions and
/// failed requests count as negative clips unless `policy` is strict.
pub fn aggregate_model<'a, I>(model_id: &str, outcomes: I, policy: AbstainPolicy) -> ModelAggregate
where
    I: IntoIterator<Item = (&'a str, &'a str, &'a ClipOutcome)>,
{
    let mut by_video: BTreeMap<&str, Vec<(&str, &ClipOutcome)>> = BTreeMap::new();
    for (video_id, clip_id, outcome) in outcomes {
        by_video.entry(video_id).or_default().push((clip_id, outcome));
    }

    let mut out = ModelAggregate::default();
    'videos: for (video_id, clips) in by_video {
        let mut labels = Vec::with_capacity(clips.len());
        for (clip_id, outcome) in clips {
            let (label, reason) = match outcome {
                ClipOutcome::Verdict(Verdict::Positive) => (Label::Positive, None),
                ClipOutcome::Verdict(Verdict::Negative) => (Label::Negative, None),
                ClipOutcome::Verdict(Verdict::Abstain) => {
                    out.abstained_clips += 1;
                    (Label::Negative, Some("abstained".to_string()))
                }
                ClipOutcome::Failed(e) => {
                    out.failed_clips += 1;
                    (Label::Negative, Some(format!("request failed: {e}")))
                }
            };
            if let (Some(reason), AbstainPolicy::Strict) = (reason, policy) {
                let err = EvalError::Unusable {
                    video_id: video_id.to_string(),
                    clip_id: clip_id.to_string(),
                    model_id: model_id.to_string(),
                    reason,
                };
                out.rejected.push(RejectedVideo {
                    video_id: video_id.to_string(),
                    model_id: model_id.to_string(),
                    reason: err.to_string(),
                });
                continue 'videos;
            }
            labels.push(label);
        }
        let pred = aggregate_video(model_id, video_id, &labels).expect("grouped videos have clips");
        out.videos.insert(video_id.to_string(), pred);
    }
    out
}
