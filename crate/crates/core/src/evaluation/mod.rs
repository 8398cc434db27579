//! Video-level aggregation, model voting and classification metrics.

mod aggregate;
mod metrics;
mod report;
mod simulate;
mod vote;

use thiserror::Error;

pub use aggregate::{
    aggregate_model, aggregate_video, AbstainPolicy, ClipOutcome, ModelAggregate, RejectedVideo,
    VideoPrediction,
};
pub use metrics::{compute_metrics, ConfusionCounts, MetricsReport};
pub use report::{evaluate, EvaluationInput, EvaluationReport, ReportRow};
pub use simulate::{ensemble_accuracy_exact, simulate_ensemble, SimulationConfig, SimulationResult};
pub use vote::{majority_vote, vote_videos, TiePolicy, ENSEMBLE_ID};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("video {video_id:?} has no clip verdicts")]
    NoClips { video_id: String },
    #[error("video {video_id:?}: clip {clip_id:?} has no usable verdict from {model_id:?} ({reason})")]
    Unusable {
        video_id: String,
        clip_id: String,
        model_id: String,
        reason: String,
    },
    #[error("majority vote needs at least one model")]
    NoVotes,
    #[error("vote tied {positive} to {negative}")]
    Tie { positive: usize, negative: usize },
    #[error("prediction/ground-truth mismatch: missing {missing:?}, extra {extra:?}")]
    Coverage {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("nothing to evaluate")]
    Empty,
    #[error("{0}")]
    Domain(String),
}
