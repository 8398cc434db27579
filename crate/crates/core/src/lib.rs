//! Segment-based ambivalence/hesitancy (A/H) recognition pipeline.
//!
//! Source videos and their annotated A/H intervals are cut into clips of at
//! most five seconds, turned into multimodal instruction samples, and scored
//! clip by clip through chat-completions model endpoints. A video is positive
//! when any of its clips is, and several models are fused by majority vote.

pub mod annotations;
pub mod dataset;
pub mod evaluation;
pub mod inference;
pub mod label;
pub mod media;
pub mod segmenter;
pub mod time;

pub use annotations::{merge_intervals, parse_manifest, Diagnostic, VideoAnnotation};
pub use dataset::{InstructionSample, PromptRegistry, PromptVariant, Strategy, TrainConfig};
pub use evaluation::{
    aggregate_video, compute_metrics, majority_vote, AbstainPolicy, MetricsReport, TiePolicy,
    VideoPrediction,
};
pub use inference::{parse_answer, ClipPrediction, ModelEndpoint, Verdict};
pub use label::Label;
pub use media::{MediaInfo, MediaTools};
pub use segmenter::{
    partition, plan_inference_clips, plan_training_clips, ClipRecord, ClipSpec,
    SegmentationPolicy,
};
pub use time::{Millis, TimeInterval};
