//! Clip planning: pure time arithmetic over validated annotations.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::VideoAnnotation;
use crate::label::Label;
use crate::time::{Millis, TimeError, TimeInterval};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("invalid segmentation policy: {0}")]
    Policy(String),
    #[error("video {video_id:?} has not been validated against its media duration")]
    NotValidated { video_id: String },
    #[error("video {video_id:?}: duration must be positive, got {duration}")]
    Duration { video_id: String, duration: f64 },
    #[error(transparent)]
    Time(#[from] TimeError),
}

/// How source time is cut into clips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationPolicy {
    /// Maximum clip length.
    #[serde(rename = "clip_len_s")]
    pub clip_len: Millis,
    /// A trailing remainder shorter than this is discarded.
    #[serde(rename = "min_tail_s")]
    pub min_tail: Millis,
    /// Emit a whole-video clip when partitioning yields nothing.
    pub rescue_empty: bool,
    /// Split negative training videos into clips. When false each negative
    /// video becomes one sample spanning its full duration.
    pub split_negatives: bool,
}

impl SegmentationPolicy {
    pub fn training() -> Self {
        Self {
            clip_len: Millis(5_000),
            min_tail: Millis(1_000),
            rescue_empty: false,
            split_negatives: true,
        }
    }

    pub fn inference() -> Self {
        Self {
            rescue_empty: true,
            ..Self::training()
        }
    }

    pub fn check(&self) -> Result<(), SegmentError> {
        if self.clip_len <= Millis::ZERO {
            return Err(SegmentError::Policy(format!(
                "clip length must be positive, got {}",
                self.clip_len
            )));
        }
        if self.min_tail < Millis::ZERO || self.min_tail > self.clip_len {
            return Err(SegmentError::Policy(format!(
                "minimum tail {} must lie in [0, {}]",
                self.min_tail, self.clip_len
            )));
        }
        Ok(())
    }
}

impl Default for SegmentationPolicy {
    fn default() -> Self {
        Self::training()
    }
}

/// Splits `interval` into consecutive windows of `clip_len`.
///
/// An interval shorter than one clip is returned unchanged. Otherwise the
/// trailing remainder survives only when it is at least `min_tail` long.
pub fn partition(interval: TimeInterval, policy: &SegmentationPolicy) -> Vec<TimeInterval> {
    let step = policy.clip_len.as_i64();
    let start = interval.start().as_i64();
    let total = interval.duration().as_i64();
    if total < step {
        return vec![interval];
    }
    let full = total / step;
    let tail = total % step;
    let mut windows: Vec<TimeInterval> = (0..full)
        .map(|k| {
            TimeInterval::from_millis(start + k * step, start + (k + 1) * step)
                .expect("positive step yields a valid window")
        })
        .collect();
    if tail > 0 && tail >= policy.min_tail.as_i64() {
        windows.push(
            TimeInterval::new(Millis(start + full * step), interval.end())
                .expect("nonzero tail yields a valid window"),
        );
    }
    windows
}

/// A planned clip in source-video coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClipSpec {
    pub clip_id: String,
    pub video_id: String,
    #[serde(flatten, with = "window_fields")]
    pub window: TimeInterval,
    pub label: Option<Label>,
}

impl ClipSpec {
    pub fn new(video_id: &str, window: TimeInterval, label: Option<Label>) -> Self {
        Self {
            clip_id: clip_id(video_id, window),
            video_id: video_id.to_string(),
            window,
            label,
        }
    }
}

pub fn clip_id(video_id: &str, window: TimeInterval) -> String {
    format!(
        "{video_id}:{}-{}",
        window.start().as_i64(),
        window.end().as_i64()
    )
}

/// Splits a clip id back into its video id and window.
pub fn parse_clip_id(clip_id: &str) -> Option<(&str, TimeInterval)> {
    let (video_id, range) = clip_id.rsplit_once(':')?;
    let (start, end) = range.split_once('-')?;
    let window = TimeInterval::from_millis(start.parse().ok()?, end.parse().ok()?).ok()?;
    Some((video_id, window))
}

/// A clip whose media has been written to disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    #[serde(flatten)]
    pub spec: ClipSpec,
    pub video_path: PathBuf,
    #[serde(default)]
    pub audio_path: Option<PathBuf>,
}

impl ClipRecord {
    pub fn clip_id(&self) -> &str {
        &self.spec.clip_id
    }

    pub fn video_id(&self) -> &str {
        &self.spec.video_id
    }

    pub fn label(&self) -> Option<Label> {
        self.spec.label
    }
}

/// Training clips for one validated annotation. Negative videos are cut
/// over their full duration, positive videos over each annotated segment.
pub fn plan_training_clips(
    annotation: &VideoAnnotation,
    policy: &SegmentationPolicy,
) -> Result<Vec<ClipSpec>, SegmentError> {
    policy.check()?;
    let duration = annotation
        .duration
        .ok_or_else(|| SegmentError::NotValidated {
            video_id: annotation.video_id.clone(),
        })?;
    let label = annotation.global_label;
    let sources = match label {
        Label::Negative => vec![TimeInterval::new(Millis::ZERO, duration)?],
        Label::Positive => annotation.segments.clone(),
    };
    let mut clips = Vec::new();
    for source in sources {
        let windows = if label == Label::Negative && !policy.split_negatives {
            vec![source]
        } else {
            partition(source, policy)
        };
        clips.extend(
            windows
                .into_iter()
                .map(|w| ClipSpec::new(&annotation.video_id, w, Some(label))),
        );
    }
    Ok(clips)
}

/// Unlabeled clips covering a test video.
pub fn plan_inference_clips(
    video_id: &str,
    duration_s: f64,
    policy: &SegmentationPolicy,
) -> Result<Vec<ClipSpec>, SegmentError> {
    policy.check()?;
    let bad_duration = || SegmentError::Duration {
        video_id: video_id.to_string(),
        duration: duration_s,
    };
    if !(duration_s > 0.0) {
        return Err(bad_duration());
    }
    let whole = TimeInterval::new(Millis::ZERO, Millis::from_secs(duration_s)?)
        .map_err(|_| bad_duration())?;
    let mut windows = partition(whole, policy);
    if windows.is_empty() && policy.rescue_empty {
        windows.push(whole);
    }
    Ok(windows
        .into_iter()
        .map(|w| ClipSpec::new(video_id, w, None))
        .collect())
}

mod window_fields {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::time::{Millis, TimeInterval};

    #[derive(Serialize, Deserialize)]
    struct Fields {
        start_s: Millis,
        end_s: Millis,
    }

    pub fn serialize<S: Serializer>(w: &TimeInterval, s: S) -> Result<S::Ok, S::Error> {
        Fields {
            start_s: w.start(),
            end_s: w.end(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TimeInterval, D::Error> {
        let f = Fields::deserialize(d)?;
        TimeInterval::new(f.start_s, f.end_s).map_err(D::Error::custom)
    }
}
