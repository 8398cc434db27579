//! A/H annotation manifests.
//!
//! A manifest is JSONL, one source video per line:
//!
//! ```text
//! {"video_id":"clip_02","path":"videos/clip_02.mp4","label":1,"segments":[[3.0,9.0]]}
//! ```
//!
//! `segments` lists the annotated A/H intervals in seconds and may be
//! omitted for negative videos. An optional `duration_s` records a known
//! media duration. Relative `path`s are resolved by the caller.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;
use crate::time::{Millis, TimeInterval};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest line {line}: video_id {video_id:?} already defined on line {first_line}")]
    Conflict {
        video_id: String,
        line: usize,
        first_line: usize,
    },
    #[error("manifest line {line}: {message}")]
    Domain { line: usize, message: String },
    #[error("video {video_id:?} is labeled positive but no annotated segment survives validation")]
    Inconsistent { video_id: String },
    #[error("video {video_id:?}: probed duration must be positive, got {duration}")]
    BadDuration { video_id: String, duration: Millis },
}

/// A structured warning emitted while normalizing annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub video_id: String,
    pub code: String,
    pub detail: String,
}

impl Diagnostic {
    pub fn new(video_id: &str, code: &str, detail: impl Into<String>) -> Self {
        Self {
            video_id: video_id.to_string(),
            code: code.to_string(),
            detail: detail.into(),
        }
    }
}

/// One source video's global label and annotated A/H segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoAnnotation {
    pub video_id: String,
    #[serde(rename = "path")]
    pub media_path: String,
    #[serde(rename = "label")]
    pub global_label: Label,
    #[serde(default)]
    pub segments: Vec<TimeInterval>,
    #[serde(rename = "duration_s", default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<Millis>,
}

#[derive(Deserialize)]
struct RawRecord {
    video_id: String,
    path: String,
    label: serde_json::Value,
    #[serde(default)]
    segments: Vec<[f64; 2]>,
    #[serde(default)]
    duration_s: Option<f64>,
}

/// Parses a JSONL manifest. Segments are kept as written; call
/// [`VideoAnnotation::validate`] to normalize them against the media.
pub fn parse_manifest(text: &str) -> Result<Vec<VideoAnnotation>, AnnotationError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(raw_line).map_err(|e| AnnotationError::Parse {
            line,
            message: e.to_string(),
        })?;
        let annotation = from_raw(raw, line)?;
        if let Some(&first_line) = seen.get(&annotation.video_id) {
            return Err(AnnotationError::Conflict {
                video_id: annotation.video_id,
                line,
                first_line,
            });
        }
        seen.insert(annotation.video_id.clone(), line);
        out.push(annotation);
    }
    Ok(out)
}

fn from_raw(raw: RawRecord, line: usize) -> Result<VideoAnnotation, AnnotationError> {
    let domain = |message: String| AnnotationError::Domain { line, message };
    if raw.video_id.trim().is_empty() {
        return Err(domain("video_id must be nonempty".into()));
    }
    let global_label = raw
        .label
        .as_i64()
        .and_then(Label::from_bit)
        .ok_or_else(|| domain(format!("label {} is not 0 or 1", raw.label)))?;
    let segments = raw
        .segments
        .iter()
        .map(|&[start, end]| {
            TimeInterval::from_secs(start, end)
                .map_err(|e| domain(format!("segment [{start}, {end}]: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let duration = raw
        .duration_s
        .map(|d| match Millis::from_secs(d) {
            Ok(ms) if ms > Millis::ZERO => Ok(ms),
            _ => Err(domain(format!("duration_s {d} must be a positive number"))),
        })
        .transpose()?;
    Ok(VideoAnnotation {
        video_id: raw.video_id,
        media_path: raw.path,
        global_label,
        segments,
        duration,
    })
}

/// Sorts and unions intervals. Touching intervals are merged.
pub fn merge_intervals(segments: &[TimeInterval]) -> Vec<TimeInterval> {
    let mut sorted = segments.to_vec();
    sorted.sort();
    let mut merged: Vec<TimeInterval> = Vec::with_capacity(sorted.len());
    for iv in sorted {
        match merged.last_mut() {
            Some(last) if iv.start() <= last.end() => {
                if iv.end() > last.end() {
                    *last = TimeInterval::new(last.start(), iv.end())
                        .expect("extending a valid interval stays valid");
                }
            }
            _ => merged.push(iv),
        }
    }
    merged
}

/// Result of [`VideoAnnotation::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validated {
    pub annotation: VideoAnnotation,
    pub diagnostics: Vec<Diagnostic>,
}

impl VideoAnnotation {
    /// Binds the annotation to the probed media duration: merges overlapping
    /// segments, clamps them to `[0, duration]` and drops any that vanish.
    pub fn validate(&self, probed_duration: Millis) -> Result<Validated, AnnotationError> {
        if probed_duration <= Millis::ZERO {
            return Err(AnnotationError::BadDuration {
                video_id: self.video_id.clone(),
                duration: probed_duration,
            });
        }
        let mut diagnostics = Vec::new();
        let mut source = self.segments.as_slice();
        if self.global_label == Label::Negative && !source.is_empty() {
            diagnostics.push(Diagnostic::new(
                &self.video_id,
                "negative_with_segments",
                format!("{} segment(s) ignored on a negative video", source.len()),
            ));
            source = &[];
        }

        let mut segments = Vec::new();
        for iv in merge_intervals(source) {
            match iv.clamp_to(probed_duration) {
                Some(clamped) => {
                    if clamped != iv {
                        diagnostics.push(Diagnostic::new(
                            &self.video_id,
                            "segment_clamped",
                            format!("{iv} clamped to {clamped}"),
                        ));
                    }
                    segments.push(clamped);
                }
                None => diagnostics.push(Diagnostic::new(
                    &self.video_id,
                    "segment_out_of_range",
                    format!("{iv} lies outside [0, {probed_duration}]"),
                )),
            }
        }

        if self.global_label == Label::Positive && segments.is_empty() {
            return Err(AnnotationError::Inconsistent {
                video_id: self.video_id.clone(),
            });
        }

        Ok(Validated {
            annotation: VideoAnnotation {
                segments,
                duration: Some(probed_duration),
                ..self.clone()
            },
            diagnostics,
        })
    }

    /// Total annotated time.
    pub fn annotated_time(&self) -> Millis {
        self.segments
            .iter()
            .fold(Millis::ZERO, |acc, iv| acc + iv.duration())
    }

    pub fn to_manifest_line(&self) -> String {
        serde_json::to_string(self).expect("annotation serializes")
    }
}
