//! ffmpeg/ffprobe subprocess wrappers.
//!
//! Every operation spawns one child process and waits for it. Clips are
//! re-encoded on cut so boundaries land within a frame of the requested
//! window instead of snapping to keyframes.
//!
//! Tool discovery order: `AHCLIP_FFMPEG` / `AHCLIP_FFPROBE` environment
//! variables, then the configured names, resolved through `PATH`. When no
//! ffprobe is available, probing falls back to parsing `ffmpeg -i` output.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmenter::{ClipRecord, ClipSpec};
use crate::time::{Millis, TimeInterval};

pub const FFMPEG_ENV: &str = "AHCLIP_FFMPEG";
pub const FFPROBE_ENV: &str = "AHCLIP_FFPROBE";

/// Allowed gap between a planned window and the measured clip duration.
pub const DURATION_TOLERANCE_S: f64 = 0.1;

const MAX_FIXTURE_S: f64 = 60.0;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: unreadable media ({detail})", path.display())]
    Format { path: PathBuf, detail: String },
    #[error("{tool} exited with {status}: {stderr}")]
    Tool {
        tool: String,
        status: String,
        stderr: String,
    },
    #[error("media tool {tool:?} is not usable: {detail}")]
    ToolMissing { tool: String, detail: String },
    #[error("{0}")]
    Domain(String),
    #[error("{}: no audio track", path.display())]
    ModalityMissing { path: PathBuf },
    #[error("{}: measured {measured:.3}s, expected {expected:.3}s", path.display())]
    DurationMismatch {
        path: PathBuf,
        expected: f64,
        measured: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MediaConfig {
    pub ffmpeg: String,
    pub ffprobe: Option<String>,
    pub video_codec: String,
    pub audio_codec: String,
    /// Upper bound on concurrently running media subprocesses.
    pub max_procs: usize,
}

impl Default for MediaConfig {
    fn default() -> Self {
        Self {
            ffmpeg: "ffmpeg".into(),
            ffprobe: None,
            video_codec: "libx264".into(),
            audio_codec: "aac".into(),
            max_procs: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaInfo {
    pub duration_s: f64,
    pub has_audio: bool,
    pub has_video: bool,
    /// Zero when the file has no video stream.
    pub width: u32,
    pub height: u32,
}

impl MediaInfo {
    pub fn duration(&self) -> Millis {
        Millis::from_secs(self.duration_s).unwrap_or(Millis::ZERO)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipArtifact {
    pub clip_id: String,
    pub video_path: PathBuf,
    pub audio_path: Option<PathBuf>,
    pub measured_duration_s: f64,
}

/// Audio track of a generated fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureAudio {
    None,
    Tone { frequency_hz: u32 },
    Silent,
}

impl From<bool> for FixtureAudio {
    fn from(with_audio: bool) -> Self {
        if with_audio {
            FixtureAudio::Tone { frequency_hz: 440 }
        } else {
            FixtureAudio::None
        }
    }
}

#[derive(Debug, Clone)]
pub struct MediaTools {
    ffmpeg: PathBuf,
    ffprobe: Option<PathBuf>,
    video_codec: String,
    audio_codec: String,
}

impl MediaTools {
    /// Resolves and smoke-tests the configured binaries.
    pub fn discover(config: &MediaConfig) -> Result<Self, MediaError> {
        let ffmpeg = std::env::var_os(FFMPEG_ENV)
            .unwrap_or_else(|| OsString::from(&config.ffmpeg));
        let ffmpeg = check_tool(PathBuf::from(ffmpeg))?;

        let ffprobe = match (std::env::var_os(FFPROBE_ENV), &config.ffprobe) {
            (Some(p), _) => Some(check_tool(PathBuf::from(p))?),
            (None, Some(p)) => Some(check_tool(PathBuf::from(p))?),
            (None, None) => check_tool(PathBuf::from("ffprobe")).ok(),
        };

        Ok(Self {
            ffmpeg,
            ffprobe,
            video_codec: config.video_codec.clone(),
            audio_codec: config.audio_codec.clone(),
        })
    }

    pub fn ffmpeg(&self) -> &Path {
        &self.ffmpeg
    }

    pub fn ffprobe(&self) -> Option<&Path> {
        self.ffprobe.as_deref()
    }

    pub fn probe(&self, path: &Path) -> Result<MediaInfo, MediaError> {
        std::fs::metadata(path).map_err(|source| MediaError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        match &self.ffprobe {
            Some(ffprobe) => {
                let out = run_capture(
                    Command::new(ffprobe)
                        .args(["-v", "error", "-print_format", "json"])
                        .args(["-show_format", "-show_streams"])
                        .arg(path),
                    ffprobe,
                )?;
                if !out.status.success() {
                    return Err(MediaError::Format {
                        path: path.to_path_buf(),
                        detail: tail(&out.stderr),
                    });
                }
                parse_ffprobe_json(&String::from_utf8_lossy(&out.stdout)).map_err(|detail| {
                    MediaError::Format {
                        path: path.to_path_buf(),
                        detail,
                    }
                })
            }
            None => {
                // Exits nonzero because no output is named; the input
                // report on stderr is all we need.
                let out = run_capture(
                    Command::new(&self.ffmpeg)
                        .args(["-hide_banner", "-nostdin", "-i"])
                        .arg(path),
                    &self.ffmpeg,
                )?;
                parse_ffmpeg_banner(&String::from_utf8_lossy(&out.stderr)).map_err(|detail| {
                    MediaError::Format {
                        path: path.to_path_buf(),
                        detail,
                    }
                })
            }
        }
    }

    /// Writes `window` of `source` to `out_path`, re-encoding video and
    /// audio. A window spanning the whole source is stream-copied.
    pub fn cut(
        &self,
        source: &Path,
        window: TimeInterval,
        out_path: &Path,
    ) -> Result<ClipArtifact, MediaError> {
        let info = self.probe(source)?;
        let source_len = info.duration();
        if window.end() > source_len {
            return Err(MediaError::Domain(format!(
                "window {window} exceeds {} duration {source_len}",
                source.display()
            )));
        }
        ensure_parent(out_path)?;

        let mut cmd = self.ffmpeg_base();
        if window.start() == Millis::ZERO && window.end() == source_len {
            cmd.arg("-i").arg(source).args(["-map", "0", "-c", "copy"]);
        } else {
            cmd.arg("-ss")
                .arg(secs_arg(window.start()))
                .arg("-i")
                .arg(source)
                .arg("-t")
                .arg(secs_arg(window.duration()))
                .args(["-map", "0:v:0", "-map", "0:a:0?"])
                .args(["-c:v", &self.video_codec])
                .args(["-pix_fmt", "yuv420p"]);
            if self.video_codec == "libx264" {
                cmd.args(["-preset", "veryfast"]);
            }
            cmd.args(["-c:a", &self.audio_codec]);
        }
        cmd.arg(out_path);
        self.run_ffmpeg(&mut cmd, out_path)?;

        let measured = self.probe(out_path)?.duration_s;
        let expected = window.duration().as_secs();
        if (measured - expected).abs() > DURATION_TOLERANCE_S {
            return Err(MediaError::DurationMismatch {
                path: out_path.to_path_buf(),
                expected,
                measured,
            });
        }
        Ok(ClipArtifact {
            clip_id: file_stem(out_path),
            video_path: out_path.to_path_buf(),
            audio_path: None,
            measured_duration_s: measured,
        })
    }

    /// Writes the audio track as mono 16 kHz 16-bit PCM WAV.
    pub fn extract_audio(&self, source: &Path, out_path: &Path) -> Result<PathBuf, MediaError> {
        let info = self.probe(source)?;
        if !info.has_audio {
            return Err(MediaError::ModalityMissing {
                path: source.to_path_buf(),
            });
        }
        ensure_parent(out_path)?;
        let mut cmd = self.ffmpeg_base();
        cmd.arg("-i")
            .arg(source)
            .args(["-vn", "-ac", "1", "-ar", "16000", "-c:a", "pcm_s16le"])
            .args(["-f", "wav"])
            .arg(out_path);
        self.run_ffmpeg(&mut cmd, out_path)?;
        Ok(out_path.to_path_buf())
    }

    /// Renders a small test-pattern video with an optional audio track.
    pub fn gen_fixture(
        &self,
        duration_s: f64,
        audio: FixtureAudio,
        out_path: &Path,
    ) -> Result<PathBuf, MediaError> {
        if !(duration_s > 0.0 && duration_s <= MAX_FIXTURE_S) {
            return Err(MediaError::Domain(format!(
                "fixture duration {duration_s} must lie in (0, {MAX_FIXTURE_S}]"
            )));
        }
        ensure_parent(out_path)?;
        let dur = format!("{duration_s:.3}");
        let mut cmd = self.ffmpeg_base();
        cmd.args(["-f", "lavfi", "-i"])
            .arg(format!("testsrc2=size=160x120:rate=25:duration={dur}"));
        match audio {
            FixtureAudio::None => {}
            FixtureAudio::Tone { frequency_hz } => {
                cmd.args(["-f", "lavfi", "-i"]).arg(format!(
                    "sine=frequency={frequency_hz}:sample_rate=16000:duration={dur}"
                ));
            }
            FixtureAudio::Silent => {
                cmd.args(["-f", "lavfi", "-i"])
                    .arg(format!("anullsrc=r=16000:cl=mono:d={dur}"));
            }
        }
        cmd.args(["-t", &dur])
            .args(["-c:v", &self.video_codec])
            .args(["-pix_fmt", "yuv420p"]);
        if self.video_codec == "libx264" {
            cmd.args(["-preset", "veryfast"]);
        }
        if audio != FixtureAudio::None {
            cmd.args(["-c:a", &self.audio_codec]);
        }
        cmd.arg(out_path);
        self.run_ffmpeg(&mut cmd, out_path)?;
        Ok(out_path.to_path_buf())
    }

    fn ffmpeg_base(&self) -> Command {
        let mut cmd = Command::new(&self.ffmpeg);
        cmd.args(["-hide_banner", "-nostdin", "-y", "-v", "error"]);
        cmd
    }

    fn run_ffmpeg(&self, cmd: &mut Command, out_path: &Path) -> Result<(), MediaError> {
        tracing::debug!(command = ?cmd, "ffmpeg");
        let out = run_capture(cmd, &self.ffmpeg)?;
        if !out.status.success() {
            let _ = std::fs::remove_file(out_path);
            return Err(MediaError::Tool {
                tool: self.ffmpeg.display().to_string(),
                status: out.status.to_string(),
                stderr: tail(&out.stderr),
            });
        }
        Ok(())
    }
}

fn check_tool(path: PathBuf) -> Result<PathBuf, MediaError> {
    let out = Command::new(&path)
        .arg("-version")
        .stdin(Stdio::null())
        .output()
        .map_err(|e| MediaError::ToolMissing {
            tool: path.display().to_string(),
            detail: e.to_string(),
        })?;
    if !out.status.success() {
        return Err(MediaError::ToolMissing {
            tool: path.display().to_string(),
            detail: format!("`-version` exited with {}", out.status),
        });
    }
    Ok(path)
}

fn run_capture(cmd: &mut Command, tool: &Path) -> Result<Output, MediaError> {
    cmd.stdin(Stdio::null())
        .output()
        .map_err(|e| MediaError::ToolMissing {
            tool: tool.display().to_string(),
            detail: e.to_string(),
        })
}

fn ensure_parent(path: &Path) -> Result<(), MediaError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| MediaError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

fn secs_arg(ms: Millis) -> String {
    format!("{:.3}", ms.as_secs())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn tail(stderr: &[u8]) -> String {
    const KEEP: usize = 2000;
    let text = String::from_utf8_lossy(stderr);
    let text = text.trim();
    if text.len() <= KEEP {
        return text.to_string();
    }
    let mut cut = text.len() - KEEP;
    while !text.is_char_boundary(cut) {
        cut += 1;
    }
    format!("…{}", &text[cut..])
}

fn parse_ffprobe_json(text: &str) -> Result<MediaInfo, String> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let duration_s = doc["format"]["duration"]
        .as_str()
        .and_then(|d| d.parse::<f64>().ok())
        .filter(|d| d.is_finite() && *d > 0.0)
        .ok_or_else(|| "no positive container duration".to_string())?;
    let streams = doc["streams"].as_array().cloned().unwrap_or_default();
    let video = streams.iter().find(|s| s["codec_type"] == "video");
    let has_audio = streams.iter().any(|s| s["codec_type"] == "audio");
    let dim = |key: &str| {
        video
            .and_then(|v| v[key].as_u64())
            .map(|v| v as u32)
            .unwrap_or(0)
    };
    Ok(MediaInfo {
        duration_s,
        has_audio,
        has_video: video.is_some(),
        width: dim("width"),
        height: dim("height"),
    })
}

/// Reads the input report `ffmpeg -i` prints to stderr.
fn parse_ffmpeg_banner(text: &str) -> Result<MediaInfo, String> {
    if !text.contains("Input #0") {
        let last = text.lines().last().unwrap_or("").trim();
        return Err(if last.is_empty() {
            "ffmpeg reported no input".to_string()
        } else {
            last.to_string()
        });
    }
    let duration_s = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("Duration:"))
        .and_then(|rest| rest.split(',').next())
        .and_then(|hms| parse_hms(hms.trim()))
        .filter(|d| *d > 0.0)
        .ok_or_else(|| "no positive duration in input report".to_string())?;

    let mut info = MediaInfo {
        duration_s,
        has_audio: false,
        has_video: false,
        width: 0,
        height: 0,
    };
    for line in text.lines().map(str::trim).filter(|l| l.starts_with("Stream #")) {
        if line.contains(": Audio:") {
            info.has_audio = true;
        } else if line.contains(": Video:") && !info.has_video {
            info.has_video = true;
            if let Some((w, h)) = line.split(", ").find_map(parse_resolution) {
                info.width = w;
                info.height = h;
            }
        }
    }
    Ok(info)
}

fn parse_hms(text: &str) -> Option<f64> {
    let mut parts = text.split(':');
    let h: f64 = parts.next()?.parse().ok()?;
    let m: f64 = parts.next()?.parse().ok()?;
    let s: f64 = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some(h * 3600.0 + m * 60.0 + s)
}

fn parse_resolution(field: &str) -> Option<(u32, u32)> {
    let token = field.split_whitespace().next()?;
    let (w, h) = token.split_once('x')?;
    if w.starts_with('0') {
        return None;
    }
    Some((w.parse().ok()?, h.parse().ok()?))
}

/// File name for a clip id, safe on any filesystem.
pub fn clip_file_stem(clip_id: &str) -> String {
    clip_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// One clip to materialize from its source video.
#[derive(Debug, Clone)]
pub struct CutJob {
    pub spec: ClipSpec,
    pub source: PathBuf,
    /// Also write a separate WAV track when the source has audio.
    pub extract_audio: bool,
}

/// Cuts every job into `out_dir/{video_id}/{clip_id}.mp4` with at most
/// `max_procs` subprocesses running at once. Results keep job order.
pub fn materialize(
    tools: &MediaTools,
    jobs: &[CutJob],
    out_dir: &Path,
    max_procs: usize,
) -> Vec<Result<ClipRecord, MediaError>> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_procs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        jobs.par_iter()
            .map(|job| materialize_one(tools, job, out_dir))
            .collect()
    })
}

fn materialize_one(
    tools: &MediaTools,
    job: &CutJob,
    out_dir: &Path,
) -> Result<ClipRecord, MediaError> {
    let dir = out_dir.join(clip_file_stem(&job.spec.video_id));
    let stem = clip_file_stem(&job.spec.clip_id);
    let video_path = dir.join(format!("{stem}.mp4"));
    let artifact = tools.cut(&job.source, job.spec.window, &video_path)?;
    let audio_path = if job.extract_audio && tools.probe(&artifact.video_path)?.has_audio {
        Some(tools.extract_audio(&artifact.video_path, &dir.join(format!("{stem}.wav")))?)
    } else {
        None
    };
    Ok(ClipRecord {
        spec: job.spec.clone(),
        video_path: artifact.video_path,
        audio_path,
    })
}
