use std::path::PathBuf;

use ahclip_core::media::{FixtureAudio, MediaTools};
use ahclip_core::{Label, Millis, TimeInterval, VideoAnnotation};
use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracing::info;

use crate::config::RunConfig;
use crate::io::{prepare_dir, timed};
use crate::Outcome;

#[derive(Debug, clap::Args)]
pub struct GenFixturesArgs {
    /// Directory receiving `manifest.jsonl` and `media/`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub videos: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shortest video in seconds.
    #[arg(long, default_value_t = 3.0)]
    pub min_duration: f64,
    /// Longest video in seconds.
    #[arg(long, default_value_t = 14.0)]
    pub max_duration: f64,
    /// Render videos without an audio track.
    #[arg(long)]
    pub no_audio: bool,
}

// Durations are whole 25 fps frames so the rendered length is exact.
const FRAME_MS: i64 = 40;

/// Synthetic annotations: half the videos positive, each positive video
/// carrying one or two disjoint segments.
pub fn synthesize(n: usize, min_ms: i64, max_ms: i64, seed: u64) -> Vec<VideoAnnotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> = (0..n).map(|i| Label::from(i % 2 == 0)).collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let frames = rng.random_range(min_ms / FRAME_MS..=max_ms / FRAME_MS);
            let duration = frames * FRAME_MS;
            let segments = if label.is_positive() {
                random_segments(&mut rng, duration)
            } else {
                Vec::new()
            };
            VideoAnnotation {
                video_id: format!("fx{i:03}"),
                media_path: format!("media/fx{i:03}.mp4"),
                global_label: label,
                segments,
                duration: Some(Millis(duration)),
            }
        })
        .collect()
}

fn random_segments(rng: &mut ChaCha8Rng, duration: i64) -> Vec<TimeInterval> {
    let parts = if duration >= 8_000 && rng.random_bool(0.5) { 2 } else { 1 };
    let span = duration / parts;
    (0..parts)
        .map(|k| {
            let lo = k * span;
            let len = rng.random_range(span.min(500)..=span.min(7_000));
            let start = lo + rng.random_range(0..=span - len);
            TimeInterval::from_millis(start / 10 * 10, (start + len) / 10 * 10)
                .expect("segment lies inside its slot")
        })
        .collect()
}

pub fn run(cfg: &RunConfig, args: GenFixturesArgs) -> Result<Outcome> {
    if !(args.min_duration > 0.0 && args.min_duration <= args.max_duration) {
        bail!("need 0 < --min-duration <= --max-duration");
    }
    let min_ms = Millis::from_secs(args.min_duration)?.as_i64().max(FRAME_MS);
    let max_ms = Millis::from_secs(args.max_duration)?.as_i64();
    let out_dir = prepare_dir(&args.out_dir)?;
    let annotations = synthesize(args.videos, min_ms, max_ms, args.seed.unwrap_or(cfg.seed));
    let tools = MediaTools::discover(&cfg.media)?;
    let audio = FixtureAudio::from(!args.no_audio);

    timed("gen-fixtures", || {
        let workers = cfg.media.max_procs.max(1);
        let chunk = annotations.len().div_ceil(workers).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> = annotations
                .chunks(chunk)
                .map(|part| {
                    let tools = &tools;
                    let out_dir = &out_dir;
                    s.spawn(move || -> Result<()> {
                        for ann in part {
                            let secs = ann.duration.expect("synthesized").as_secs();
                            tools
                                .gen_fixture(secs, audio, &out_dir.join(&ann.media_path))
                                .with_context(|| format!("rendering {}", ann.video_id))?;
                        }
                        Ok(())
                    })
                })
                .collect();
            handles
                .into_iter()
                .try_for_each(|h| h.join().expect("fixture worker panicked"))
        })
    })?;

    let manifest = out_dir.join("manifest.jsonl");
    ahclip_core::dataset::write_lines_atomic(
        annotations.iter().map(VideoAnnotation::to_manifest_line),
        &manifest,
    )?;
    info!(
        videos = annotations.len(),
        positive = annotations.iter().filter(|a| a.global_label.is_positive()).count(),
        manifest = %manifest.display(),
        "fixtures written"
    );
    Ok(Outcome::Done)
}
