use std::path::PathBuf;

use ahclip_core::annotations::Diagnostic;
use ahclip_core::media::{materialize, CutJob, MediaTools};
use ahclip_core::{plan_inference_clips, plan_training_clips, ClipSpec, SegmentationPolicy};
use anyhow::{bail, Context, Result};
use tracing::{info, warn};

use crate::config::{PolicyOverrides, RunConfig};
use crate::io::{prepare_dir, timed, write_jsonl, Manifest};
use crate::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    /// Labeled clips from annotated segments (negative videos in full).
    Train,
    /// Unlabeled clips covering each whole video.
    Test,
}

#[derive(Debug, clap::Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory receiving clips, the plan and diagnostics.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "train")]
    pub split: Split,
    /// Plan file (default: `plan.jsonl` or `test_plan.jsonl` in the out dir).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyOverrides,
    /// Concurrent media subprocesses.
    #[arg(long)]
    pub max_procs: Option<usize>,
    /// Skip writing a separate WAV track per clip.
    #[arg(long)]
    pub no_audio: bool,
}

pub fn run(cfg: &RunConfig, args: PreprocessArgs) -> Result<Outcome> {
    let manifest_path = cfg.manifest(args.manifest)?;
    let out_dir = prepare_dir(&cfg.media_out_dir(args.out_dir)?)?;
    let base = match args.split {
        Split::Train => SegmentationPolicy::training(),
        Split::Test => SegmentationPolicy::inference(),
    };
    let policy = args.policy.or(cfg.segmentation).apply(base)?;
    let plan_path = args.plan.unwrap_or_else(|| {
        out_dir.join(match args.split {
            Split::Train => "plan.jsonl",
            Split::Test => "test_plan.jsonl",
        })
    });

    let manifest = Manifest::load(&manifest_path)?;
    let mut diagnostics: Vec<Diagnostic> = Vec::new();
    let mut jobs = Vec::new();

    if !manifest.annotations.is_empty() {
        let tools = MediaTools::discover(&cfg.media)?;
        timed("plan", || {
            for ann in &manifest.annotations {
                let source = manifest.media_path(ann);
                if !source.is_file() {
                    bail!("video {}: media file {} not found", ann.video_id, source.display());
                }
                let info = tools
                    .probe(&source)
                    .with_context(|| format!("video {}: probing {}", ann.video_id, source.display()))?;
                let specs: Vec<ClipSpec> = match args.split {
                    Split::Train => {
                        let valid = ann
                            .validate(info.duration())
                            .with_context(|| format!("video {}", ann.video_id))?;
                        diagnostics.extend(valid.diagnostics);
                        plan_training_clips(&valid.annotation, &policy)?
                    }
                    Split::Test => plan_inference_clips(&ann.video_id, info.duration_s, &policy)?,
                };
                jobs.extend(specs.into_iter().map(|spec| CutJob {
                    spec,
                    source: source.clone(),
                    extract_audio: !args.no_audio,
                }));
            }
            Ok(())
        })?;
        for d in &diagnostics {
            warn!(video_id = %d.video_id, code = %d.code, detail = %d.detail, "annotation diagnostic");
        }

        let max_procs = args.max_procs.unwrap_or(cfg.media.max_procs);
        let records = timed("cut", || {
            let results = materialize(&tools, &jobs, &out_dir, max_procs);
            let mut records = Vec::with_capacity(results.len());
            let mut failed = 0;
            let mut first_error = None;
            for (job, r) in jobs.iter().zip(results) {
                match r {
                    Ok(rec) => records.push(rec),
                    Err(e) => {
                        warn!(clip_id = %job.spec.clip_id, error = %e, "cut failed");
                        failed += 1;
                        first_error.get_or_insert(format!("{}: {e}", job.spec.clip_id));
                    }
                }
            }
            if let Some(e) = first_error {
                bail!("{failed} clip(s) could not be cut; first: {e}");
            }
            Ok(records)
        })?;
        write_jsonl(&records, &plan_path)?;
        let positive = records
            .iter()
            .filter(|r| r.label().is_some_and(|l| l.is_positive()))
            .count();
        info!(
            videos = manifest.annotations.len(),
            clips = records.len(),
            positive_clips = positive,
            plan = %plan_path.display(),
            "preprocess finished"
        );
    } else {
        write_jsonl::<ahclip_core::ClipRecord>(&[], &plan_path)?;
        info!(plan = %plan_path.display(), "empty manifest, wrote empty plan");
    }
    write_jsonl(&diagnostics, &out_dir.join("diagnostics.jsonl"))?;
    Ok(Outcome::Done)
}
