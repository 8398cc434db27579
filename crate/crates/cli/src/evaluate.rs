use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use ahclip_core::evaluation::{
    aggregate_model, evaluate, simulate_ensemble, vote_videos, ClipOutcome, EvaluationInput,
    SimulationConfig,
};
use ahclip_core::inference::FailureRecord;
use ahclip_core::{
    AbstainPolicy, ClipPrediction, ClipRecord, ClipSpec, Label, TiePolicy, VideoPrediction,
};
use anyhow::{bail, Result};
use tracing::{info, warn};

use crate::config::RunConfig;
use crate::io::{emit_stdout, read_jsonl, read_jsonl_opt, timed, write_json, write_jsonl, Manifest};
use crate::Outcome;

#[derive(Debug, clap::Args)]
pub struct PredictionInputs {
    /// Inference plan the predictions were made on.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Failure ledger (default: `failures.jsonl` next to the predictions).
    #[arg(long)]
    pub failures: Option<PathBuf>,
    #[arg(long)]
    pub abstain_policy: Option<AbstainPolicy>,
}

struct Loaded {
    clips: Vec<ClipSpec>,
    predictions: Vec<ClipPrediction>,
    failures: Vec<FailureRecord>,
}

impl PredictionInputs {
    fn load(&self) -> Result<Loaded> {
        let clips: Vec<ClipRecord> = read_jsonl(&self.plan)?;
        let failures_path = self
            .failures
            .clone()
            .unwrap_or_else(|| self.predictions.with_file_name("failures.jsonl"));
        Ok(Loaded {
            clips: clips.into_iter().map(|c| c.spec).collect(),
            predictions: read_jsonl(&self.predictions)?,
            failures: read_jsonl_opt(&failures_path)?,
        })
    }
}

#[derive(Debug, clap::Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub inputs: PredictionInputs,
    /// Per-model video predictions JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn aggregate(cfg: &RunConfig, args: AggregateArgs) -> Result<Outcome> {
    let policy = args.inputs.abstain_policy.unwrap_or(cfg.abstain_policy);
    let loaded = args.inputs.load()?;
    let mut models: Vec<&str> = loaded
        .predictions
        .iter()
        .map(|p| p.model_id.as_str())
        .chain(loaded.failures.iter().map(|f| f.model_id.as_str()))
        .collect();
    models.sort_unstable();
    models.dedup();
    if models.is_empty() {
        bail!("no predictions or failures to aggregate");
    }

    let mut out = Vec::new();
    let mut partial = false;
    for model in models {
        let outcomes = outcomes_for(model, &loaded);
        let agg = aggregate_model(
            model,
            loaded
                .clips
                .iter()
                .zip(&outcomes)
                .map(|(c, o)| (c.video_id.as_str(), c.clip_id.as_str(), o)),
            policy,
        );
        for r in &agg.rejected {
            warn!(video_id = %r.video_id, model_id = %r.model_id, reason = %r.reason, "video rejected");
        }
        partial |= !agg.rejected.is_empty();
        info!(
            model_id = model,
            videos = agg.videos.len(),
            abstained_clips = agg.abstained_clips,
            failed_clips = agg.failed_clips,
            "model aggregated"
        );
        out.extend(agg.videos.into_values());
    }
    write_jsonl(&out, &args.out)?;
    Ok(if partial { Outcome::Partial } else { Outcome::Done })
}

fn outcomes_for(model: &str, loaded: &Loaded) -> Vec<ClipOutcome> {
    let preds: HashMap<&str, &ClipPrediction> = loaded
        .predictions
        .iter()
        .filter(|p| p.model_id == model)
        .map(|p| (p.clip_id.as_str(), p))
        .collect();
    let fails: HashMap<&str, &FailureRecord> = loaded
        .failures
        .iter()
        .filter(|f| f.model_id == model)
        .map(|f| (f.clip_id.as_str(), f))
        .collect();
    loaded
        .clips
        .iter()
        .map(|c| match (preds.get(c.clip_id.as_str()), fails.get(c.clip_id.as_str())) {
            (Some(p), _) => ClipOutcome::Verdict(p.verdict),
            (None, Some(f)) => ClipOutcome::Failed(f.error.clone()),
            (None, None) => ClipOutcome::Failed("no prediction recorded".into()),
        })
        .collect()
}

#[derive(Debug, clap::Args)]
pub struct VoteArgs {
    /// Per-model video predictions written by `aggregate`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub tie_policy: Option<TiePolicy>,
    /// Ensemble predictions JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn vote(cfg: &RunConfig, args: VoteArgs) -> Result<Outcome> {
    let tie = args.tie_policy.unwrap_or(cfg.tie_policy);
    let rows: Vec<VideoPrediction> = read_jsonl(&args.input)?;
    let mut per_model: BTreeMap<String, BTreeMap<String, VideoPrediction>> = BTreeMap::new();
    for row in rows {
        let slot = per_model.entry(row.model_id.clone()).or_default();
        if slot.insert(row.video_id.clone(), row.clone()).is_some() {
            bail!("duplicate prediction for video {} by {}", row.video_id, row.model_id);
        }
    }
    let (fused, incomplete) = vote_videos(&per_model, tie)?;
    for id in &incomplete {
        warn!(video_id = %id, "video lacks a prediction from some model, not voted");
    }
    let fused: Vec<_> = fused.into_values().collect();
    write_jsonl(&fused, &args.out)?;
    info!(models = per_model.len(), videos = fused.len(), tie_policy = %tie, "vote finished");
    Ok(if incomplete.is_empty() {
        Outcome::Done
    } else {
        Outcome::Partial
    })
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub inputs: PredictionInputs,
    /// Manifest holding the ground-truth video labels.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub tie_policy: Option<TiePolicy>,
    /// Report JSON (the table always goes to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_evaluate(cfg: &RunConfig, args: EvaluateArgs) -> Result<Outcome> {
    let manifest = Manifest::load(&cfg.manifest(args.manifest)?)?;
    let truth: BTreeMap<String, Label> = manifest
        .annotations
        .iter()
        .map(|a| (a.video_id.clone(), a.global_label))
        .collect();
    let abstain_policy = args.inputs.abstain_policy.unwrap_or(cfg.abstain_policy);
    let tie_policy = args.tie_policy.unwrap_or(cfg.tie_policy);
    let loaded = args.inputs.load()?;
    let report = timed("evaluate", || {
        Ok(evaluate(&EvaluationInput {
            clips: &loaded.clips,
            predictions: &loaded.predictions,
            failures: &loaded.failures,
            ground_truth: &truth,
            abstain_policy,
            tie_policy,
        })?)
    })?;
    emit_stdout(&report.render_table())?;
    if let Some(out) = &args.out {
        write_json(&report, out)?;
    }
    for row in &report.rows {
        info!(
            model_id = %row.model_id,
            accuracy = row.metrics.accuracy,
            precision = row.metrics.precision,
            recall = row.metrics.recall,
            f1 = row.metrics.f1,
            "scored"
        );
    }
    Ok(if abstain_policy == AbstainPolicy::Strict && report.is_partial() {
        Outcome::Partial
    } else {
        Outcome::Done
    })
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Per-model accuracy (repeatable or comma separated).
    #[arg(long = "accuracy", value_delimiter = ',', required = true)]
    pub accuracies: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub videos: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Share of positive videos.
    #[arg(long, default_value_t = 0.5)]
    pub prevalence: f64,
    #[arg(long)]
    pub tie_policy: Option<TiePolicy>,
    /// Also write the result JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate(cfg: &RunConfig, args: SimulateArgs) -> Result<Outcome> {
    let config = SimulationConfig {
        prevalence: args.prevalence,
        tie_policy: args.tie_policy.unwrap_or(cfg.tie_policy),
        ..SimulationConfig::new(args.accuracies, args.videos, args.seed.unwrap_or(cfg.seed))
    };
    let result = timed("simulate", || Ok(simulate_ensemble(&config)?))?;
    emit_stdout(&format!("{}\n", serde_json::to_string_pretty(&result)?))?;
    if let Some(out) = &args.out {
        write_json(&result, out)?;
    }
    Ok(Outcome::Done)
}
