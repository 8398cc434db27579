use std::path::PathBuf;

use ahclip_core::dataset::{build_sample, emit_train_config, write_jsonl, write_lines_atomic};
use ahclip_core::{ClipRecord, PromptRegistry, Strategy};
use anyhow::{Context, Result};
use tracing::info;

use crate::config::RunConfig;
use crate::io::{read_jsonl, timed};
use crate::Outcome;

#[derive(Debug, clap::Args)]
pub struct BuildDatasetArgs {
    /// Training plan written by `preprocess`.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Dataset JSONL to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub prompt: Option<String>,
    /// Prepend a system message to every conversation.
    #[arg(long)]
    pub system: Option<String>,
    /// Train configs to emit next to the dataset (repeatable).
    #[arg(long = "strategy")]
    pub strategies: Vec<Strategy>,
    /// Epochs for the full fine-tuning config (2 or 3).
    #[arg(long)]
    pub full_epochs: Option<u32>,
}

pub fn build(cfg: &RunConfig, args: BuildDatasetArgs) -> Result<Outcome> {
    let plan = match args.plan {
        Some(p) => p,
        None => cfg.media_out_dir(None)?.join("plan.jsonl"),
    };
    let out = args
        .out
        .or_else(|| cfg.dataset_out.clone())
        .context("no dataset path given (use --out or set `dataset_out`)")?;
    let registry = PromptRegistry::builtin();
    let prompt = registry.get(args.prompt.as_deref().unwrap_or(&cfg.prompt_variant))?;
    let system = args.system.as_deref().or(cfg.system_prompt.as_deref());
    let strategies = if args.strategies.is_empty() {
        cfg.strategies.clone()
    } else {
        args.strategies
    };

    let clips: Vec<ClipRecord> = read_jsonl(&plan)?;
    let samples = timed("build-dataset", || {
        clips
            .iter()
            .map(|c| build_sample(c, prompt).with_context(|| format!("clip {}", c.clip_id())))
            .collect::<Result<Vec<_>>>()
    })?;
    let written = write_jsonl(&samples, system, &out)?;
    let yes = clips
        .iter()
        .filter(|c| c.label().is_some_and(|l| l.is_positive()))
        .count();
    info!(
        samples = written,
        yes,
        no = written - yes,
        prompt = %prompt.variant_id,
        dataset = %out.display(),
        "dataset written"
    );

    let dir = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    for strategy in strategies {
        let epochs = match strategy {
            Strategy::Full => args.full_epochs,
            Strategy::Lora => None,
        };
        let config = emit_train_config(strategy, epochs)?;
        let path = dir.join(format!("train_{strategy}.cfg"));
        write_lines_atomic(config.to_kv().lines(), &path)?;
        info!(strategy = %strategy, path = %path.display(), "train config written");
    }
    Ok(Outcome::Done)
}

#[derive(Debug, clap::Args)]
pub struct EmitTrainConfigArgs {
    #[arg(long)]
    pub strategy: Strategy,
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn emit(args: EmitTrainConfigArgs) -> Result<Outcome> {
    let config = emit_train_config(args.strategy, args.epochs)?;
    match args.out {
        Some(path) => {
            write_lines_atomic(config.to_kv().lines(), &path)?;
        }
        None => crate::io::emit_stdout(&config.to_kv())?,
    }
    Ok(Outcome::Done)
}
