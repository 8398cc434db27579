use std::net::SocketAddr;
use std::path::PathBuf;

use ahclip_core::inference::mock::{MockServer, Scenario};
use ahclip_core::inference::{run_batch, ChatClient, InferenceOptions, MediaTransport};
use ahclip_core::{AbstainPolicy, ClipRecord, PromptRegistry};
use anyhow::{bail, Context, Result};
use tracing::{info, warn};

use crate::config::RunConfig;
use crate::io::{read_jsonl, timed, write_jsonl, Manifest};
use crate::Outcome;

#[derive(Debug, clap::Args)]
pub struct InferArgs {
    /// Inference plan written by `preprocess --split test`.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Endpoint as `model_id=base_url` (repeatable; replaces configured endpoints).
    #[arg(long = "endpoint")]
    pub endpoints: Vec<String>,
    #[arg(long)]
    pub prompt: Option<String>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Send `file://` URLs instead of inline media.
    #[arg(long)]
    pub file_urls: bool,
    /// Clip predictions JSONL (default: `predictions.jsonl` next to the plan).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Failure ledger (default: `failures.jsonl` next to the predictions).
    #[arg(long)]
    pub failures: Option<PathBuf>,
    #[arg(long)]
    pub abstain_policy: Option<AbstainPolicy>,
}

pub fn run(cfg: &RunConfig, args: InferArgs) -> Result<Outcome> {
    let plan = match args.plan {
        Some(p) => p,
        None => cfg.media_out_dir(None)?.join("test_plan.jsonl"),
    };
    let endpoints = cfg.endpoints(&args.endpoints)?;
    let registry = PromptRegistry::builtin();
    let prompt = registry
        .get(args.prompt.as_deref().unwrap_or(&cfg.prompt_variant))?
        .clone();
    let max_in_flight = args.max_in_flight.unwrap_or(cfg.max_in_flight);
    let out = args
        .out
        .unwrap_or_else(|| plan.with_file_name("predictions.jsonl"));
    let failures_path = args
        .failures
        .unwrap_or_else(|| out.with_file_name("failures.jsonl"));
    let options = InferenceOptions {
        transport: if args.file_urls {
            MediaTransport::FileUrl
        } else {
            cfg.transport
        },
        system: cfg.system_prompt.clone(),
        ..InferenceOptions::default()
    };

    let clips: Vec<ClipRecord> = read_jsonl(&plan)?;
    let client = ChatClient::new(options)?;
    let runtime = tokio::runtime::Runtime::new()?;
    let set = timed("infer", || {
        Ok(runtime.block_on(run_batch(&client, &clips, &endpoints, &prompt, max_in_flight))?)
    })?;

    let predictions: Vec<_> = set.iter().cloned().collect();
    write_jsonl(&predictions, &out)?;
    write_jsonl(&set.failures, &failures_path)?;
    for f in &set.failures {
        warn!(clip_id = %f.clip_id, model_id = %f.model_id, error = %f.error, "clip failed");
    }
    info!(
        clips = clips.len(),
        models = endpoints.len(),
        predictions = predictions.len(),
        failures = set.failures.len(),
        out = %out.display(),
        "inference finished"
    );
    let strict = args.abstain_policy.unwrap_or(cfg.abstain_policy) == AbstainPolicy::Strict;
    Ok(if strict && !set.failures.is_empty() {
        Outcome::Partial
    } else {
        Outcome::Done
    })
}

#[derive(Debug, clap::Args)]
pub struct ServeMockArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "oracle")]
    pub scenario: Option<PathBuf>,
    /// Answer every clip from this manifest's annotated segments.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:0")]
    pub addr: SocketAddr,
    /// Added latency per response.
    #[arg(long)]
    pub delay_ms: Option<u64>,
}

pub fn serve_mock(args: ServeMockArgs) -> Result<Outcome> {
    let mut scenario = match (&args.scenario, &args.oracle) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Scenario::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(path)) => Scenario::oracle(&Manifest::load(path)?.annotations),
        (None, None) => bail!("give --scenario or --oracle"),
    };
    if let Some(ms) = args.delay_ms {
        scenario.delay_ms = ms;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let server = MockServer::bind(args.addr, scenario).await?;
        crate::io::emit_stdout(&format!("{}\n", server.base_url()))?;
        info!(base_url = %server.base_url(), "mock server listening");
        server.wait().await;
        Ok(Outcome::Done)
    })
}
