//! `ahclip`: ambivalence/hesitancy clip pipeline.
//!
//! Exit codes: 0 on success, 1 on a fatal error, 2 when a strict-mode run
//! finished with failed clips or rejected videos.

mod config;
mod dataset;
mod evaluate;
mod fixtures;
mod infer;
mod io;
mod preprocess;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing::error;
use tracing_subscriber::EnvFilter;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "ahclip", version, about = "Clip-level A/H recognition pipeline")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "AHCLIP_CONFIG")]
    config: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Log debug (-v) or trace (-vv) events.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Human-readable logs instead of JSON lines.
    #[arg(long, global = true)]
    plain_logs: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the manifest, plan clips and cut them with ffmpeg.
    Preprocess(preprocess::PreprocessArgs),
    /// Write the instruction dataset and train configs from a plan.
    BuildDataset(dataset::BuildDatasetArgs),
    /// Print the hyperparameters for one fine-tuning strategy.
    EmitTrainConfig(dataset::EmitTrainConfigArgs),
    /// Query every endpoint for every clip of a plan.
    Infer(infer::InferArgs),
    /// Max-aggregate clip predictions into per-model video predictions.
    Aggregate(evaluate::AggregateArgs),
    /// Majority-vote per-model video predictions.
    Vote(evaluate::VoteArgs),
    /// Aggregate, vote and score against the manifest labels.
    Evaluate(evaluate::EvaluateArgs),
    /// Monte Carlo majority-vote accuracy for independent models.
    SimulateEnsemble(evaluate::SimulateArgs),
    /// Render a synthetic annotated corpus.
    GenFixtures(fixtures::GenFixturesArgs),
    /// Run the scripted chat-completions mock.
    #[command(hide = true)]
    ServeMock(infer::ServeMockArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Finished, but strict mode saw failures.
    Partial,
}

fn init_logging(cli: &Cli) {
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_env("AHCLIP_LOG").unwrap_or_else(|_| EnvFilter::new(level));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal());
    if cli.plain_logs {
        builder.init();
    } else {
        builder.json().flatten_event(true).init();
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Preprocess(a) => preprocess::run(&cfg, a),
        Command::BuildDataset(a) => dataset::build(&cfg, a),
        Command::EmitTrainConfig(a) => dataset::emit(a),
        Command::Infer(a) => infer::run(&cfg, a),
        Command::Aggregate(a) => evaluate::aggregate(&cfg, a),
        Command::Vote(a) => evaluate::vote(&cfg, a),
        Command::Evaluate(a) => evaluate::run_evaluate(&cfg, a),
        Command::SimulateEnsemble(a) => evaluate::simulate(&cfg, a),
        Command::GenFixtures(a) => fixtures::run(&cfg, a),
        Command::ServeMock(a) => infer::serve_mock(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            error!(error = %format!("{e:#}"), "fatal");
            ExitCode::from(1)
        }
    }
}
