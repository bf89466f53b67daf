//! Command-line front end: one subcommand per stage plus `pipeline` and
//! `config-schema`, all driven by a single JSON config file. Failures exit
//! nonzero and print a machine-readable error object to stderr.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rugwarn::config::{config_schema_json, ConfigError, RunConfig};
use rugwarn::stages::{
    run_ablate, run_evaluate, run_features, run_ingest, run_leadtime, run_patterns, run_pipeline,
    run_synth, run_train, StageError, StageOutcome,
};

#[derive(Parser)]
#[command(name = "rugwarn", version, about = "Rug-pull early-warning toolkit")]
struct Cli {
    /// Run config JSON; built-in defaults (including the default synthetic
    /// scenario) apply when omitted.
    #[arg(long, global = true, env = "RUGWARN_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true, env = "RUGWARN_SEED")]
    seed: Option<u64>,
    /// Worker thread cap; 0 picks one thread per core.
    #[arg(long, global = true, env = "RUGWARN_THREADS")]
    threads: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true, env = "RUGWARN_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic scenario into the input directory.
    Synth,
    /// Merge, dedup, order, cap, and label the input transfer CSVs.
    Ingest,
    /// Score the wash-trading patterns of every normalized token.
    Patterns,
    /// Extract one risk vector per sample into the feature table.
    Features,
    /// Train both classifiers on the train side of one stratified split.
    Train,
    /// Score the held-out test rows and replay warning lead times.
    Evaluate,
    /// Retrain the forest with each feature group removed.
    Ablate,
    /// Write the per-token warning lead times of the forest.
    Leadtime,
    /// Run every stage in order from one config.
    Pipeline,
    /// Write the JSON schema of the run config.
    ConfigSchema,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Patterns => "patterns",
            Command::Features => "features",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Ablate => "ablate",
            Command::Leadtime => "leadtime",
            Command::Pipeline => "pipeline",
            Command::ConfigSchema => "config-schema",
        }
    }
}

/// What the process reports on stderr before exiting nonzero.
struct CliFailure {
    stage: &'static str,
    kind: &'static str,
    message: String,
}

impl CliFailure {
    fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "stage": self.stage, "kind": self.kind, "message": self.message }
        })
        .to_string()
    }
}

impl From<StageError> for CliFailure {
    fn from(err: StageError) -> Self {
        CliFailure { stage: err.stage, kind: err.source.kind(), message: err.source.to_string() }
    }
}

fn config_error_kind(err: &ConfigError) -> &'static str {
    match err {
        ConfigError::Io { .. } => "missing_input",
        _ => "config_invalid",
    }
}

fn execute(cli: Cli) -> Result<StageOutcome, CliFailure> {
    let stage = cli.command.name();
    let fail = |kind: &'static str, message: String| CliFailure { stage, kind, message };

    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)
            .map_err(|e| fail(config_error_kind(&e), e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.paths.output_dir = out;
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| fail("config_invalid", format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Synth => Ok(run_synth(&config)?),
        Command::Ingest => Ok(run_ingest(&config)?),
        Command::Patterns => Ok(run_patterns(&config)?),
        Command::Features => Ok(run_features(&config)?),
        Command::Train => Ok(run_train(&config)?),
        Command::Evaluate => Ok(run_evaluate(&config)?),
        Command::Ablate => Ok(run_ablate(&config)?),
        Command::Leadtime => Ok(run_leadtime(&config)?),
        Command::Pipeline => Ok(run_pipeline(&config)?),
        Command::ConfigSchema => {
            let dir = config.paths.output_dir;
            fs::create_dir_all(&dir)
                .map_err(|e| fail("stage_failure", format!("{}: {e}", dir.display())))?;
            let path = dir.join("config.schema.json");
            fs::write(&path, config_schema_json())
                .map_err(|e| fail("stage_failure", format!("{}: {e}", path.display())))?;
            Ok(StageOutcome { artifacts: vec![path], warnings: Vec::new() })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.name();
    match execute(cli) {
        Ok(outcome) => {
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            println!("{stage}: {} artifact(s) written", outcome.artifacts.len());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            ExitCode::FAILURE
        }
    }
}
