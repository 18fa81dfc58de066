use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use concept_risk::pipeline::{run_pipeline, PipelineConfig, Stage};

/// Learned-concept Lasso-Cox risk modelling.
#[derive(Debug, Parser)]
#[command(name = "concept-risk", version)]
struct Cli {
    /// JSON pipeline configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic cohort with its ground truth.
    Synth,
    /// Split and fit preprocessing.
    Prep,
    /// Fit concept classifiers and write concept diagnostics.
    Concepts,
    /// Fit the Cox model of every configured variant.
    Fit,
    /// Evaluate every variant on the test split.
    Eval,
    /// Seasonal back-testing matrix.
    Backtest,
    /// Sankey graph of the configured variant.
    ExportSankey,
    /// Every stage, plus backtesting when configured.
    Run,
}

impl Command {
    fn stage(&self) -> Stage {
        match self {
            Command::Synth => Stage::Synth,
            Command::Prep => Stage::Prep,
            Command::Concepts => Stage::Concepts,
            Command::Fit => Stage::Fit,
            Command::Eval => Stage::Eval,
            Command::Backtest => Stage::Backtest,
            Command::ExportSankey => Stage::ExportSankey,
            Command::Run => Stage::Run,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_file(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let stage = cli.command.stage();
    log::info!("running `{stage}` into {}", cli.out.display());
    let manifest = run_pipeline(&cfg, stage, &cli.out)?;
    log::info!("wrote {} artifacts (config {})", manifest.artifacts.len(), &manifest.config_sha256[..12]);
    Ok(())
}
