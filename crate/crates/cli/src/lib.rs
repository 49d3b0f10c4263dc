//! Command-line front end wiring the pipeline, the synthetic world, and
//! the evaluation harness into reproducible experiment runs.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod errors;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::eval::{EvalInputs, EvalMode};
use commands::predict::PredictPolicy;
use commands::train::StageSelector;
use config::RunConfig;
use errors::CliResult;

#[derive(Parser)]
#[command(
    name = "ssdal",
    version,
    about = "Semi-supervised attribute learning and person re-identification evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset CSVs.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train pipeline stages and write checkpoints plus a report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// 1, 2, 3, all, or baseline-fc.
        #[arg(long)]
        stage: StageSelector,
    },
    /// Binarize model outputs for a features CSV.
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        policy: PredictPolicy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model: cmc, map, or attr.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: EvalMode,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        probe: Option<PathBuf>,
        #[arg(long)]
        gallery: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        attributes: Option<PathBuf>,
    },
    /// Verify analytic gradients of every registered loss.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// synth, train all stages, then every eval mode; one combined report.
    RunAll {
        #[arg(long)]
        config: PathBuf,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { config } => {
            let cfg = RunConfig::load(&config)?;
            commands::synth::run(&cfg)
        }
        Command::Train { config, stage } => {
            let cfg = RunConfig::load(&config)?;
            commands::train::run(&cfg, stage)
        }
        Command::Predict {
            config,
            model,
            features,
            policy,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            commands::predict::run(&cfg, &model, &features, policy, &out)
        }
        Command::Eval {
            config,
            mode,
            model,
            probe,
            gallery,
            features,
            attributes,
        } => {
            let cfg = RunConfig::load(&config)?;
            let inputs = EvalInputs {
                model: &model,
                probe: probe.as_deref(),
                gallery: gallery.as_deref(),
                features: features.as_deref(),
                attributes: attributes.as_deref(),
            };
            commands::eval::run(&cfg, mode, &inputs)
        }
        Command::Gradcheck { config } => {
            let cfg = RunConfig::load(&config)?;
            commands::gradcheck::run(&cfg)
        }
        Command::RunAll { config } => {
            let cfg = RunConfig::load(&config)?;
            commands::run_all::run(&cfg)
        }
    }
}
