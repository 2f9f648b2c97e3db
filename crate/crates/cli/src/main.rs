mod commands;
mod error;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use seqmine_core::data::Split;

use crate::error::CliError;
use crate::spec::{CommonArgs, RunSpec};

/// Multivariate sequence classification with a BiLSTM encoder and
/// multi-scale windowed attention.
#[derive(Debug, Parser)]
#[command(name = "seqmine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoint, history and test report.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Retrain and evaluate at each sequence length.
    SweepLength {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated lengths.
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<usize>,
    },
    /// Retrain a single-scale model at each odd window length.
    SweepWindow {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated odd window lengths.
        #[arg(long, value_delimiter = ',')]
        windows: Vec<usize>,
    },
    /// Write the synthetic motif dataset as `.ts` files.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Dump attention energies and weights for one sample.
    InspectAttention {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Train { common } => commands::cmd_train(&RunSpec::load(&common)?),
        Command::Eval { common, checkpoint } => {
            commands::cmd_eval(&RunSpec::load(&common)?, &checkpoint)
        }
        Command::SweepLength { common, lengths } => {
            let spec = RunSpec::load(&common)?;
            commands::cmd_sweep_length(&spec, &commands::length_grid(&spec, &lengths))
        }
        Command::SweepWindow { common, windows } => {
            let spec = RunSpec::load(&common)?;
            commands::cmd_sweep_window(&spec, &commands::window_grid(&spec, &windows))
        }
        Command::Synth { common } => commands::cmd_synth(&RunSpec::load(&common)?),
        Command::InspectAttention {
            common,
            checkpoint,
            index,
            split,
        } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            commands::cmd_inspect_attention(&RunSpec::load(&common)?, &checkpoint, split, index)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                log::info!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
