//! `metafolio` command-line driver.
//!
//! Exit codes: 0 ok, 1 validation findings, 2 config error, 3 data error,
//! 4 internal error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "metafolio", version, about = "Walk-forward HRP/NRP meta-portfolio backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured universe and write the report files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// -v for progress, -vv for debug detail.
        #[arg(short, action = ArgAction::Count)]
        verbose: u8,
    },
    /// Check config invariants without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic regime-switching price CSV.
    Synth {
        /// Market spec in TOML, or JSON when the extension is `.json`.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            verbose,
        } => {
            init_logging(verbose);
            commands::run(&config, seed, out).map(|_| ())
        }
        Command::Validate { config } => {
            init_logging(0);
            commands::validate(&config)
        }
        Command::Synth { spec, seed, out } => {
            init_logging(0);
            commands::synth(&spec, seed, &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code())
        }
    }
}
