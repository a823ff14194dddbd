//! `riskward`: ingest OHLCV data, backtest fixed or trained policies, check
//! reward gradients, sweep reward weights and train the policy-gradient agent.

mod commands;
mod config;
mod data;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use riskward::env::RewardMode;
use riskward::reward::RewardWeights;

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "riskward", version, about = "Risk-aware composite reward toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// OHLCV file; repeat for several files.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Comma-separated traded tickers.
    #[arg(long, value_delimiter = ',')]
    tickers: Option<Vec<String>>,
    /// Benchmark ticker (also the market proxy unless configured otherwise).
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    from: Option<NaiveDate>,
    #[arg(long)]
    to: Option<NaiveDate>,
    /// Reward weights `w1,w2,w3,w4`.
    #[arg(long)]
    weights: Option<String>,
    /// Simplex grid step for `tune`.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reward timing: `terminal` or `potential`.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory (falls back to $RISKWARD_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and merge OHLCV files, print a summary and write a canonical CSV cache.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Run one episode and write the episode log, metrics and reward breakdown.
    Backtest {
        #[command(flatten)]
        common: Common,
        /// `buy_and_hold`, `flat`, `random`, `allocator` or `checkpoint`.
        #[arg(long)]
        policy: Option<String>,
        /// Checkpoint file for `--policy checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare analytic reward gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Backtest every weight vector on the simplex grid and report the frontier.
    Tune {
        #[command(flatten)]
        common: Common,
        /// `allocator`, `buy_and_hold`, `flat`, `random` or `trained`.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Train the clipped policy-gradient agent.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<usize>,
        /// Initial policy step size.
        #[arg(long)]
        lr: Option<f64>,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    let weights = common
        .weights
        .as_deref()
        .map(RewardWeights::parse)
        .transpose()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mode = common
        .mode
        .as_deref()
        .map(str::parse::<RewardMode>)
        .transpose()
        .map_err(|e| CliError::Config(e.to_string()))?;
    cfg.apply(Overrides {
        data: common.data.clone(),
        tickers: common.tickers.clone(),
        benchmark: common.benchmark.clone(),
        from: common.from,
        to: common.to,
        weights,
        step: common.step,
        seed: common.seed,
        mode,
        out: common.out.clone(),
    });
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { common } => {
            let cfg = resolve(&common)?;
            commands::ingest(&cfg)
        }
        Command::Backtest {
            common,
            policy,
            checkpoint,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(p) = policy {
                cfg.backtest.policy = p;
            }
            if checkpoint.is_some() {
                cfg.backtest.checkpoint = checkpoint;
            }
            commands::backtest(&cfg)
        }
        Command::Gradcheck {
            common,
            instances,
            inject_fault,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(n) = instances {
                cfg.gradcheck.instances = n;
            }
            commands::gradcheck(&cfg, inject_fault.as_deref())
        }
        Command::Tune { common, policy } => {
            let mut cfg = resolve(&common)?;
            if let Some(p) = policy {
                cfg.tuner.policy = p;
            }
            commands::tune(&cfg)
        }
        Command::Train {
            common,
            iterations,
            lr,
            resume,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(n) = iterations {
                cfg.agent.iterations = n;
            }
            if let Some(lr) = lr {
                cfg.agent.learning_rate = lr;
            }
            commands::train(&cfg, resume.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("riskward: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
