//! `epor`: batch front end for calibration, pricing, hedging, shock reports
//! and Monte-Carlo cross-checks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use epor_core::Error;

#[derive(Debug, Parser)]
#[command(name = "epor", version, about = "Value and hedge the relocation prepayment option of a fixed-rate mortgage")]
struct Cli {
    /// TOML configuration laid over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// bullet_baseline, linear_baseline or actuarial.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Overrides every random seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit activity moments, the OU model and the logistic intensity.
    Calibrate {
        /// CSV `month,h_frac,p_frac[,exposures]`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Value the option over the strike sweep.
    Price,
    /// Build a hedge strategy.
    Hedge,
    /// Shock the curve under a hedge strategy.
    Shock {
        /// Strategy CSV written by `hedge`.
        #[arg(long)]
        strategy: Option<PathBuf>,
    },
    /// Compare the quadrature price and the swaption formula with Monte Carlo.
    OracleCheck,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Calibration(String),
    #[error("{0}")]
    Optimizer(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Calibration(_) => 3,
            CliError::Optimizer(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NoConvergence { .. } | Error::Separation | Error::NotMeanReverting(_) => CliError::Calibration(e.to_string()),
            Error::DegenerateInstruments | Error::EigenFailure => CliError::Optimizer(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let mut cfg = config::load(cli.preset.as_deref(), cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.reseed(s);
    }
    std::fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Calibrate { data } => commands::calibrate(&cfg, data, &cli.out),
        Command::Price => commands::price(&cfg, &cli.out),
        Command::Hedge => commands::hedge(&cfg, &cli.out),
        Command::Shock { strategy } => commands::shock(&cfg, strategy, &cli.out),
        Command::OracleCheck => commands::oracle_check(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("epor: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
