//! `burnin`: reproducible recycled-chip detection experiments.
//!
//! Every run is a pure function of the config file, the input files, and
//! the seed; rerunning writes byte-identical artifacts regardless of
//! thread count. Exit codes separate the failure families: 2 for
//! configuration problems, 3 for violated model or data contracts, 4 for
//! file I/O and parsing.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use burnin_core::error::Error;

mod commands;
mod config;

const EXIT_HELP: &str = "Exit codes:
  0  success
  2  configuration error (bad flag, bad or missing config value)
  3  contract violation (infeasible calibration, malformed trace, degenerate data)
  4  I/O or file parse error";

#[derive(Parser)]
#[command(
    name = "burnin",
    version,
    about = "Simulate SRAM power-on aging and evaluate recycled-chip classifiers",
    after_help = EXIT_HELP
)]
struct Cli {
    /// JSON experiment config; keys match the documented field names.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Classifier kind, overriding the config list.
    #[arg(long, global = true, value_name = "KIND")]
    classifier: Option<String>,
    /// Decision threshold T in baseline standard deviations.
    #[arg(long, global = true, value_name = "REAL")]
    threshold: Option<f64>,
    /// Minimum software bias strength for usable bits.
    #[arg(long = "strength-threshold", global = true, value_name = "REAL")]
    strength_threshold: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a device population; write snapshots, bias maps, summaries.
    Synth,
    /// Profile the configured software source into per-bit biases.
    Profile,
    /// Age the population along the schedule; write per-checkpoint summaries.
    Age,
    /// Score bias-map files against a new-device baseline and label them.
    Classify {
        /// Bias-map CSV files to audit; defaults to the baseline devices.
        inputs: Vec<PathBuf>,
    },
    /// Run the full pipeline and Monte Carlo evaluation per classifier.
    Evaluate,
    /// Standalone statistics on arbitrary inputs.
    Stats {
        /// Bias-map CSV: power-on summary with spatial autocorrelation.
        #[arg(long, value_name = "PATH")]
        bias_map: Option<PathBuf>,
        /// Plain number list, one per line: normality check.
        #[arg(long, value_name = "PATH")]
        values: Option<PathBuf>,
        /// Grid width for spatial statistics, overriding the config.
        #[arg(long, value_name = "N")]
        grid_width: Option<usize>,
        /// Run the spatial statistic on binary majority values instead of
        /// fractional biases.
        #[arg(long)]
        binary_moran: bool,
    },
}

fn run(cli: &Cli) -> burnin_core::error::Result<()> {
    let overrides = config::Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        classifier: cli.classifier.clone(),
        threshold: cli.threshold,
        strength_threshold: cli.strength_threshold,
    };
    let resolved = config::load(cli.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Synth => commands::cmd_synth(&resolved),
        Command::Profile => commands::cmd_profile(&resolved),
        Command::Age => commands::cmd_age(&resolved),
        Command::Classify { inputs } => commands::cmd_classify(&resolved, inputs),
        Command::Evaluate => commands::cmd_evaluate(&resolved),
        Command::Stats {
            bias_map,
            values,
            grid_width,
            binary_moran,
        } => commands::cmd_stats(
            &resolved,
            bias_map.as_deref(),
            values.as_deref(),
            *grid_width,
            *binary_moran,
        ),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter { .. } => 2,
        Error::Contract(_)
        | Error::Degenerate(_)
        | Error::MalformedTrace { .. }
        | Error::AmbiguousBands(_)
        | Error::CalibrationInfeasible(_) => 3,
        Error::Io { .. } | Error::Parse { .. } => 4,
    }
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes instead of panicking on
    // the next print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
