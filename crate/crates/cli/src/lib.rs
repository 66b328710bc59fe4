//! Command-line surface: `generate`, `run` and `bench`.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "trustdrift", version, about = "Drift detection and trust scoring for batched tabular streams")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic flight dataset with a JSON sidecar.
    Generate(GenerateArgs),
    /// Fit the pipeline and score every batch of the stream.
    Run(RunArgs),
    /// Compare detectors over seeded trials.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Rows to generate.
    #[arg(long)]
    pub rows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Scenario {
    /// Number of stream batches.
    #[arg(long)]
    pub k: Option<usize>,
    /// none, permutation or shift.
    #[arg(long)]
    pub drift: Option<String>,
    /// Drifted batches, e.g. `6-10` or `5,7`.
    #[arg(long)]
    pub drift_batches: Option<String>,
    /// Trust weights `a,b,c,d`; normalized to sum to 1.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub trust_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scenario: Scenario,
    /// CSV to monitor instead of generated data.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scenario: Scenario,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated detector kinds.
    #[arg(long)]
    pub detectors: Option<String>,
}

fn resolve(common: &Common, overrides: Overrides) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Overrides {
        seed: common.seed,
        rows: common.rows,
        ..overrides
    }
    .apply(&mut config)?;
    Ok(config)
}

fn scenario(s: &Scenario) -> Overrides {
    Overrides {
        k: s.k,
        drift: s.drift.clone(),
        drift_batches: s.drift_batches.clone(),
        weights: s.weights.clone(),
        trust_threshold: s.trust_threshold,
        ..Default::default()
    }
}

/// Execute a parsed command.
pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => {
            let config = resolve(&a.common, Overrides::default())?;
            for p in commands::cmd_generate(&config, &a.common.out)? {
                println!("{}", p.display());
            }
        }
        Command::Run(a) => {
            let config = resolve(
                &a.common,
                Overrides {
                    input: a.input.clone(),
                    ..scenario(&a.scenario)
                },
            )?;
            let report = commands::cmd_run(&config, &a.common.out)?;
            match report.first_flagged() {
                Some(b) => println!("first flagged batch: {b}"),
                None => println!("no batch flagged"),
            }
        }
        Command::Bench(a) => {
            let config = resolve(
                &a.common,
                Overrides {
                    trials: a.trials,
                    detectors: a.detectors.clone(),
                    ..scenario(&a.scenario)
                },
            )?;
            let (table, _) = commands::cmd_bench(&config, &a.common.out)?;
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
    }
    Ok(())
}

/// Parse `args`, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
