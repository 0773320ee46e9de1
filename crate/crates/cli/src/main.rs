//! Command-line orchestrator for the damped-polariton laboratory.
//!
//! Subcommands: `modes`, `evolve`, `continuum`, `verify`. All take the same
//! flags; physical parameters live in an INI-style configuration file.
//! Exit codes: 0 success, 1 check failure, 2 configuration error,
//! 3 numerical error.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;
use output::{OutputDir, Provenance};

#[derive(Parser)]
#[command(
    name = "polariton",
    version,
    about = "Normal modes, dissipation and \
fluctuations of the electromagnetic field in an absorptive dielectric"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the INI-style configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Random seed; overrides `[run] seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Omit the timestamp header line so outputs are byte-reproducible.
    #[arg(long)]
    no_timestamp: bool,
    /// Multiply every check tolerance by this factor (verify only).
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the mode table: frequencies, eigenvectors, spectral counts.
    Modes(CommonArgs),
    /// Evolve an initial field state and export time series.
    Evolve(CommonArgs),
    /// Continuum-reservoir analysis: dielectric function, decay, fluctuations.
    Continuum(CommonArgs),
    /// Run the verification suite and write a report.
    Verify(CommonArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let args = match &cli.command {
        Command::Modes(a) | Command::Evolve(a) | Command::Continuum(a) | Command::Verify(a) => a,
    };
    if !(args.tolerance_scale.is_finite() && args.tolerance_scale > 0.0) {
        return Err(CliError::Config(
            "--tolerance-scale must be a positive finite number".into(),
        ));
    }
    let config_bytes = std::fs::read(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let text = String::from_utf8(config_bytes.clone())
        .map_err(|_| CliError::Config("configuration file is not valid UTF-8".into()))?;
    let mut run_config = config::parse_config(&text)?;
    if args.seed.is_some() {
        run_config.run.seed = args.seed;
    }
    let provenance = Provenance::new(&config_bytes, run_config.run.seed, !args.no_timestamp);
    let out = OutputDir::new(&args.out, provenance)?;
    match &cli.command {
        Command::Modes(_) => commands::cmd_modes(&run_config, &out),
        Command::Evolve(_) => commands::cmd_evolve(&run_config, &out),
        Command::Continuum(_) => commands::cmd_continuum(&run_config, &out),
        Command::Verify(_) => commands::cmd_verify(
            &run_config,
            run_config.run.seed.unwrap_or(0),
            args.tolerance_scale,
            &out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            // Machine-readable error record on stderr for scripting.
            eprintln!(
                "{}",
                serde_json::json!({ "error": err.to_string(), "exit_code": err.exit_code() })
            );
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
