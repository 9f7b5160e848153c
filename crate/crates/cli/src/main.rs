use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayopt::config::{print_config_schema, ConfigError, RunConfig};
use rayopt::pipeline::{self, PipelineError};

#[derive(Parser)]
#[command(name = "rayopt", version, about = "Volumetric semantic reconstruction with first-hit ray potentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a synthetic scene and write result.ply, metrics.json,
    /// energy_trace.csv and run.log to the output directory.
    Run {
        config: PathBuf,
        /// Field overrides such as `--scene.resolution=16`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Print every config field with its default value.
    Schema,
    /// Run with the exhaustive oracle checks enabled and report them.
    OracleCheck {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

enum Failure {
    Config(ConfigError),
    Internal(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => Failure::Config(c),
            other => Failure::Internal(other.to_string()),
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Schema => {
            print!("{}", print_config_schema());
            Ok(())
        }
        Command::Run { config, overrides } => {
            let cfg = RunConfig::load(&config, &overrides).map_err(Failure::Config)?;
            let rec = pipeline::run(&cfg)?;
            rec.write_outputs(&cfg.output.dir)?;
            print!("{}", rec.log_text());
            Ok(())
        }
        Command::OracleCheck { config, overrides } => {
            let mut cfg = RunConfig::load(&config, &overrides).map_err(Failure::Config)?;
            cfg.run.oracle_check = true;
            let rec = pipeline::run(&cfg)?;
            let summary = rec
                .metrics
                .oracle
                .as_ref()
                .ok_or_else(|| Failure::Internal("oracle summary missing".into()))?;
            println!(
                "{}",
                serde_json::to_string_pretty(summary).map_err(|e| Failure::Internal(e.to_string()))?
            );
            if summary.passed {
                Ok(())
            } else {
                Err(Failure::Internal("oracle check failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
