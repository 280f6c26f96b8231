use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use hapto_cli::{exit, OutputOptions};
use hapto_core::config::RunConfig;

/// Chemotaxis-haptotaxis simulator with invariant monitors.
///
/// Exit codes: 0 success, 1 usage or config error, 2 invariant failure,
/// 3 suspected blow-up, 4 solver failure, 5 I/O error.
/// Sweeps use HAPTO_WORKERS worker threads (default: all cores).
#[derive(Parser)]
#[command(name = "hapto", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its outputs.
    Run {
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write binary snapshots.
        #[arg(long)]
        binary: bool,
    },
    /// Independent runs over a list of diffusion exponents m.
    SweepM {
        config: PathBuf,
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Regularization sweep over a nonincreasing list of epsilons.
    SweepEps {
        config: PathBuf,
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Exponent of the integral of u^theta series; must exceed max(1, m/2).
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Steady-state check and operator self-tests on the configured grid.
    Verify {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load(path: &std::path::Path, output: Option<PathBuf>) -> Result<RunConfig, i32> {
    match RunConfig::load(path) {
        Ok(mut c) => {
            if let Some(o) = output {
                c.output = o;
            }
            Ok(c)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Err(match e {
                hapto_core::Error::Io(_) => exit::IO,
                _ => exit::USAGE,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { 0 });
        }
    };
    let mut log = std::io::stderr();
    let code = match cli.command {
        Command::Run {
            config,
            output,
            binary,
        } => load(&config, output).map(|c| hapto_cli::run(&c, OutputOptions { binary }, &mut log)),
        Command::SweepM {
            config,
            values,
            output,
        } => load(&config, output)
            .map(|c| hapto_cli::sweep_m(&c, &values, OutputOptions::default(), &mut log)),
        Command::SweepEps {
            config,
            values,
            theta,
            output,
        } => load(&config, output)
            .map(|c| hapto_cli::sweep_eps(&c, &values, theta, OutputOptions::default(), &mut log)),
        Command::Verify { config, output } => {
            load(&config, output).map(|c| hapto_cli::verify(&c, &mut log))
        }
    };
    ExitCode::from(code.unwrap_or_else(|c| c) as u8)
}
