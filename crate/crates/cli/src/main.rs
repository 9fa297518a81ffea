//! `ergodic` — config-driven runner for invariant-distribution simulations.
//!
//! Verbs:
//! - `run <config>`: simulate, write trace.csv / report.txt / hypotheses.csv
//!   / meta into the configured output directory
//! - `check <config>`: hypothesis and schedule report only, no simulation
//! - `replay <meta>`: rerun a previous run from its meta echo; artifacts go
//!   to `<out>_replay`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ergodic_cli::config::RunConfig;
use ergodic_cli::runner;

#[derive(Parser)]
#[command(
    name = "ergodic",
    version,
    about = "Invariant-distribution simulation runner"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured experiment and write artifacts.
    Run { config: PathBuf },
    /// Evaluate schedule conditions and hypothesis margins only.
    Check { config: PathBuf },
    /// Re-run a finished experiment from its `meta` file.
    Replay { meta: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { config } => run_path(&config, false),
        Cmd::Replay { meta } => run_path(&meta, true),
        Cmd::Check { config } => RunConfig::from_file(&config)
            .and_then(|cfg| runner::check(&cfg))
            .map(|report| {
                print!("{report}");
                ExitCode::SUCCESS
            }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_path(path: &std::path::Path, replay: bool) -> ergodic_core::Result<ExitCode> {
    let mut cfg = RunConfig::from_file(path)?;
    if replay {
        cfg.out = format!("{}_replay", cfg.out);
    }
    let artifacts = runner::run(&cfg)?;
    match artifacts.fault {
        Some(fault) => {
            eprintln!(
                "numeric fault; partial artifacts in {}: {fault}",
                artifacts.out_dir.display()
            );
            Ok(ExitCode::FAILURE)
        }
        None => {
            println!("artifacts written to {}", artifacts.out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
