//! Batch front end: TOML experiment configurations in, CSV tables with
//! metadata sidecars and a hashed manifest out.

mod config;
mod output;
mod report;
mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ExperimentConfig, ExperimentKind, MuRange};
pub use output::{fmt_f64, read_manifest, sha256_hex, MANIFEST};
pub use report::report;
pub use run::{error_kind, exit_code, run, run_from_path, RunSummary, BIFURCATION_HEADER};

#[derive(Debug, Parser)]
#[command(name = "plaque-bif", version, about = "Radial steady states and bifurcation points of the plaque model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid size for every solve; overrides `grid` in the config.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Summarize a finished run directory.
    Report { dir: PathBuf },
}

/// Runs the parsed command and returns the process exit status. Errors go to
/// stderr as `error[<kind>]: <message>`.
pub fn main_with(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run { config, out, grid, seed, jobs } => {
            if let Some(k) = jobs {
                if k == 0 {
                    eprintln!("error[config]: --jobs must be positive");
                    return 2;
                }
                // Fails only if a pool already exists, which is harmless.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            run_from_path(&config, out, grid, seed).map(|s| {
                for (f, h) in &s.files {
                    println!("{h}  {}", s.dir.join(f).display());
                }
            })
        }
        Command::Report { dir } => report(&dir).map(|text| print!("{text}")),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", error_kind(&e));
            exit_code(&e)
        }
    }
}
