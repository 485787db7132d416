use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sfloc::config::Override;

mod commands;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Eigenvalues and per-state metrics of one model.
    Spectrum,
    /// Two-parameter sweep.
    Scan,
    /// Decay-constant fit over a list of sizes.
    Scaling,
    /// Open-chain PT window and violations.
    Criterion,
    /// Boundary-determinant check, unitary scan and asymptotic solutions.
    Nonbloch,
    /// Two-level threshold tables.
    Effective,
}

#[derive(Debug, Parser)]
#[command(name = "sfloc", version, about = "Spectra and PT-breaking diagnostics for 1D non-Hermitian chains")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON model (or sweep) description.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// `KEY=VALUE`, applied to the config before use. Repeatable.
    #[arg(long = "override", value_name = "K=V")]
    pub overrides: Vec<String>,
    /// Imaginary-part cut for real/complex classification.
    #[arg(long = "tol-imag", value_name = "X")]
    pub tol_imag: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let overrides: Vec<Override> = match cli.overrides.iter().map(|s| s.parse::<Override>()).collect() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() || matches!(e, sfloc::Error::Io(_)) { 1 } else { 2 })
        }
    }
}
