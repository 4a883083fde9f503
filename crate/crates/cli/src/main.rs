//! `qosc` — batch harness for the quantized-consensus toolkit: closed-loop
//! simulation runs, analytical cross-checks, and parameter sweeps, all driven
//! by flat key=value config files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod checks;
mod config;
mod simulate;
mod sweep;

#[derive(Parser)]
#[command(name = "qosc", version, about = "Quantized multi-agent consensus toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop scenario and write trace/symbol/summary/manifest
    /// files.
    Simulate {
        /// Scenario config (flat key=value with [section] headers).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if absent).
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides `run.seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Config override, `section.key=value`; repeatable, applied last.
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        set: Vec<String>,
    },
    /// Check the closed-form window coefficients against direct recovery
    /// rows across orders and angles.
    #[command(name = "verify-lemma3")]
    VerifyLemma3 {
        /// Largest oscillator order to cover.
        #[arg(long = "m-max", default_value_t = 6)]
        m_max: usize,
        /// Number of angle grid points per order.
        #[arg(long = "theta-steps", default_value_t = 50)]
        theta_steps: usize,
    },
    /// Report spectral-radius expansions of the balanced closed loop against
    /// the first-order slope prediction.
    #[command(name = "spectral-check")]
    SpectralCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check matrix-power decay of the balanced closed loop against the
    /// per-pair envelope bounds.
    #[command(name = "power-bounds")]
    PowerBounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tabulate the minimal steady quantizer alphabet and its bit cost over
    /// an angle grid.
    #[command(name = "rate-table")]
    RateTable {
        /// Largest oscillator order to cover.
        #[arg(long = "m-max", default_value_t = 6)]
        m_max: usize,
    },
    /// Fan a base config out over a grid of overrides, one run per line.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Grid file: one run per line, whitespace-separated
        /// section.key=value overrides.
        #[arg(long)]
        grid: PathBuf,
        /// Output directory for run_NNN subdirectories and the merged
        /// summary.
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    // Die quietly on a closed pipe (`qosc rate-table | head`) instead of
    // panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { config, out, seed, set } => {
            simulate::command(config, out, *seed, set)
        }
        Command::VerifyLemma3 { m_max, theta_steps } => {
            checks::verify_lemma3(*m_max, *theta_steps)
        }
        Command::SpectralCheck { config } => checks::spectral_check(config),
        Command::PowerBounds { config } => checks::power_bounds(config),
        Command::RateTable { m_max } => checks::rate_table(*m_max),
        Command::Sweep { config, grid, out } => sweep::command(config, grid, out),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code.min(255) as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
