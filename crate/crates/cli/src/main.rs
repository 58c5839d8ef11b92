// SPDX-License-Identifier: Apache-2.0

//! `kqfc`: steady states, noise spectra and entanglement of a Kerr
//! microresonator OPO from the command line.

mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kqfc_core::{Format, Stage};

#[derive(Debug, Parser)]
#[command(
    name = "kqfc",
    version,
    about = "Kerr microresonator OPO: steady states, noise spectra and entanglement",
    arg_required_else_help = true,
    after_help = "Frequencies are read in Hz unless --rad-s is given. \
                  Configuration layers apply in order: --preset, --config, --set, then the pump flags."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(flatten)]
    pub pump: PumpArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Parameter preset: anomalous or normal.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// TOML file with [resonator] and [pump] tables.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `q0=2e6` or `pump.mode_l=6`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Write output here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Output encoding: csv or json.
    #[arg(long, global = true, default_value = "csv", value_parser = parse_format)]
    pub format: Format,
    /// Read frequency flags in rad/s instead of Hz.
    #[arg(long, global = true)]
    pub rad_s: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Hysteresis stage to analyse: I, II, III or IV.
    #[arg(long, global = true, default_value = "IV", value_parser = parse_stage)]
    pub stage: Stage,
}

#[derive(Debug, Args)]
pub struct PumpArgs {
    /// Cold-cavity pump detuning σ_c (Hz, or rad/s with --rad-s).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub sigma_c: Option<f64>,
    /// Signal/idler mode pair ±l.
    #[arg(long, global = true)]
    pub mode_l: Option<u32>,
    /// Incident pump amplitude, s^-1/2.
    #[arg(long, global = true, conflicts_with = "p_in")]
    pub a_in: Option<f64>,
    /// Pump power in the bus waveguide, W.
    #[arg(long, global = true)]
    pub p_in: Option<f64>,
    /// Intrinsic quality factor.
    #[arg(long, global = true)]
    pub q0: Option<f64>,
    /// Coupling ratio κ_ex/κ0.
    #[arg(long, global = true)]
    pub r: Option<f64>,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct FreqArgs {
    /// Lowest sideband frequency (Hz, or rad/s with --rad-s). Default grid when omitted.
    #[arg(long, requires = "f_max")]
    pub f_min: Option<f64>,
    /// Highest sideband frequency.
    #[arg(long, requires = "f_min")]
    pub f_max: Option<f64>,
    /// Number of log-spaced frequencies.
    #[arg(long, default_value_t = 200)]
    pub f_points: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hysteresis sweep of the pump amplitude from 0 to the configured A_in.
    Steady {
        /// Grid points including both ends.
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Parametric threshold power of the configured mode pair.
    Threshold {
        /// Highest power searched, W.
        #[arg(long, default_value_t = 10.0)]
        ceiling: f64,
        /// Relative bracket width at which bisection stops.
        #[arg(long, default_value_t = 1e-6)]
        rel_tol: f64,
    },
    /// Output noise spectral matrix S_a(ω).
    Spectrum {
        #[command(flatten)]
        freq: FreqArgs,
    },
    /// Angle-optimized Duan criterion C_s at each frequency.
    Duan {
        #[command(flatten)]
        freq: FreqArgs,
    },
    /// C_s over coupling ratio r and frequency.
    MapRf {
        #[arg(long, default_value_t = 0.8)]
        r_min: f64,
        #[arg(long, default_value_t = 1.6)]
        r_max: f64,
        #[arg(long, default_value_t = 9)]
        r_points: usize,
        #[command(flatten)]
        freq: FreqArgs,
    },
    /// C_s over frequency and readout angle φ = θ_s − θ_i.
    MapAngle {
        /// Angles spanning [−π, π].
        #[arg(long, default_value_t = 73)]
        phi_points: usize,
        #[command(flatten)]
        freq: FreqArgs,
    },
    /// 1/e entanglement bandwidth around the C_s extremum.
    Bandwidth {
        #[command(flatten)]
        freq: FreqArgs,
    },
    /// Run a parameter sweep described by a plan file.
    Sweep {
        #[arg(long, value_name = "FILE")]
        plan: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Compute(m) => write!(f, "computation error: {m}"),
        }
    }
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse::<Format>().map_err(|e| e.to_string())
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse::<Stage>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kqfc: {e}");
            ExitCode::from(e.code())
        }
    }
}
