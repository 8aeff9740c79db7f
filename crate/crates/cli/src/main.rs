//! `fockfilter` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fockfilter::qubits::Handedness;
use fockfilter::tomography::Intensity;

#[derive(Parser, Debug)]
#[command(
    name = "fockfilter",
    version,
    about = "Fock-state filter simulation and two-qubit tomography"
)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Output format. Curves default to CSV, everything else to JSON.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate A, P, Q and ideal visibility against splitter reflectivity.
    FilterCurves(FilterCurvesArgs),
    /// Simulate and fit two- and four-fold delay scans.
    DipScan(DipScanArgs),
    /// Run the heralded circuit and draw tomography counts.
    Simulate(SimulateArgs),
    /// Maximum-likelihood reconstruction with bootstrap error bars.
    Tomography(TomographyArgs),
    /// Fidelity, tangle and entropy of a stored density matrix.
    Metrics(MetricsArgs),
}

#[derive(Args, Debug)]
pub struct FilterCurvesArgs {
    /// Photon numbers to tabulate.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    pub n: Vec<u32>,
    /// Number of evenly spaced reflectivities in [0, 1].
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Args, Debug)]
pub struct DipScanArgs {
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    /// Scan length, mm.
    #[arg(long, default_value_t = 1.0)]
    pub span_mm: f64,
    /// Gaussian width of the rate dip, mm.
    #[arg(long, default_value_t = 0.08)]
    pub width_mm: f64,
    /// Integration time per point, s.
    #[arg(long, default_value_t = 1890.0)]
    pub integration_s: f64,
    /// Filter splitter reflectivity.
    #[arg(long, default_value_t = 0.5)]
    pub r: f64,
    /// Peak temporal overlap of signal and ancilla.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Two-fold rate far from the dip, background included, Hz.
    #[arg(long, default_value_t = 830.8)]
    pub two_fold_rate: f64,
    /// Two-fold counts that do not interfere, Hz.
    #[arg(long, default_value_t = 0.0)]
    pub two_fold_background: f64,
    #[arg(long, default_value_t = -20.0)]
    pub two_fold_slope: f64,
    /// Four-fold rate far from the dip, Hz.
    #[arg(long, default_value_t = 0.12)]
    pub four_fold_rate: f64,
    #[arg(long, default_value_t = 0.06)]
    pub four_fold_slope: f64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Signal polarization angle, rad.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub r: f64,
    /// Counts per unit exposure for a setting of unit probability.
    #[arg(long, default_value_t = 1000.0)]
    pub rate: f64,
    /// Flat background counts per setting per unit exposure.
    #[arg(long, default_value_t = 0.0)]
    pub background: f64,
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f64,
    /// Fit rate and background to a fixture name or counts file instead.
    #[arg(long, conflicts_with_all = ["rate", "background"])]
    pub calibrate_to: Option<String>,
    #[arg(long, value_enum, default_value_t = HandednessArg::MinusI)]
    pub handedness: HandednessArg,
    /// Also write the simulated state here.
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TomographyArgs {
    /// Shipped count set.
    #[arg(long, value_parser = ["filter_off", "filter_on"], conflicts_with = "counts", required_unless_present = "counts")]
    pub fixture: Option<String>,
    /// Counts file.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Bootstrap trials; 0 skips the bootstrap.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = HandednessArg::MinusI)]
    pub handedness: HandednessArg,
    #[arg(long, value_enum, default_value_t = IntensityArg::Free)]
    pub intensity: IntensityArg,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// JSON file with `rho_re` and `rho_im`.
    #[arg(long)]
    pub rho: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HandednessArg {
    MinusI,
    PlusI,
}

impl From<HandednessArg> for Handedness {
    fn from(h: HandednessArg) -> Self {
        match h {
            HandednessArg::MinusI => Handedness::MinusI,
            HandednessArg::PlusI => Handedness::PlusI,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum IntensityArg {
    Free,
    HvSubset,
}

impl From<IntensityArg> for Intensity {
    fn from(i: IntensityArg) -> Self {
        match i {
            IntensityArg::Free => Intensity::Free,
            IntensityArg::HvSubset => Intensity::HvSubset,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
