//! Command-line front end: simulate the bundled figure presets, fit the
//! resulting data and run the extrapolation-thermometry calibration.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hitodmr_core::analysis::AnalysisError;
use hitodmr_core::magnet::MagnetError;
use hitodmr_core::nvspin::SpinError;
use hitodmr_core::pulseprog::PulseError;
use hitodmr_core::thermal::ThermalError;

pub mod calibrate;
pub mod config;
pub mod fit;
pub mod simulate;
pub mod tables;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::TooFewMinima { .. } => CliError::NonConvergence(e.to_string()),
            AnalysisError::Spin(s) => s.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SpinError> for CliError {
    fn from(e: SpinError) -> Self {
        match e {
            SpinError::Io(m) => CliError::Io(m),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PulseError> for CliError {
    fn from(e: PulseError) -> Self {
        match e {
            PulseError::Io(m) => CliError::Io(m),
            PulseError::Spin(s) => s.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ThermalError> for CliError {
    fn from(e: ThermalError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MagnetError> for CliError {
    fn from(e: MagnetError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "hitodmr", version, about = "Pulsed-heating ODMR simulator and analysis suite")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an experiment and write CSV data with JSON metadata.
    Simulate(SimulateArgs),
    /// Fit a model to data files and print the result as JSON.
    Fit(FitArgs),
    /// Extrapolate peak temperatures from spectra recorded at several delays.
    Calibrate(CalibrateArgs),
    /// Shot-noise-limited field and temperature sensitivities.
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimTarget {
    Odmr,
    Cooling,
    T1,
    Rabi,
    CurieRounds,
    Heatmap,
    Mechanism,
    Program,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub target: SimTarget,
    /// Bundled or `HITODMR_PRESET_DIR` preset; defaults to the target's figure.
    #[arg(long)]
    pub preset: Option<String>,
    /// Configuration file used instead of a preset.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repetitions per point; 0 writes noise-free expected counts.
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pulse program file (target `program`).
    #[arg(long)]
    pub program: Option<PathBuf>,
    /// Stationary temperature at full heating power, K (target `program`).
    #[arg(long)]
    pub stationary: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitTarget {
    Lorentzian,
    Cooling,
    T1,
    Rabi,
    Echo,
    Fid,
    Curie,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub target: FitTarget,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Also print a human-readable table to stderr.
    #[arg(long)]
    pub report: bool,
    /// Exit 0 even when the fit did not converge.
    #[arg(long)]
    pub allow_nonconverged: bool,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of dips (lorentzian).
    #[arg(long, default_value_t = 1)]
    pub dips: usize,
    /// Initial FWHM, MHz (lorentzian).
    #[arg(long)]
    pub width: Option<f64>,
    /// Environment temperature, K (cooling).
    #[arg(long, default_value_t = 296.0)]
    pub te: f64,
    /// Microwave pulse length, ns; its midpoint dates each spectrum (cooling).
    #[arg(long, default_value_t = 30.0)]
    pub mw_duration_ns: f64,
    /// Fit without the low-temperature saturation term (t1).
    #[arg(long)]
    pub no_saturation: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Spectrum files; files in the same directory form one row.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 296.0)]
    pub te: f64,
    #[arg(long, default_value_t = 30.0)]
    pub mw_duration_ns: f64,
    /// Spectrum label holding the delay `t_w` in seconds.
    #[arg(long, default_value = "tw")]
    pub wait_label: String,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    /// Photon count rate, counts/s.
    #[arg(long)]
    pub count_rate: f64,
    /// ODMR linewidth (FWHM), MHz.
    #[arg(long)]
    pub linewidth: f64,
    #[arg(long)]
    pub contrast: f64,
    /// `dD/dT` in kHz/K; enables the temperature sensitivity.
    #[arg(long, allow_negative_numbers = true)]
    pub slope_khz_per_k: Option<f64>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate::cmd_simulate(&a),
        Command::Fit(a) => fit::cmd_fit(&a),
        Command::Calibrate(a) => calibrate::cmd_calibrate(&a),
        Command::Sensitivity(a) => cmd_sensitivity(&a),
    }
}

pub fn cmd_sensitivity(a: &SensitivityArgs) -> Result<(), CliError> {
    use hitodmr_core::analysis::{sensitivity_b, sensitivity_t, SensitivityInputs};
    let inputs = SensitivityInputs {
        count_rate: a.count_rate,
        linewidth: a.linewidth,
        contrast: a.contrast,
        slope: a.slope_khz_per_k.map(|s| s * 1e-3),
    };
    let mut out = serde_json::Map::new();
    out.insert("eta_b_t_per_rthz".into(), sensitivity_b(&inputs)?.into());
    if inputs.slope.is_some() {
        out.insert("eta_t_k_per_rthz".into(), sensitivity_t(&inputs)?.into());
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
