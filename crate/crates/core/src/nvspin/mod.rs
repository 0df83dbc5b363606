//! Phenomenological NV ensemble: resonance lines, temperature-gated
//! polarization and readout, relaxation, and synthetic measurements.

mod coherence;
mod dt;
mod ensemble;
mod spectrum;

use thiserror::Error;

pub use coherence::{coherence_trace, CoherenceKind, CoherenceSchedule, CoherenceTrace};
pub use dt::DtRelation;
pub(crate) use ensemble::{gauss_legendre, sample_poisson};
pub use ensemble::{
    lorentzian, rabi_flip, tetrahedral_axes, Branch, EnsembleState, LineShift, NvEnsemble, SpinSegment,
    TemperatureProfile, Transition,
};
pub use spectrum::{synth_spectrum, OdmrSpectrum, SpectrumMeta, SpectrumPoint, SynthConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("temperature must be positive, got {0} K")]
    InvalidTemperature(f64),
    #[error("{temperature} K lies above the D(T) calibration limit of {validity_max} K")]
    OutsideCalibration { temperature: f64, validity_max: f64 },
    #[error("invalid ensemble parameter: {0}")]
    InvalidParameter(String),
    #[error("microwave frequency must be positive, got {0} MHz")]
    InvalidFrequency(f64),
    #[error("duration must be non-negative, got {0} s")]
    InvalidDuration(f64),
    #[error("frequency grid is empty")]
    EmptyGrid,
    #[error("grid must be strictly increasing (violated at index {0})")]
    GridNotIncreasing(usize),
    #[error("unknown coherence kind `{0}`")]
    UnknownKind(String),
    #[error("spectrum io: {0}")]
    Io(String),
}
