//! Text notation for heating/microwave/readout protocols, and an executor
//! that runs them against the thermal, spin and magnet models.
//!
//! ```text
//! PR 3us -> { sweep w = range(2780MHz, 2890MHz, 2MHz) (
//!     PR 3us -> [ sweep tw = [-0.2, 0.3, 0.6]us (
//!         H(OD05) 10us -> wait tw -> MW w 30ns -> wait 2us -> PR 3us
//!     ) ] x 200
//! ) } x 5
//! ```
//!
//! `[ ... ] x M` sums the readouts of its `M` passes slot by slot;
//! `{ ... } x N` records every pass as its own repetition index.

mod ast;
mod canned;
mod executor;
mod parser;
mod record;
mod validate;

use thiserror::Error;

use crate::magnet::MagnetError;
use crate::nvspin::SpinError;
use crate::thermal::ThermalError;

pub use ast::{format, Operand, Power, PulseProgram, Quantity, RepeatMode, Step, SweepValues, Unit, UnitKind};
pub use canned::{canned, CannedName, CannedParams};
pub use executor::{execute, ExecOptions};
pub use parser::parse;
pub use record::{ExperimentRecord, RecordRow};
pub use validate::validate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PulseError {
    #[error("{line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("symbol `{0}` is not bound by an enclosing sweep")]
    UnboundSymbol(String),
    #[error("symbol `{0}` is bound more than once")]
    DuplicateBinding(String),
    #[error("invalid sweep symbol `{0}`")]
    InvalidSymbol(String),
    #[error("sweep `{0}` has no values")]
    EmptySweep(String),
    #[error("{context}: expected a {expected}, found a {found}")]
    KindMismatch { context: String, expected: UnitKind, found: UnitKind },
    #[error("{context}: negative duration {value} s")]
    NegativeDuration { context: String, value: f64 },
    #[error("microwave frequency must be positive, got {0} MHz")]
    NonPositiveFrequency(f64),
    #[error("repeat count must be at least 1, got {0}")]
    InvalidCount(u32),
    #[error("heating power scale must be finite and non-negative, got {0}")]
    InvalidPower(f64),
    #[error("unknown canned program `{0}`")]
    UnknownProgram(String),
    #[error("heat pulse at {start} s starts before the previous one ends at {previous_stop} s")]
    OverlappingHeat { start: f64, previous_stop: f64 },
    #[error("negative wait {wait} s reaches back beyond the {heat} s heat pulse")]
    NegativeWaitTooLong { wait: f64, heat: f64 },
    #[error("accumulating block produced {found} readouts, earlier passes produced {expected}")]
    SlotMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Thermal(#[from] ThermalError),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Magnet(#[from] MagnetError),
    #[error("record io: {0}")]
    Io(String),
}

/// Sum of all step durations times repetitions, s; equals the wall-clock
/// length of an executed record.
pub fn nominal_duration(program: &PulseProgram) -> Result<f64, PulseError> {
    fn seq(body: &[Step], env: &mut Vec<(String, f64)>) -> Result<f64, PulseError> {
        let val = |op: &Operand, env: &Vec<(String, f64)>| match op {
            Operand::Lit(q) => Ok(q.si()),
            Operand::Sym(s) => env
                .iter()
                .rev()
                .find(|(k, _)| k == s)
                .map(|(_, v)| *v)
                .ok_or_else(|| PulseError::UnboundSymbol(s.clone())),
        };
        let mut total = 0.0;
        for step in body {
            total += match step {
                Step::Pr(d) | Step::Wait(d) => val(d, env)?,
                Step::Heat { duration, .. } | Step::Mw { duration, .. } => val(duration, env)?,
                Step::Repeat { body, count, .. } => *count as f64 * seq(body, env)?,
                Step::Sweep { symbol, values, body } => {
                    let mut t = 0.0;
                    for q in values.quantities() {
                        env.push((symbol.clone(), q.si()));
                        let r = seq(body, env);
                        env.pop();
                        t += r?;
                    }
                    t
                }
            };
        }
        Ok(total)
    }
    seq(&program.body, &mut Vec::new())
}
