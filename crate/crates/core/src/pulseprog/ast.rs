use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Ns,
    Us,
    Ms,
    KHz,
    MHz,
    GHz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitKind {
    Time,
    Frequency,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitKind::Time => "duration",
            UnitKind::Frequency => "frequency",
        })
    }
}

impl Unit {
    pub fn kind(self) -> UnitKind {
        match self {
            Unit::Ns | Unit::Us | Unit::Ms => UnitKind::Time,
            _ => UnitKind::Frequency,
        }
    }

    /// Multiplier to seconds (time) or MHz (frequency).
    pub fn scale(self) -> f64 {
        match self {
            Unit::Ns => 1e-9,
            Unit::Us => 1e-6,
            Unit::Ms => 1e-3,
            Unit::KHz => 1e-3,
            Unit::MHz => 1.0,
            Unit::GHz => 1e3,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Ns => "ns",
            Unit::Us => "us",
            Unit::Ms => "ms",
            Unit::KHz => "kHz",
            Unit::MHz => "MHz",
            Unit::GHz => "GHz",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "ns" => Unit::Ns,
            "us" | "µs" | "μs" => Unit::Us,
            "ms" => Unit::Ms,
            "kHz" | "khz" => Unit::KHz,
            "MHz" | "mhz" => Unit::MHz,
            "GHz" | "ghz" => Unit::GHz,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }

    pub fn us(value: f64) -> Self {
        Self::new(value, Unit::Us)
    }

    pub fn ns(value: f64) -> Self {
        Self::new(value, Unit::Ns)
    }

    pub fn mhz(value: f64) -> Self {
        Self::new(value, Unit::MHz)
    }

    /// Seconds for durations, MHz for frequencies.
    pub fn si(&self) -> f64 {
        self.value * self.unit.scale()
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.value, self.unit.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Lit(Quantity),
    Sym(String),
}

impl From<Quantity> for Operand {
    fn from(q: Quantity) -> Self {
        Operand::Lit(q)
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Lit(q) => fmt::Display::fmt(q, f),
            Operand::Sym(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Power {
    /// Attenuator setting, `10^(−od/10)` of full power.
    Od(u8),
    Scale(f64),
}

impl Power {
    pub fn scale(&self) -> f64 {
        match self {
            Power::Od(od) => crate::thermal::od_power_scale(*od),
            Power::Scale(s) => *s,
        }
    }
}

impl fmt::Display for Power {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Power::Od(od) => write!(f, "OD{od:02}"),
            Power::Scale(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepeatMode {
    /// `[ ... ] x M`: readouts summed slot by slot.
    Accumulate,
    /// `{ ... } x N`: every pass recorded separately.
    Separate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepValues {
    List(Vec<Quantity>),
    /// Inclusive of `stop` when it lies on the grid.
    Range {
        start: Quantity,
        stop: Quantity,
        step: Quantity,
    },
}

impl SweepValues {
    pub fn quantities(&self) -> Vec<Quantity> {
        match self {
            SweepValues::List(v) => v.clone(),
            SweepValues::Range { start, stop, step } => {
                let (a, b, h) = (start.si(), stop.si(), step.si());
                if !(h > 0.0) || b < a {
                    return Vec::new();
                }
                let n = ((b - a) / h + 1e-9).floor() as usize;
                (0..=n).map(|i| Quantity::new((a + h * i as f64) / start.unit.scale(), start.unit)).collect()
            }
        }
    }

    pub fn len(&self) -> usize {
        self.quantities().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> Option<UnitKind> {
        match self {
            SweepValues::List(v) => v.first().map(|q| q.unit.kind()),
            SweepValues::Range { start, .. } => Some(start.unit.kind()),
        }
    }
}

impl fmt::Display for SweepValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValues::List(v) => {
                f.write_str("[")?;
                for (i, q) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    fmt::Display::fmt(q, f)?;
                }
                f.write_str("]")
            }
            SweepValues::Range { start, stop, step } => {
                write!(f, "range({start}, {stop}, {step})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Step {
    /// Polarize/readout laser pulse.
    Pr(Operand),
    Heat {
        power: Power,
        duration: Operand,
    },
    /// May be negative directly after a heat step.
    Wait(Operand),
    Mw {
        frequency: Operand,
        duration: Operand,
    },
    Repeat {
        body: Vec<Step>,
        count: u32,
        mode: RepeatMode,
    },
    Sweep {
        symbol: String,
        values: SweepValues,
        body: Vec<Step>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseProgram {
    pub body: Vec<Step>,
}

impl PulseProgram {
    pub fn new(body: Vec<Step>) -> Self {
        Self { body }
    }
}

fn write_seq(f: &mut fmt::Formatter<'_>, body: &[Step]) -> fmt::Result {
    for (i, s) in body.iter().enumerate() {
        if i > 0 {
            f.write_str(" -> ")?;
        }
        fmt::Display::fmt(s, f)?;
    }
    Ok(())
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Pr(d) => write!(f, "PR {d}"),
            Step::Heat { power, duration } => write!(f, "H({power}) {duration}"),
            Step::Wait(d) => write!(f, "wait {d}"),
            Step::Mw { frequency, duration } => write!(f, "MW {frequency} {duration}"),
            Step::Repeat { body, count, mode } => {
                let (open, close) = match mode {
                    RepeatMode::Accumulate => ("[", "]"),
                    RepeatMode::Separate => ("{", "}"),
                };
                f.write_str(open)?;
                if !body.is_empty() {
                    f.write_str(" ")?;
                    write_seq(f, body)?;
                    f.write_str(" ")?;
                }
                write!(f, "{close} x {count}")
            }
            Step::Sweep { symbol, values, body } => {
                write!(f, "sweep {symbol} = {values} (")?;
                if !body.is_empty() {
                    f.write_str(" ")?;
                    write_seq(f, body)?;
                    f.write_str(" ")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for PulseProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_seq(f, &self.body)
    }
}

/// Canonical text of `program`.
pub fn format(program: &PulseProgram) -> String {
    program.to_string()
}
