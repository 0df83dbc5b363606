use std::collections::{HashMap, HashSet};

use super::ast::{Operand, PulseProgram, Step, UnitKind};
use super::parser::is_keyword;
use super::PulseError;

struct Binding {
    kind: UnitKind,
    min: f64,
}

struct Checker {
    seen: HashSet<String>,
    scope: HashMap<String, Binding>,
}

fn step_name(step: &Step) -> &'static str {
    match step {
        Step::Pr(_) => "PR",
        Step::Heat { .. } => "H",
        Step::Wait(_) => "wait",
        Step::Mw { .. } => "MW",
        Step::Repeat { .. } => "repeat",
        Step::Sweep { .. } => "sweep",
    }
}

impl Checker {
    /// Kind check plus the smallest value the operand can take.
    fn operand(&self, op: &Operand, want: UnitKind, context: &str) -> Result<f64, PulseError> {
        match op {
            Operand::Lit(q) => {
                if q.unit.kind() != want {
                    return Err(PulseError::KindMismatch {
                        context: context.to_string(),
                        expected: want,
                        found: q.unit.kind(),
                    });
                }
                Ok(q.si())
            }
            Operand::Sym(s) => {
                let b = self.scope.get(s).ok_or_else(|| PulseError::UnboundSymbol(s.clone()))?;
                if b.kind != want {
                    return Err(PulseError::KindMismatch {
                        context: format!("{context} `{s}`"),
                        expected: want,
                        found: b.kind,
                    });
                }
                Ok(b.min)
            }
        }
    }

    fn duration(&self, op: &Operand, context: &str) -> Result<(), PulseError> {
        let min = self.operand(op, UnitKind::Time, context)?;
        if min < 0.0 {
            return Err(PulseError::NegativeDuration { context: context.to_string(), value: min });
        }
        Ok(())
    }

    fn sequence(&mut self, body: &[Step]) -> Result<(), PulseError> {
        let mut prev: Option<&Step> = None;
        for step in body {
            match step {
                Step::Pr(d) => self.duration(d, "PR duration")?,
                Step::Heat { power, duration } => {
                    let s = power.scale();
                    if !(s >= 0.0 && s.is_finite()) {
                        return Err(PulseError::InvalidPower(s));
                    }
                    self.duration(duration, "heat duration")?;
                }
                Step::Wait(d) => {
                    let after_heat = matches!(prev, Some(Step::Heat { .. }));
                    let min = self.operand(d, UnitKind::Time, "wait")?;
                    if min < 0.0 && !after_heat {
                        return Err(PulseError::NegativeDuration {
                            context: format!(
                                "wait (negative waits must directly follow a heat step, not {})",
                                prev.map_or("the start of a block", step_name)
                            ),
                            value: min,
                        });
                    }
                }
                Step::Mw { frequency, duration } => {
                    let f = self.operand(frequency, UnitKind::Frequency, "MW frequency")?;
                    if !(f > 0.0) {
                        return Err(PulseError::NonPositiveFrequency(f));
                    }
                    self.duration(duration, "MW duration")?;
                }
                Step::Repeat { body, count, .. } => {
                    if *count == 0 {
                        return Err(PulseError::InvalidCount(*count));
                    }
                    self.sequence(body)?;
                }
                Step::Sweep { symbol, values, body } => {
                    if is_keyword(symbol)
                        || symbol.is_empty()
                        || !symbol.chars().all(|c| c.is_alphanumeric() || c == '_')
                        || symbol.chars().next().is_some_and(|c| c.is_numeric())
                    {
                        return Err(PulseError::InvalidSymbol(symbol.clone()));
                    }
                    if !self.seen.insert(symbol.clone()) {
                        return Err(PulseError::DuplicateBinding(symbol.clone()));
                    }
                    let qs = values.quantities();
                    let Some(first) = qs.first() else {
                        return Err(PulseError::EmptySweep(symbol.clone()));
                    };
                    let kind = first.unit.kind();
                    if let Some(q) = qs.iter().find(|q| q.unit.kind() != kind) {
                        return Err(PulseError::KindMismatch {
                            context: format!("sweep `{symbol}`"),
                            expected: kind,
                            found: q.unit.kind(),
                        });
                    }
                    let min = qs.iter().map(|q| q.si()).fold(f64::INFINITY, f64::min);
                    if qs.iter().any(|q| !q.value.is_finite()) {
                        return Err(PulseError::InvalidSymbol(symbol.clone()));
                    }
                    self.scope.insert(symbol.clone(), Binding { kind, min });
                    let r = self.sequence(body);
                    self.scope.remove(symbol);
                    r?;
                }
            }
            prev = Some(step);
        }
        Ok(())
    }
}

/// Static checks: symbol binding and kinds, non-negative durations, and the
/// placement of negative waits.
pub fn validate(program: &PulseProgram) -> Result<(), PulseError> {
    let mut c = Checker { seen: HashSet::new(), scope: HashMap::new() };
    c.sequence(&program.body)
}
