//! Reference integrator and random program generator shared by the test
//! targets.
#![allow(dead_code)]

use hitodmr_core::pulseprog::{Operand, Power, PulseProgram, Quantity, RepeatMode, Step, SweepValues, Unit, UnitKind};
use hitodmr_core::thermal::{HeatInterval, HeatSchedule, ThermalModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Classical RK4 on `dT/dt = W·s(t) − γ(T − T_E)`, stepping piecewise
/// between switching instants so the forcing is smooth on every step.
pub fn rk4_reference(m: &ThermalModel, sched: &HeatSchedule, t_end: f64, t0: f64) -> f64 {
    let mut edges = vec![0.0, t_end];
    let on: Vec<HeatInterval> = sched.effective(m.aom_delay).collect();
    for iv in &on {
        edges.extend([iv.start, iv.stop]);
    }
    edges.retain(|&e| (0.0..=t_end).contains(&e));
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let power = |t: f64| on.iter().find(|iv| t >= iv.start && t < iv.stop).map_or(0.0, |iv| iv.power_scale);
    let rhs = |temp: f64, s: f64| m.heating_rate * s - m.cooling_rate * (temp - m.environment_temperature);

    let mut temp = t0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let s = power(0.5 * (a + b));
        let steps = ((b - a) * m.cooling_rate * 200.0).ceil().max(4.0) as usize;
        let h = (b - a) / steps as f64;
        for _ in 0..steps {
            let k1 = rhs(temp, s);
            let k2 = rhs(temp + 0.5 * h * k1, s);
            let k3 = rhs(temp + 0.5 * h * k2, s);
            let k4 = rhs(temp + h * k3, s);
            temp += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    temp
}

pub fn random_case(rng: &mut ChaCha8Rng) -> (ThermalModel, HeatSchedule, f64, f64) {
    let tau = rng.random_range(0.3e-6..5e-6);
    let model = ThermalModel {
        heating_rate: rng.random_range(0.0..2e9),
        cooling_rate: 1.0 / tau,
        environment_temperature: rng.random_range(250.0..350.0),
        aom_delay: rng.random_range(0.0..400e-9),
        propagation_speed: 1.0,
    };
    let mut intervals = Vec::new();
    let mut cursor = 0.0;
    for _ in 0..rng.random_range(0..4) {
        let start = cursor + rng.random_range(0.0..3e-6);
        let stop = start + rng.random_range(50e-9..8e-6);
        intervals.push(HeatInterval { start, stop, power_scale: rng.random_range(0.0..1.0) });
        cursor = stop;
    }
    let t_end = cursor + rng.random_range(0.1e-6..6e-6);
    let t0 = rng.random_range(250.0..900.0);
    (model, HeatSchedule::new(intervals).unwrap(), t_end, t0)
}

/// Random well-formed programs: every symbol is bound by an enclosing sweep
/// of the right kind, durations are non-negative and negative waits only
/// follow a heat step.
pub struct Gen {
    rng: ChaCha8Rng,
    next_symbol: usize,
    negative_waits: bool,
}

impl Gen {
    fn value(&mut self) -> f64 {
        match self.rng.random_range(0..4) {
            0 => self.rng.random_range(0..200) as f64,
            1 => self.rng.random_range(0..2000) as f64 / 10.0,
            2 => self.rng.random_range(0.0..100.0),
            _ => self.rng.random_range(0.0..1.0),
        }
    }

    fn time(&mut self) -> Quantity {
        let unit = [Unit::Ns, Unit::Us, Unit::Ms][self.rng.random_range(0..3)];
        let v = self.value();
        // Keep programs short enough to execute.
        Quantity::new(if unit == Unit::Ms { v * 1e-3 } else { v }, unit)
    }

    fn frequency(&mut self) -> Quantity {
        match self.rng.random_range(0..3) {
            0 => Quantity::new(self.rng.random_range(2700.0..3000.0), Unit::MHz),
            1 => Quantity::new(self.rng.random_range(2.7..3.0), Unit::GHz),
            _ => Quantity::new(self.rng.random_range(2_700_000.0..3_000_000.0), Unit::KHz),
        }
    }

    fn operand(&mut self, kind: UnitKind, scope: &[(String, UnitKind)]) -> Operand {
        let bound: Vec<&String> = scope.iter().filter(|(_, k)| *k == kind).map(|(s, _)| s).collect();
        if !bound.is_empty() && self.rng.random_bool(0.4) {
            return Operand::Sym(bound[self.rng.random_range(0..bound.len())].clone());
        }
        Operand::Lit(match kind {
            UnitKind::Time => self.time(),
            UnitKind::Frequency => {
                let f = self.frequency();
                if f.si() > 0.0 {
                    f
                } else {
                    Quantity::mhz(2870.0)
                }
            }
        })
    }

    fn sweep_values(&mut self, kind: UnitKind) -> SweepValues {
        let n = self.rng.random_range(1..4);
        if self.rng.random_bool(0.5) {
            let list = (0..n)
                .map(|_| match kind {
                    UnitKind::Time => self.time(),
                    UnitKind::Frequency => self.frequency(),
                })
                .collect();
            SweepValues::List(list)
        } else {
            let (start, step) = match kind {
                UnitKind::Time => (Quantity::us(self.rng.random_range(0..20) as f64 / 4.0), Quantity::ns(250.0)),
                UnitKind::Frequency => (Quantity::mhz(self.rng.random_range(2800..2900) as f64), Quantity::mhz(2.5)),
            };
            let stop = Quantity::new(start.value + step.si() / start.unit.scale() * (n - 1) as f64, start.unit);
            SweepValues::Range { start, stop, step }
        }
    }

    fn seq(&mut self, depth: usize, scope: &mut Vec<(String, UnitKind)>) -> Vec<Step> {
        let len = self.rng.random_range(if depth == 0 { 1 } else { 0 }..5);
        let mut body = Vec::with_capacity(len);
        for _ in 0..len {
            let after_heat = matches!(body.last(), Some(Step::Heat { .. }));
            let pick = self.rng.random_range(0..if depth < 3 { 7 } else { 5 });
            body.push(match pick {
                0 => Step::Pr(self.operand(UnitKind::Time, scope)),
                1 => {
                    let power = if self.rng.random_bool(0.5) {
                        Power::Od(self.rng.random_range(0..20))
                    } else {
                        Power::Scale(self.rng.random_range(0..100) as f64 / 100.0)
                    };
                    Step::Heat { power, duration: self.operand(UnitKind::Time, scope) }
                }
                2 if after_heat && self.negative_waits && self.rng.random_bool(0.5) => {
                    Step::Wait(Operand::Lit(Quantity::us(-(self.rng.random_range(1..10) as f64) / 100.0)))
                }
                2 => Step::Wait(self.operand(UnitKind::Time, scope)),
                3 | 4 => Step::Mw {
                    frequency: self.operand(UnitKind::Frequency, scope),
                    duration: self.operand(UnitKind::Time, scope),
                },
                5 => {
                    let mode = if self.rng.random_bool(0.5) { RepeatMode::Accumulate } else { RepeatMode::Separate };
                    Step::Repeat { body: self.seq(depth + 1, scope), count: self.rng.random_range(1..4), mode }
                }
                _ => {
                    let kind = if self.rng.random_bool(0.5) { UnitKind::Time } else { UnitKind::Frequency };
                    let symbol =
                        format!("{}{}", ["tw", "w", "tau_", "f"][self.rng.random_range(0..4)], self.next_symbol);
                    self.next_symbol += 1;
                    let values = self.sweep_values(kind);
                    scope.push((symbol.clone(), kind));
                    let inner = self.seq(depth + 1, scope);
                    scope.pop();
                    Step::Sweep { symbol, values, body: inner }
                }
            });
        }
        body
    }

    pub fn program(&mut self) -> PulseProgram {
        self.next_symbol = 0;
        PulseProgram::new(self.seq(0, &mut Vec::new()))
    }
}

pub fn generator(seed: u64, negative_waits: bool) -> Gen {
    Gen { rng: ChaCha8Rng::seed_from_u64(seed), next_symbol: 0, negative_waits }
}
