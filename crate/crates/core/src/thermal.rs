//! Lumped thermal model of a nanodiamond on a laser-heated carbon film.
//!
//! The nanodiamond temperature obeys `dT/dt = W·s(t) − γ(T − T_E)` where
//! `s(t)` is the piecewise-constant power scale of the heating schedule.
//! Every segment is solved in closed form, so evaluating the temperature at
//! any time is exact up to floating point rounding.
//!
//! The optical switch latency (`aom_delay`) delays the onset of every heating
//! interval; the end of the interval is unaffected.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermalError {
    #[error("invalid thermal parameter: {0}")]
    InvalidParameter(String),
    #[error("heating interval {index} is malformed (start {start} s, stop {stop} s, scale {scale})")]
    InvalidInterval { index: usize, start: f64, stop: f64, scale: f64 },
    #[error("heating intervals {first} and {second} overlap")]
    OverlappingIntervals { first: usize, second: usize },
    #[error("time must be non-negative, got {0} s")]
    NegativeTime(f64),
    #[error("time grid is empty")]
    EmptyGrid,
    #[error("time grid must be strictly increasing (violated at index {0})")]
    GridNotIncreasing(usize),
    #[error("distance must be non-negative, got {0} m")]
    NegativeDistance(f64),
    #[error("trace io: {0}")]
    Io(String),
}

/// Lumped heating/cooling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalModel<F = f64> {
    /// Heating rate `W` at unit power scale, K/s.
    pub heating_rate: F,
    /// Cooling rate `γ`, 1/s.
    pub cooling_rate: F,
    /// Environment temperature `T_E`, K.
    pub environment_temperature: F,
    /// Latency between the heating trigger and the optical response, s.
    pub aom_delay: F,
    /// Speed of the heat front along the carbon film, m/s.
    pub propagation_speed: F,
}

impl<F: Scalar> Default for ThermalModel<F> {
    /// Mid-range film: `γ⁻¹ = 1.3 µs`, `T_E = 296 K`, 200 ns switch latency.
    fn default() -> Self {
        Self {
            heating_rate: F::zero(),
            cooling_rate: F::one() / F::lit(1.3e-6),
            environment_temperature: F::lit(296.0),
            aom_delay: F::lit(200e-9),
            propagation_speed: F::one(),
        }
    }
}

impl<F: Scalar> ThermalModel<F> {
    pub fn new(
        heating_rate: F,
        cooling_rate: F,
        environment_temperature: F,
        aom_delay: F,
        propagation_speed: F,
    ) -> Result<Self, ThermalError> {
        let model = Self { heating_rate, cooling_rate, environment_temperature, aom_delay, propagation_speed };
        model.validate()?;
        Ok(model)
    }

    /// Defaults used for focus-scan delay measurements (500 ns latency).
    pub fn scan_defaults() -> Self {
        Self { aom_delay: F::lit(500e-9), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ThermalError> {
        let bad = |what: &str, v: F| Err(ThermalError::InvalidParameter(format!("{what} = {}", v.to_f64_lossy())));
        if !(self.cooling_rate > F::zero()) || !self.cooling_rate.is_finite() {
            return bad("cooling_rate", self.cooling_rate);
        }
        if !(self.heating_rate >= F::zero()) || !self.heating_rate.is_finite() {
            return bad("heating_rate", self.heating_rate);
        }
        if !(self.environment_temperature > F::zero()) {
            return bad("environment_temperature", self.environment_temperature);
        }
        if !(self.aom_delay >= F::zero()) {
            return bad("aom_delay", self.aom_delay);
        }
        if !(self.propagation_speed > F::zero()) {
            return bad("propagation_speed", self.propagation_speed);
        }
        Ok(())
    }

    pub fn cooling_time(&self) -> F {
        F::one() / self.cooling_rate
    }

    pub fn with_cooling_time(mut self, tau: F) -> Self {
        self.cooling_rate = F::one() / tau;
        self
    }

    pub fn with_heating_rate(mut self, w: F) -> Self {
        self.heating_rate = w;
        self
    }

    /// Stationary temperature `T_E + W·s/γ` for a sustained power scale `s`.
    pub fn stationary_temperature(&self, power_scale: F) -> F {
        self.environment_temperature + self.heating_rate * power_scale / self.cooling_rate
    }

    /// Heating rate for which a sustained unit power scale reaches `target`.
    pub fn heating_rate_for_stationary(&self, target: F) -> F {
        (target - self.environment_temperature) * self.cooling_rate
    }

    /// Heating rate for which a single pulse of `duration` (starting at `T_E`,
    /// delayed onset included) ends exactly at `peak` with unit power scale.
    pub fn heating_rate_for_peak(&self, peak: F, duration: F) -> F {
        let on = (duration - self.aom_delay).max(F::zero());
        let fill = F::one() - (-self.cooling_rate * on).exp();
        if fill <= F::zero() {
            return F::infinity();
        }
        (peak - self.environment_temperature) * self.cooling_rate / fill
    }

    /// Closed-form evolution over `dt` at constant power scale.
    pub fn advance(&self, temperature: F, dt: F, power_scale: F) -> F {
        let target = self.stationary_temperature(power_scale);
        let offset = temperature - target;
        if offset == F::zero() {
            return target;
        }
        target + offset * (-self.cooling_rate * dt).exp()
    }

    /// Temperature at time `t` given the temperature `t0` at time zero.
    pub fn temperature_at(&self, schedule: &HeatSchedule<F>, t: F, t0: F) -> Result<F, ThermalError> {
        self.validate()?;
        if !(t >= F::zero()) {
            return Err(ThermalError::NegativeTime(t.to_f64_lossy()));
        }
        Ok(self.evaluate(schedule, t, t0))
    }

    pub(crate) fn evaluate(&self, schedule: &HeatSchedule<F>, t: F, t0: F) -> F {
        let mut now = F::zero();
        let mut temp = t0;
        for iv in schedule.effective(self.aom_delay) {
            if t <= iv.start {
                break;
            }
            temp = self.advance(temp, iv.start - now, F::zero());
            now = iv.start;
            if t <= iv.stop {
                return self.advance(temp, t - now, iv.power_scale);
            }
            temp = self.advance(temp, iv.stop - now, iv.power_scale);
            now = iv.stop;
        }
        self.advance(temp, t - now, F::zero())
    }

    pub fn temperature_trace(
        &self,
        schedule: &HeatSchedule<F>,
        grid: &[F],
        t0: F,
    ) -> Result<TemperatureTrace<F>, ThermalError> {
        self.validate()?;
        if grid.is_empty() {
            return Err(ThermalError::EmptyGrid);
        }
        for (i, w) in grid.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(ThermalError::GridNotIncreasing(i + 1));
            }
        }
        if !(grid[0] >= F::zero()) {
            return Err(ThermalError::NegativeTime(grid[0].to_f64_lossy()));
        }
        let samples = grid.iter().map(|&t| (t, self.evaluate(schedule, t, t0))).collect();
        Ok(TemperatureTrace { samples })
    }

    /// Delay before heat from a focus `distance` away reaches the nanodiamond.
    pub fn propagation_delay(&self, distance: F) -> Result<F, ThermalError> {
        if !(distance >= F::zero()) {
            return Err(ThermalError::NegativeDistance(distance.to_f64_lossy()));
        }
        Ok(self.aom_delay + distance / self.propagation_speed)
    }

    /// Stationary temperature of the nanodiamond for every focus position.
    ///
    /// `coupling` gives the absorption/coupling scale of a focus at `(x, y)`;
    /// it multiplies the heating rate.
    pub fn heat_map(
        &self,
        grid: &FocusGrid<F>,
        nd_position: (F, F),
        coupling: impl Fn(F, F) -> F,
    ) -> Result<HeatMap<F>, ThermalError> {
        self.validate()?;
        if grid.xs.is_empty() || grid.ys.is_empty() {
            return Err(ThermalError::EmptyGrid);
        }
        let mut temperature = Vec::with_capacity(grid.xs.len() * grid.ys.len());
        let mut delay = Vec::with_capacity(temperature.capacity());
        for &y in &grid.ys {
            for &x in &grid.xs {
                let scale = coupling(x, y);
                if !(scale >= F::zero()) {
                    return Err(ThermalError::InvalidParameter(format!(
                        "coupling scale at ({}, {}) = {}",
                        x.to_f64_lossy(),
                        y.to_f64_lossy(),
                        scale.to_f64_lossy()
                    )));
                }
                temperature.push(self.stationary_temperature(scale));
                let d = ((x - nd_position.0).powi(2) + (y - nd_position.1).powi(2)).sqrt();
                delay.push(self.propagation_delay(d)?);
            }
        }
        Ok(HeatMap { xs: grid.xs.clone(), ys: grid.ys.clone(), temperature, delay })
    }
}

/// Power scale of an optical-depth attenuator label (`OD05` → `10^-0.5`).
pub fn od_power_scale<F: Scalar>(od: u8) -> F {
    F::lit(10f64.powf(-(od as f64) / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatInterval<F = f64> {
    pub start: F,
    pub stop: F,
    pub power_scale: F,
}

/// Ordered, non-overlapping heating intervals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HeatSchedule<F = f64> {
    intervals: Vec<HeatInterval<F>>,
}

impl<F: Scalar> HeatSchedule<F> {
    pub fn new(intervals: Vec<HeatInterval<F>>) -> Result<Self, ThermalError> {
        for (index, iv) in intervals.iter().enumerate() {
            if !(iv.start >= F::zero()) || !(iv.stop > iv.start) || !(iv.power_scale >= F::zero()) {
                return Err(ThermalError::InvalidInterval {
                    index,
                    start: iv.start.to_f64_lossy(),
                    stop: iv.stop.to_f64_lossy(),
                    scale: iv.power_scale.to_f64_lossy(),
                });
            }
        }
        for (i, w) in intervals.windows(2).enumerate() {
            if w[1].start < w[0].stop {
                return Err(ThermalError::OverlappingIntervals { first: i, second: i + 1 });
            }
        }
        Ok(Self { intervals })
    }

    pub fn off() -> Self {
        Self { intervals: Vec::new() }
    }

    /// A single pulse `[start, stop)` at `power_scale`.
    pub fn pulse(start: F, stop: F, power_scale: F) -> Result<Self, ThermalError> {
        Self::new(vec![HeatInterval { start, stop, power_scale }])
    }

    pub fn intervals(&self) -> &[HeatInterval<F>] {
        &self.intervals
    }

    /// Intervals with onset shifted by `delay`; fully swallowed intervals vanish.
    pub fn effective(&self, delay: F) -> impl Iterator<Item = HeatInterval<F>> + '_ {
        self.intervals.iter().filter_map(move |iv| {
            let start = iv.start + delay;
            (start < iv.stop).then_some(HeatInterval { start, stop: iv.stop, power_scale: iv.power_scale })
        })
    }
}

/// `(time, temperature)` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureTrace<F = f64> {
    pub samples: Vec<(F, F)>,
}

impl<F: Scalar> TemperatureTrace<F> {
    pub fn times(&self) -> impl Iterator<Item = F> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn temperatures(&self) -> impl Iterator<Item = F> + '_ {
        self.samples.iter().map(|s| s.1)
    }
}

impl TemperatureTrace<f64> {
    pub const CSV_HEADER: [&'static str; 2] = ["time_s", "temperature_K"];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ThermalError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| ThermalError::Io(e.to_string());
        w.write_record(Self::CSV_HEADER).map_err(io)?;
        for &(t, temp) in &self.samples {
            w.write_record([t.to_string(), temp.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| ThermalError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ThermalError> {
        let mut r = csv::Reader::from_reader(input);
        let io = |e: csv::Error| ThermalError::Io(e.to_string());
        let headers = r.headers().map_err(io)?.clone();
        if headers.iter().collect::<Vec<_>>() != Self::CSV_HEADER {
            return Err(ThermalError::Io(format!("unexpected header {headers:?}")));
        }
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            let parse = |i: usize| -> Result<f64, ThermalError> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| ThermalError::Io(format!("bad field {i} in {rec:?}")))
            };
            samples.push((parse(0)?, parse(1)?));
        }
        Ok(Self { samples })
    }

    pub fn save(&self, path: &Path) -> Result<(), ThermalError> {
        let f = std::fs::File::create(path).map_err(|e| ThermalError::Io(e.to_string()))?;
        self.write_csv(f)
    }
}

/// Rectangular grid of heating-laser focus positions (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusGrid<F = f64> {
    pub xs: Vec<F>,
    pub ys: Vec<F>,
}

/// Stationary temperature and heat-arrival delay per focus position,
/// row-major with `x` varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap<F = f64> {
    pub xs: Vec<F>,
    pub ys: Vec<F>,
    pub temperature: Vec<F>,
    pub delay: Vec<F>,
}

impl<F: Scalar> HeatMap<F> {
    pub fn at(&self, ix: usize, iy: usize) -> F {
        self.temperature[iy * self.xs.len() + ix]
    }

    /// Grid indices `(ix, iy)` of the hottest focus position.
    pub fn hottest(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &t) in self.temperature.iter().enumerate() {
            if t > self.temperature[best] {
                best = i;
            }
        }
        (best % self.xs.len(), best / self.xs.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(w: f64) -> ThermalModel {
        ThermalModel { heating_rate: w, ..ThermalModel::default() }
    }

    #[test]
    fn decays_to_environment_without_heating() {
        let m = ThermalModel { cooling_rate: 1.0 / 1.3e-6, environment_temperature: 300.0, ..model(0.0) };
        let t = m.temperature_at(&HeatSchedule::off(), f64::INFINITY, 350.0).unwrap();
        assert_eq!(t, 300.0);
    }

    #[test]
    fn long_pulse_reaches_stationary_value() {
        let m = model(5e8);
        let s = HeatSchedule::pulse(0.0, f64::INFINITY, 1.0).unwrap();
        let t = m.temperature_at(&s, f64::INFINITY, 296.0).unwrap();
        assert!((t - (296.0 + 5e8 * 1.3e-6)).abs() < 1e-9);
    }

    #[test]
    fn onset_is_delayed_but_stop_is_not() {
        let m = model(5e8);
        let s = HeatSchedule::pulse(1e-6, 3e-6, 1.0).unwrap();
        let before = m.temperature_at(&s, 1.15e-6, 296.0).unwrap();
        assert_eq!(before, 296.0);
        let heated = 296.0 + 5e8 * 1.3e-6 * (1.0 - (-1.8e-6f64 / 1.3e-6).exp());
        let at_stop = m.temperature_at(&s, 3e-6, 296.0).unwrap();
        assert!((at_stop - heated).abs() < 1e-9);
    }

    #[test]
    fn pulse_shorter_than_latency_never_heats() {
        let m = model(5e8);
        let s = HeatSchedule::pulse(0.0, 150e-9, 1.0).unwrap();
        assert_eq!(m.temperature_at(&s, 1e-6, 296.0).unwrap(), 296.0);
    }

    #[test]
    fn overlapping_intervals_are_rejected() {
        let err = HeatSchedule::new(vec![
            HeatInterval { start: 0.0, stop: 2e-6, power_scale: 1.0 },
            HeatInterval { start: 1e-6, stop: 3e-6, power_scale: 1.0 },
        ])
        .unwrap_err();
        assert_eq!(err, ThermalError::OverlappingIntervals { first: 0, second: 1 });
    }

    #[test]
    fn trace_errors() {
        let m = model(0.0);
        assert_eq!(m.temperature_trace(&HeatSchedule::off(), &[], 296.0), Err(ThermalError::EmptyGrid));
        assert_eq!(
            m.temperature_trace(&HeatSchedule::off(), &[0.0, 1.0, 1.0], 296.0),
            Err(ThermalError::GridNotIncreasing(2))
        );
    }

    #[test]
    fn flat_trace_when_off_at_environment() {
        let m = model(1e9);
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 1e-7).collect();
        let tr = m.temperature_trace(&HeatSchedule::off(), &grid, 296.0).unwrap();
        assert!(tr.temperatures().all(|t| t == 296.0));
    }

    #[test]
    fn propagation_delay_is_affine() {
        let m = ThermalModel::<f64>::scan_defaults();
        assert!((m.propagation_delay(0.0).unwrap() - 500e-9).abs() < 1e-18);
        let d1 = m.propagation_delay(0.3e-6).unwrap();
        let d2 = m.propagation_delay(0.6e-6).unwrap();
        assert!(((d2 - d1) - (d1 - 500e-9)).abs() < 1e-18);
        assert_eq!(m.propagation_delay(-1.0), Err(ThermalError::NegativeDistance(-1.0)));
    }

    #[test]
    fn heating_rate_for_peak_hits_target() {
        let m = ThermalModel::<f64>::default().with_cooling_time(0.79e-6);
        let w = m.heating_rate_for_peak(1004.0, 3e-6);
        let m = m.with_heating_rate(w);
        let s = HeatSchedule::pulse(0.0, 3e-6, 1.0).unwrap();
        assert!((m.temperature_at(&s, 3e-6, 296.0).unwrap() - 1004.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_heat_map_is_flat() {
        let m = model(2e8);
        let grid = FocusGrid { xs: vec![0.0, 1e-6, 2e-6], ys: vec![0.0, 1e-6] };
        let map = m.heat_map(&grid, (1e-6, 0.0), |_, _| 1.0).unwrap();
        assert!(map.temperature.iter().all(|&t| (t - (296.0 + 2e8 * 1.3e-6)).abs() < 1e-9));
    }

    #[test]
    fn od_labels_map_to_power() {
        assert!((od_power_scale::<f64>(5) - 10f64.powf(-0.5)).abs() < 1e-15);
        assert_eq!(od_power_scale::<f64>(0), 1.0);
    }

    #[test]
    fn f32_model_agrees_with_f64() {
        let m64 = model(3e8);
        let m32 = ThermalModel::<f32> { heating_rate: 3e8, ..ThermalModel::default() };
        let s64 = HeatSchedule::pulse(0.0, 2e-6, 1.0).unwrap();
        let s32 = HeatSchedule::<f32>::pulse(0.0, 2e-6, 1.0).unwrap();
        let a = m64.temperature_at(&s64, 2.5e-6, 296.0).unwrap();
        let b = m32.temperature_at(&s32, 2.5e-6, 296.0).unwrap();
        assert!((a - b as f64).abs() / a < 1e-5);
    }

    #[test]
    fn csv_round_trip() {
        let tr = TemperatureTrace { samples: vec![(0.0, 296.0), (1e-7, 301.25)] };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("time_s,temperature_K\n"));
        assert_eq!(TemperatureTrace::read_csv(&buf[..]).unwrap(), tr);
    }
}
