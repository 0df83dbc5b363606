use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::dt::DtRelation;
use super::SpinError;
use crate::scalar::Scalar;
use crate::thermal::TemperatureTrace;

/// Which `m_s = ±1` level a transition ends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Lower,
    Upper,
}

/// A resonance line, possibly shared by several (orientation, branch) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition<F = f64> {
    /// MHz
    pub frequency: F,
    pub members: Vec<(usize, Branch)>,
}

impl<F: Scalar> Transition<F> {
    /// Fraction of the ensemble driven on this line.
    pub fn weight(&self) -> F {
        F::lit(self.members.len() as f64 / 8.0)
    }
}

/// Extra zero-field line-pair offset and width, e.g. from a nearby magnet.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LineShift<F = f64> {
    /// Full splitting added in quadrature to the strain term, MHz.
    pub splitting: F,
    /// Added to the ensemble linewidth, MHz.
    pub extra_width: F,
}

/// Phenomenological NV ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NvEnsemble<F = f64> {
    pub dt_relation: DtRelation<F>,
    /// Transverse strain `E`, MHz.
    pub strain: F,
    /// Unit vectors of the four NV axes.
    pub orientations: [[F; 3]; 4],
    /// MHz/G
    pub gyromagnetic_ratio: F,
    /// Lorentzian FWHM, MHz.
    pub linewidth: F,
    pub base_contrast: F,
    /// counts/s
    pub base_count_rate: F,
    pub contrast_knee: F,
    pub contrast_cutoff: F,
    pub pl_knee: F,
    pub pl_cutoff: F,
    /// `A` in `1/T1 = A·Tⁿ + 1/T1_sat`, s⁻¹K⁻ⁿ.
    pub t1_amplitude: F,
    pub t1_exponent: F,
    /// s
    pub t1_saturation: F,
    /// Rabi frequency (cycles), MHz.
    pub rabi_frequency: F,
    /// s
    pub rabi_decay: F,
    /// s
    pub t2_echo: F,
    /// s
    pub t2_star: F,
    /// s
    pub polarization_time: F,
}

pub fn tetrahedral_axes<F: Scalar>() -> [[F; 3]; 4] {
    let s = F::one() / F::lit(3.0).sqrt();
    let (p, m) = (s, -s);
    [[p, p, p], [p, m, m], [m, p, m], [m, m, p]]
}

impl<F: Scalar> Default for NvEnsemble<F> {
    fn default() -> Self {
        Self {
            dt_relation: DtRelation::with_high_temperature_calibration(),
            strain: F::zero(),
            orientations: tetrahedral_axes(),
            gyromagnetic_ratio: F::lit(2.8),
            linewidth: F::lit(10.0),
            base_contrast: F::lit(0.05),
            base_count_rate: F::lit(8e6),
            contrast_knee: F::lit(550.0),
            contrast_cutoff: F::lit(700.0),
            pl_knee: F::lit(550.0),
            pl_cutoff: F::lit(900.0),
            t1_amplitude: F::lit(1.9e-12),
            t1_exponent: F::lit(5.83),
            t1_saturation: F::lit(100e-6),
            // π pulse of 30 ns
            rabi_frequency: F::lit(1.0 / 60e-3),
            rabi_decay: F::lit(0.4e-6),
            t2_echo: F::lit(0.91e-6),
            t2_star: F::lit(65e-9),
            polarization_time: F::lit(1e-6),
        }
    }
}

fn ramp_down<F: Scalar>(t: F, knee: F, cutoff: F) -> F {
    if t <= knee {
        F::one()
    } else if t >= cutoff {
        F::zero()
    } else {
        (cutoff - t) / (cutoff - knee)
    }
}

/// Spin population bookkeeping for the addressed two-level manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState<F = f64> {
    /// Probability of `m_s = 0`.
    pub p0: F,
    pub temperature_history_max: F,
}

impl<F: Scalar> EnsembleState<F> {
    pub fn polarized(temperature: F) -> Self {
        Self { p0: F::one(), temperature_history_max: temperature }
    }

    pub fn unpolarized(temperature: F) -> Self {
        Self { p0: F::lit(0.5), temperature_history_max: temperature }
    }
}

/// Temperature along a relaxation segment, as a function of time since the
/// segment start.
pub enum TemperatureProfile<'a, F> {
    Constant(F),
    /// Linearly interpolated; times relative to the first sample.
    Trace(&'a TemperatureTrace<F>),
    Function(&'a dyn Fn(F) -> F),
}

pub enum SpinSegment<'a, F> {
    Polarize { duration: F, temperature: F },
    MwPulse { frequency: F, duration: F, temperature: F, field: [F; 3], shift: LineShift<F> },
    Relax { duration: F, profile: TemperatureProfile<'a, F> },
}

// 8-point Gauss–Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Composite Gauss–Legendre quadrature of `f` over `[a, b]`.
pub(crate) fn gauss_legendre<F: Scalar>(f: impl Fn(F) -> F, a: F, b: F, pieces: usize) -> F {
    if !(b > a) {
        return F::zero();
    }
    let h = (b - a) / F::lit(pieces as f64);
    let half = h / F::lit(2.0);
    let mut acc = F::zero();
    for k in 0..pieces {
        let mid = a + h * F::lit(k as f64) + half;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            acc = acc + F::lit(*w) * f(mid + half * F::lit(*x));
        }
    }
    acc * half
}

/// `(Ω²/Ω_eff²)·(1 − cos(2π·Ω_eff·t)·e^{−t/τ})/2`: probability of leaving
/// `m_s = 0` after a pulse of length `t` detuned by `δ` (both in MHz).
pub fn rabi_flip<F: Scalar>(rabi: F, detuning: F, duration: F, decay: F) -> F {
    let eff2 = rabi * rabi + detuning * detuning;
    if eff2 == F::zero() || duration <= F::zero() {
        return F::zero();
    }
    let eff = eff2.sqrt();
    let phase = F::TAU() * eff * F::lit(1e6) * duration;
    let envelope = if decay.is_infinite() { F::one() } else { (-duration / decay).exp() };
    rabi * rabi / eff2 * (F::one() - phase.cos() * envelope) / F::lit(2.0)
}

/// Lorentzian with unit peak and the given FWHM.
pub fn lorentzian<F: Scalar>(offset: F, fwhm: F) -> F {
    let hw = fwhm / F::lit(2.0);
    hw * hw / (offset * offset + hw * hw)
}

impl<F: Scalar> NvEnsemble<F> {
    pub fn validate(&self) -> Result<(), SpinError> {
        let bad = |what: &str| Err(SpinError::InvalidParameter(what.to_string()));
        if !(self.base_contrast > F::zero() && self.base_contrast < F::one()) {
            return bad("base_contrast must lie in (0, 1)");
        }
        if !(self.linewidth > F::zero()) {
            return bad("linewidth must be positive");
        }
        if !(self.t1_amplitude > F::zero() && self.t1_exponent > F::zero() && self.t1_saturation > F::zero()) {
            return bad("T1 law parameters must be positive");
        }
        if !(self.contrast_knee < self.contrast_cutoff && self.pl_knee < self.pl_cutoff) {
            return bad("knee must lie below cutoff");
        }
        if !(self.base_count_rate > F::zero() && self.polarization_time > F::zero()) {
            return bad("count rate and polarization time must be positive");
        }
        let tol = F::lit(1e-6);
        for i in 0..4 {
            let n = self.orientations[i];
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if (norm - F::one()).abs() > tol {
                return bad("orientations must be unit vectors");
            }
            for j in (i + 1)..4 {
                let m = self.orientations[j];
                let dot = n[0] * m[0] + n[1] * m[1] + n[2] * m[2];
                if (dot + F::one() / F::lit(3.0)).abs() > tol {
                    return bad("orientations must be mutually tetrahedral");
                }
            }
        }
        Ok(())
    }

    pub fn zfs(&self, temperature: F) -> Result<F, SpinError> {
        self.dt_relation.zfs(temperature)
    }

    /// Resonances for every NV axis and branch under field `field` (gauss),
    /// sorted by frequency; coincident lines (within 1e-6 MHz) are merged.
    pub fn transition_frequencies(&self, field: [F; 3], temperature: F) -> Result<Vec<Transition<F>>, SpinError> {
        self.transitions_shifted(field, temperature, LineShift::default())
    }

    pub fn transitions_shifted(
        &self,
        field: [F; 3],
        temperature: F,
        shift: LineShift<F>,
    ) -> Result<Vec<Transition<F>>, SpinError> {
        let d = self.zfs(temperature)?;
        let half_extra = shift.splitting / F::lit(2.0);
        let mut raw: Vec<(F, usize, Branch)> = Vec::with_capacity(8);
        for (i, n) in self.orientations.iter().enumerate() {
            let b_par = self.gyromagnetic_ratio * (field[0] * n[0] + field[1] * n[1] + field[2] * n[2]);
            let half = (self.strain * self.strain + b_par * b_par + half_extra * half_extra).sqrt();
            raw.push((d - half, i, Branch::Lower));
            raw.push((d + half, i, Branch::Upper));
        }
        raw.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite frequencies"));
        let merge_tol = F::lit(1e-6);
        let mut lines: Vec<Transition<F>> = Vec::new();
        for (f, i, br) in raw {
            match lines.last_mut() {
                Some(last) if (f - last.frequency).abs() <= merge_tol => last.members.push((i, br)),
                _ => lines.push(Transition { frequency: f, members: vec![(i, br)] }),
            }
        }
        Ok(lines)
    }

    /// Readout contrast at temperature `t`.
    pub fn contrast_at(&self, t: F) -> F {
        self.base_contrast * ramp_down(t, self.contrast_knee, self.contrast_cutoff)
    }

    /// Photoluminescence rate at temperature `t`, counts/s.
    pub fn pl_rate_at(&self, t: F) -> F {
        self.base_count_rate * ramp_down(t, self.pl_knee, self.pl_cutoff)
    }

    /// Optical pumping efficiency: 1 below the knee, 0 above the cutoff.
    pub fn polarization_efficiency(&self, t: F) -> F {
        ramp_down(t, self.contrast_knee, self.contrast_cutoff)
    }

    pub fn relaxation_rate(&self, t: F) -> F {
        self.t1_amplitude * t.powf(self.t1_exponent) + F::one() / self.t1_saturation
    }

    /// `1 / (A·Tⁿ + 1/T1_sat)`, seconds.
    pub fn t1_at(&self, t: F) -> F {
        F::one() / self.relaxation_rate(t)
    }

    /// `∫ dt / T1(T(t))` over a relaxation segment.
    pub fn relaxation_exponent(&self, duration: F, profile: &TemperatureProfile<'_, F>) -> F {
        if !(duration > F::zero()) {
            return F::zero();
        }
        match profile {
            TemperatureProfile::Constant(t) => duration * self.relaxation_rate(*t),
            TemperatureProfile::Function(f) => gauss_legendre(|s| self.relaxation_rate(f(s)), F::zero(), duration, 16),
            TemperatureProfile::Trace(trace) => {
                let s = &trace.samples;
                if s.is_empty() {
                    return F::zero();
                }
                let origin = s[0].0;
                let end = origin + duration;
                let mut acc = F::zero();
                for w in s.windows(2) {
                    let (ta, tb) = (w[0].0, w[1].0.min(end));
                    if ta >= end {
                        break;
                    }
                    let (ya, yb) = (w[0].1, w[1].1);
                    let span = w[1].0 - w[0].0;
                    let interp = |x: F| ya + (yb - ya) * (x - ta) / span;
                    acc = acc + gauss_legendre(|x| self.relaxation_rate(interp(x)), ta, tb, 1);
                }
                let last = s[s.len() - 1];
                if end > last.0 {
                    acc = acc + (end - last.0) * self.relaxation_rate(last.1);
                }
                acc
            }
        }
    }

    /// Fraction of the addressed population flipped by a pulse at
    /// `frequency` (MHz) of length `duration` (s).
    pub fn mw_flip_fraction(&self, frequency: F, duration: F, lines: &[Transition<F>], shift: LineShift<F>) -> F {
        let rotation = rabi_flip(self.rabi_frequency, F::zero(), duration, self.rabi_decay);
        if rotation == F::zero() {
            return F::zero();
        }
        let width = self.linewidth + shift.extra_width;
        let spectral =
            lines.iter().fold(F::zero(), |acc, l| acc + l.weight() * lorentzian(frequency - l.frequency, width));
        spectral * rotation
    }

    pub fn evolve(&self, state: EnsembleState<F>, segment: &SpinSegment<'_, F>) -> Result<EnsembleState<F>, SpinError> {
        let half = F::lit(0.5);
        let mut next = state;
        match segment {
            SpinSegment::Polarize { duration, temperature } => {
                check_duration(*duration)?;
                let pump = F::one() / self.polarization_time;
                let relax = self.relaxation_rate(*temperature);
                let pumped_target = half + half * self.polarization_efficiency(*temperature);
                let target = (pump * pumped_target + relax * half) / (pump + relax);
                next.p0 = target + (state.p0 - target) * (-(pump + relax) * *duration).exp();
                next.temperature_history_max = state.temperature_history_max.max(*temperature);
            }
            SpinSegment::MwPulse { frequency, duration, temperature, field, shift } => {
                check_duration(*duration)?;
                if !(*frequency > F::zero()) {
                    return Err(SpinError::InvalidFrequency(frequency.to_f64_lossy()));
                }
                let lines = self.transitions_shifted(*field, *temperature, *shift)?;
                let k = self.mw_flip_fraction(*frequency, *duration, &lines, *shift);
                let rotated = state.p0 + (F::one() - F::lit(2.0) * state.p0) * k;
                let decay = (-*duration * self.relaxation_rate(*temperature)).exp();
                next.p0 = half + (rotated - half) * decay;
                next.temperature_history_max = state.temperature_history_max.max(*temperature);
            }
            SpinSegment::Relax { duration, profile } => {
                check_duration(*duration)?;
                let x = self.relaxation_exponent(*duration, profile);
                next.p0 = half + (state.p0 - half) * (-x).exp();
                let peak = match profile {
                    TemperatureProfile::Constant(t) => *t,
                    TemperatureProfile::Trace(tr) => tr.temperatures().fold(F::zero(), F::max),
                    TemperatureProfile::Function(f) => f(F::zero()).max(f(*duration)),
                };
                next.temperature_history_max = state.temperature_history_max.max(peak);
            }
        }
        next.p0 = next.p0.max(F::zero()).min(F::one());
        Ok(next)
    }

    /// Mean photon counts of a readout window.
    pub fn expected_counts(&self, p0: F, temperature: F, window: F, shots: F) -> F {
        shots * window * self.pl_rate_at(temperature) * (F::one() - self.contrast_at(temperature) * (F::one() - p0))
    }
}

impl NvEnsemble<f64> {
    /// Poisson-sampled readout counts over `shots` windows.
    pub fn readout_counts<R: Rng + ?Sized>(
        &self,
        state: &EnsembleState<f64>,
        temperature: f64,
        window: f64,
        shots: u64,
        rng: &mut R,
    ) -> Result<u64, SpinError> {
        if !(window > 0.0) {
            return Err(SpinError::InvalidDuration(window));
        }
        let mean = self.expected_counts(state.p0, temperature, window, shots as f64);
        Ok(sample_poisson(mean, rng) as u64)
    }
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(mean)
}

fn check_duration<F: Scalar>(d: F) -> Result<(), SpinError> {
    if d >= F::zero() {
        Ok(())
    } else {
        Err(SpinError::InvalidDuration(d.to_f64_lossy()))
    }
}
