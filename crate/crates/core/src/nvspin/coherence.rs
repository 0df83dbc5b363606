use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ensemble::{rabi_flip, sample_poisson, NvEnsemble};
use super::SpinError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceKind {
    Rabi,
    Echo,
    Fid,
    Relax,
}

impl FromStr for CoherenceKind {
    type Err = SpinError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rabi" => Ok(Self::Rabi),
            "echo" => Ok(Self::Echo),
            "fid" => Ok(Self::Fid),
            "relax" => Ok(Self::Relax),
            _ => Err(SpinError::UnknownKind(s.to_string())),
        }
    }
}

/// Sampling plan for [`coherence_trace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSchedule {
    /// Free-evolution or pulse times, s.
    pub times: Vec<f64>,
    /// K
    pub temperature: f64,
    /// FID detuning, MHz.
    pub detuning: f64,
    /// 0 disables shot noise.
    pub shots: u64,
    /// s
    pub window: f64,
}

impl Default for CoherenceSchedule {
    fn default() -> Self {
        Self { times: Vec::new(), temperature: 296.0, detuning: 0.0, shots: 0, window: 300e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTrace {
    pub kind: CoherenceKind,
    /// `(time s, photon counts)`; for `Relax` the difference between the
    /// `m_s = 0` and `m_s = −1` preparations.
    pub samples: Vec<(f64, f64)>,
}

impl CoherenceTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn signal(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }
}

/// `m_s = 0` population at the end of the measurement, before readout.
fn population(ens: &NvEnsemble, kind: CoherenceKind, t: f64, sched: &CoherenceSchedule) -> f64 {
    match kind {
        CoherenceKind::Rabi => 1.0 - rabi_flip(ens.rabi_frequency, 0.0, t, ens.rabi_decay),
        CoherenceKind::Echo => 0.5 + 0.5 * (-t / ens.t2_echo).exp(),
        CoherenceKind::Fid => {
            let phase = std::f64::consts::TAU * sched.detuning * 1e6 * t;
            0.5 + 0.5 * phase.cos() * (-(t / ens.t2_star).powi(2)).exp()
        }
        CoherenceKind::Relax => 0.5 + 0.5 * (-t / ens.t1_at(sched.temperature)).exp(),
    }
}

/// Synthetic coherence measurement at fixed temperature; the spin is read
/// out at the same temperature.
pub fn coherence_trace(
    ens: &NvEnsemble,
    kind: CoherenceKind,
    sched: &CoherenceSchedule,
    seed: u64,
) -> Result<CoherenceTrace, SpinError> {
    if sched.times.is_empty() {
        return Err(SpinError::EmptyGrid);
    }
    if let Some(i) = sched.times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(SpinError::GridNotIncreasing(i + 1));
    }
    if let Some(&t) = sched.times.iter().find(|t| !(**t >= 0.0)) {
        return Err(SpinError::InvalidDuration(t));
    }
    if !(sched.temperature > 0.0) {
        return Err(SpinError::InvalidTemperature(sched.temperature));
    }
    let shots = if sched.shots == 0 { 1.0 } else { sched.shots as f64 };
    let t = sched.temperature;
    let samples = sched
        .times
        .iter()
        .enumerate()
        .map(|(i, &time)| {
            let p0 = population(ens, kind, time, sched);
            let bright = ens.expected_counts(p0, t, sched.window, shots);
            let mean_dark = ens.expected_counts(1.0 - p0, t, sched.window, shots);
            let value = if sched.shots == 0 {
                match kind {
                    CoherenceKind::Relax => bright - mean_dark,
                    _ => bright,
                }
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let a = sample_poisson(bright, &mut rng);
                match kind {
                    CoherenceKind::Relax => a - sample_poisson(mean_dark, &mut rng),
                    _ => a,
                }
            };
            (time, value)
        })
        .collect();
    Ok(CoherenceTrace { kind, samples })
}
