//! Ni nanoparticle next to the nanodiamond: critical magnetization near the
//! Curie point and a magnetization direction that is re-drawn whenever the
//! particle cools back through `T_C`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nvspin::LineShift;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagnetError {
    #[error("invalid magnet parameter: {0}")]
    InvalidParameter(String),
    #[error("temperature must be positive, got {0} K")]
    InvalidTemperature(f64),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetParams {
    /// K
    pub curie_temperature: f64,
    pub critical_exponent: f64,
    /// Splitting at zero temperature for unit projection, MHz.
    pub coupling_scale: f64,
    /// Extra linewidth at full magnetization, MHz.
    pub gradient_broadening_scale: f64,
    /// NV axis the splitting is sensed along.
    pub sensed_axis: [f64; 3],
}

impl Default for MagnetParams {
    fn default() -> Self {
        let s = 1.0 / 3f64.sqrt();
        Self {
            curie_temperature: 615.0,
            critical_exponent: 0.36,
            coupling_scale: 60.0,
            gradient_broadening_scale: 8.0,
            sensed_axis: [s, s, s],
        }
    }
}

impl MagnetParams {
    pub fn validate(&self) -> Result<(), MagnetError> {
        let bad = |m: &str| Err(MagnetError::InvalidParameter(m.to_string()));
        if !(self.curie_temperature > 0.0) {
            return bad("curie_temperature must be positive");
        }
        if !(self.critical_exponent > 0.0 && self.critical_exponent < 1.0) {
            return bad("critical_exponent must lie in (0, 1)");
        }
        if !(self.coupling_scale >= 0.0 && self.gradient_broadening_scale >= 0.0) {
            return bad("coupling and broadening scales must be non-negative");
        }
        let n = norm(self.sensed_axis);
        if !((n - 1.0).abs() < 1e-9) {
            return bad("sensed_axis must be a unit vector");
        }
        Ok(())
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NanomagnetState {
    pub params: MagnetParams,
    /// Unit vector.
    pub direction: [f64; 3],
    /// K
    pub max_t_since_demag: f64,
    pub seed: u64,
    /// Number of directions drawn so far; the next draw uses this stream.
    pub draws: u64,
}

impl NanomagnetState {
    /// Fresh particle at `temperature` with a seeded random direction.
    pub fn new(params: MagnetParams, temperature: f64, seed: u64) -> Result<Self, MagnetError> {
        params.validate()?;
        if !(temperature > 0.0) {
            return Err(MagnetError::InvalidTemperature(temperature));
        }
        let mut s = Self { params, direction: [0.0, 0.0, 1.0], max_t_since_demag: temperature, seed, draws: 0 };
        s.redraw();
        Ok(s)
    }

    fn redraw(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.draws);
        self.direction = UnitSphere.sample(&mut rng);
        self.draws += 1;
    }

    /// Advances the draw stream by `n` draws at once, as if resampled `n` times.
    pub(crate) fn skip_draws(&mut self, n: u64) {
        if n > 0 {
            self.draws += n - 1;
            self.redraw();
        }
    }

    /// `(1 − T/T_C)^β` below `T_C`, zero above.
    pub fn magnetization(&self, t: f64) -> f64 {
        let tc = self.params.curie_temperature;
        if t >= tc {
            0.0
        } else {
            (1.0 - t / tc).powf(self.params.critical_exponent)
        }
    }

    /// Projection of the magnetization direction on the sensed NV axis.
    pub fn projection(&self) -> f64 {
        let a = self.params.sensed_axis;
        let d = self.direction;
        a[0] * d[0] + a[1] * d[1] + a[2] * d[2]
    }

    pub fn visit_temperature(&mut self, t: f64) -> Result<(), MagnetError> {
        if !(t > 0.0) {
            return Err(MagnetError::InvalidTemperature(t));
        }
        let tc = self.params.curie_temperature;
        if t < tc && self.max_t_since_demag > tc {
            self.redraw();
            self.max_t_since_demag = t;
        } else {
            self.max_t_since_demag = self.max_t_since_demag.max(t);
        }
        Ok(())
    }

    /// Non-mutating form of [`visit_temperature`](Self::visit_temperature).
    pub fn visited(&self, t: f64) -> Result<Self, MagnetError> {
        let mut s = self.clone();
        s.visit_temperature(t)?;
        Ok(s)
    }

    /// `(splitting, extra_width)` in MHz.
    pub fn spectral_effect(&self, t: f64) -> (f64, f64) {
        let m = self.magnetization(t);
        (self.params.coupling_scale * self.projection().abs() * m, self.params.gradient_broadening_scale * m)
    }

    pub fn line_shift(&self, t: f64) -> LineShift {
        let (splitting, extra_width) = self.spectral_effect(t);
        LineShift { splitting, extra_width }
    }

    pub fn to_json(&self) -> Result<String, MagnetError> {
        serde_json::to_string_pretty(self).map_err(|e| MagnetError::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, MagnetError> {
        let s: Self = serde_json::from_str(text).map_err(|e| MagnetError::Snapshot(e.to_string()))?;
        s.params.validate()?;
        Ok(s)
    }
}
