use serde::{Deserialize, Serialize};

use super::AnalysisError;

const PLANCK: f64 = 6.626_070_15e-34;
const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
const G_FACTOR: f64 = 2.0;

/// `h/(g·μ_B)`, tesla per hertz.
pub const FIELD_PER_FREQUENCY: f64 = PLANCK / (G_FACTOR * BOHR_MAGNETON);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInputs {
    /// counts/s
    pub count_rate: f64,
    /// MHz
    pub linewidth: f64,
    pub contrast: f64,
    /// `dD/dT`, MHz/K; only used for thermometry.
    pub slope: Option<f64>,
}

impl SensitivityInputs {
    fn shot_noise_linewidth(&self) -> Result<f64, AnalysisError> {
        for (name, v) in [("count rate", self.count_rate), ("linewidth", self.linewidth), ("contrast", self.contrast)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(AnalysisError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(self.linewidth / (self.contrast * self.count_rate.sqrt()))
    }
}

/// Continuous-wave field sensitivity, T/√Hz.
pub fn sensitivity_b(inputs: &SensitivityInputs) -> Result<f64, AnalysisError> {
    Ok(FIELD_PER_FREQUENCY * inputs.shot_noise_linewidth()? * 1e6)
}

/// Continuous-wave temperature sensitivity, K/√Hz.
pub fn sensitivity_t(inputs: &SensitivityInputs) -> Result<f64, AnalysisError> {
    let slope = inputs
        .slope
        .filter(|s| *s != 0.0 && s.is_finite())
        .ok_or_else(|| AnalysisError::InvalidInput("temperature sensitivity needs a nonzero dD/dT".into()))?;
    Ok(inputs.shot_noise_linewidth()? / slope.abs())
}
