//! Estimators: spectrum fitting, thermometry, relaxation, coherence and
//! Curie-point fits, three-point contrast and sensitivity formulas.
//!
//! Every fitter returns a [`FitResult`]. Non-convergence is reported through
//! [`FitResult::converged`], never as an error.

mod coherence;
mod curie;
mod lorentzian;
pub mod lsq;
mod relaxation;
mod sensitivity;
mod thermometry;
mod three_point;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use coherence::{fit_decay, fit_echo, fit_fid, fit_rabi};
pub use curie::{fit_curie, fit_curie_rounds, fit_curie_rounds_squared, measure_splitting};
pub use lorentzian::{fit_lorentzian, fit_lorentzian_xy, fixed_dip_depth, LorentzianOptions, Weighting};
pub use lsq::{LsqOptions, LsqOutcome};
pub use relaxation::fit_t1_powerlaw;
pub use sensitivity::{sensitivity_b, sensitivity_t, SensitivityInputs, FIELD_PER_FREQUENCY};
pub use thermometry::{d_from_split_pair, d_to_temperature, fit_cooling_extrapolation, TemperatureEstimate};
pub use three_point::{three_point_contrast, three_point_temperature, ThreePointCalibration};

use crate::nvspin::SpinError;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} data points, got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{value} is outside the calibrated range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("parameters are not identifiable: {0}")]
    Unidentifiable(String),
    #[error("requested {requested} dips but only {found} minima were detected")]
    TooFewMinima { requested: usize, found: usize },
    #[error("data span too short: {0}")]
    InsufficientSpan(String),
    #[error(transparent)]
    Spin(#[from] SpinError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    /// NaN (`null` in JSON) when the covariance is unavailable.
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub stderr: f64,
}

fn nan_as_null<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: Vec<FitParam>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default)]
    pub covariance_available: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.stderr)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, AnalysisError> {
        serde_json::from_str(text).map_err(|e| AnalysisError::InvalidInput(e.to_string()))
    }

    /// Plain-text table of the parameters.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}", self.model);
        let _ = writeln!(
            out,
            "converged: {} ({} iterations, residual norm {:.6e})",
            self.converged, self.iterations, self.residual_norm
        );
        let width = self.params.iter().map(|p| p.name.len()).max().unwrap_or(4).max(9);
        let _ = writeln!(out, "{:<width$}  {:>16}  {:>14}", "parameter", "value", "stderr");
        for p in &self.params {
            let _ = writeln!(out, "{:<width$}  {:>16.8e}  {:>14.4e}", p.name, p.value, p.stderr);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }

    pub(crate) fn push(&mut self, name: &str, value: f64, stderr: f64) {
        self.params.push(FitParam { name: name.to_string(), value, stderr });
    }

    pub(crate) fn from_outcome(model: &str, out: &LsqOutcome) -> Self {
        Self {
            model: model.to_string(),
            params: Vec::new(),
            residual_norm: out.residual_norm(),
            converged: out.converged,
            iterations: out.iterations,
            covariance_available: out.covariance().is_some(),
            warnings: Vec::new(),
        }
    }
}

/// Standard error of `g(p)` by the delta method, given `∇g`.
pub(crate) fn delta_stderr(cov: Option<&DMatrix<f64>>, grad: &[f64]) -> f64 {
    let Some(c) = cov else {
        return f64::NAN;
    };
    let g = DVector::from_column_slice(grad);
    (g.transpose() * c * &g)[(0, 0)].max(0.0).sqrt()
}

/// A model `f(x; p)` that also writes `∂f/∂p` into its last argument.
pub(crate) trait Model: Fn(f64, &[f64], &mut [f64]) -> f64 {}
impl<T: Fn(f64, &[f64], &mut [f64]) -> f64> Model for T {}

/// Weighted least squares of `model` against `(x, y)` with per-point
/// standard deviations `sigma` (unit weights when absent).
pub(crate) fn fit_curve<M: Model, V: Fn(&[f64]) -> bool>(
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    p0: &[f64],
    model: M,
    feasible: V,
) -> LsqOutcome {
    let m = x.len();
    let n = p0.len();
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / s).collect(),
        None => vec![1.0; m],
    };
    let scale = y.iter().zip(&w).map(|(y, w)| (y * w).powi(2)).sum::<f64>().sqrt();
    let opts = LsqOptions { residual_floor: 1e-12 * scale, ..LsqOptions::default() };
    let eval = |p: &[f64]| {
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, n);
        let mut g = vec![0.0; n];
        for i in 0..m {
            let f = model(x[i], p, &mut g);
            r[i] = (f - y[i]) * w[i];
            for k in 0..n {
                j[(i, k)] = g[k] * w[i];
            }
        }
        (r, j)
    };
    lsq::minimize(p0, eval, feasible, &opts)
}

/// Frequency (cycles per unit of `t`) of the strongest periodogram peak of
/// the mean-removed signal, 0 when less than one period fits in the span.
pub(crate) fn dominant_frequency(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len();
    let span = t[n - 1] - t[0];
    if n < 3 || !(span > 0.0) {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let dt_min = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let f_max = 0.5 / dt_min;
    let df = 0.1 / span;
    let steps = ((f_max / df).ceil() as usize).min(20_000);
    let power = |f: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            let ph = std::f64::consts::TAU * f * (ti - t[0]);
            c += (yi - mean) * ph.cos();
            s += (yi - mean) * ph.sin();
        }
        c * c + s * s
    };
    let (mut best_f, mut best_p) = (0.0, power(0.0));
    for k in 1..=steps {
        let f = k as f64 * df;
        let p = power(f);
        if p > best_p {
            best_p = p;
            best_f = f;
        }
    }
    if best_f * span < 1.0 {
        0.0
    } else {
        best_f
    }
}

/// Slope and intercept of an ordinary least-squares line.
pub(crate) fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

pub(crate) fn require_points(found: usize, needed: usize) -> Result<(), AnalysisError> {
    if found < needed {
        Err(AnalysisError::InsufficientData { needed, found })
    } else {
        Ok(())
    }
}

pub(crate) fn require_finite(what: &str, v: &[f64]) -> Result<(), AnalysisError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(AnalysisError::InvalidInput(format!("{what}[{i}] is not finite"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_result_json_round_trip_with_missing_errors() {
        let mut r = FitResult {
            model: "test".into(),
            params: Vec::new(),
            residual_norm: 0.5,
            converged: true,
            iterations: 3,
            covariance_available: false,
            warnings: vec!["w".into()],
        };
        r.push("a", 1.25, 0.1);
        r.push("b", -3.0, f64::NAN);
        let text = r.to_json();
        assert!(text.contains("null"));
        let back = FitResult::from_json(&text).unwrap();
        assert_eq!(back.value("a"), Some(1.25));
        assert!(back.stderr("b").unwrap().is_nan());
        assert!(r.report().contains("parameter"));
    }

    #[test]
    fn periodogram_finds_tone() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|t| (std::f64::consts::TAU * 3.3 * t).cos()).collect();
        assert!((dominant_frequency(&t, &y) - 3.3).abs() < 0.06);
        let flat: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        assert_eq!(dominant_frequency(&t, &flat), 0.0);
    }
}
