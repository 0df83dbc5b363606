use serde::{Deserialize, Serialize};

use super::{delta_stderr, fit_curve, linear_regression, require_finite, AnalysisError, FitResult};
use crate::nvspin::DtRelation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureEstimate {
    /// K
    pub value: f64,
    /// K
    pub stderr: f64,
}

/// Upper end of the bracket used when the relation extends past its cubic.
const EXTENDED_MAX: f64 = 1500.0;

/// Inverts `D(T)` on `[validity_min, validity_max]` (further when `dt` has a
/// high-temperature table or extrapolates), propagating `sigma_d`.
pub fn d_to_temperature(dt: &DtRelation, d: f64, sigma_d: f64) -> Result<TemperatureEstimate, AnalysisError> {
    if !d.is_finite() || !(sigma_d >= 0.0) {
        return Err(AnalysisError::InvalidInput(format!("D = {d} ± {sigma_d}")));
    }
    let lo = dt.validity_min;
    let hi = dt.max_temperature().min(EXTENDED_MAX);
    let probes = 128;
    let mut prev = dt.zfs(lo)?;
    for i in 1..=probes {
        let t = lo + (hi - lo) * i as f64 / probes as f64;
        let z = dt.zfs(t)?;
        if !(z < prev) {
            return Err(AnalysisError::Unidentifiable(format!("D(T) is not decreasing near {t:.1} K")));
        }
        prev = z;
    }
    let (d_hi, d_lo) = (dt.zfs(lo)?, dt.zfs(hi)?);
    if d > d_hi || d < d_lo {
        return Err(AnalysisError::OutOfRange { value: d, min: d_lo, max: d_hi });
    }

    // Newton steps kept inside a shrinking bracket [a, b] with D(a) ≥ d ≥ D(b).
    let (mut a, mut b) = (lo, hi);
    let mut t = lo + (hi - lo) * (d_hi - d) / (d_hi - d_lo);
    for _ in 0..200 {
        let z = dt.zfs(t)? - d;
        if z.abs() <= 1e-13 * d.abs() {
            break;
        }
        if z > 0.0 {
            a = t;
        } else {
            b = t;
        }
        let slope = dt.slope(t)?;
        let newton = t - z / slope;
        t = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if (b - a) < 1e-12 * t {
            break;
        }
    }
    let slope = dt.slope(t)?;
    Ok(TemperatureEstimate { value: t, stderr: sigma_d / slope.abs() })
}

/// Zero-field splitting from the outermost line pair.
pub fn d_from_split_pair(f_low: f64, f_high: f64) -> Result<f64, AnalysisError> {
    if !(f_low < f_high) {
        return Err(AnalysisError::InvalidInput(format!("f_low {f_low} must be below f_high {f_high}")));
    }
    Ok(0.5 * (f_low + f_high))
}

/// Fits `T(t) = T_E + (T0 − T_E)·exp(−γ·t)` to readings taken `t` seconds
/// after the heat pulse. Points with `t ≤ 0` are ignored. `sigmas` are
/// per-point temperature errors (unit weights when absent).
///
/// Reports `T0` (K), `gamma` (1/s) and `cooling_time` (s).
pub fn fit_cooling_extrapolation(
    points: &[(f64, f64)],
    sigmas: Option<&[f64]>,
    t_env: f64,
) -> Result<FitResult, AnalysisError> {
    if let Some(s) = sigmas {
        if s.len() != points.len() {
            return Err(AnalysisError::InvalidInput("one error per point required".into()));
        }
        if let Some(bad) = s.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(AnalysisError::InvalidInput(format!("temperature error {bad}")));
        }
    }
    if !(t_env > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("environment temperature {t_env}")));
    }
    let keep: Vec<usize> = (0..points.len()).filter(|&i| points[i].0 > 0.0).collect();
    super::require_points(keep.len(), 3)?;
    // Internal time unit µs keeps γ of order one.
    let t: Vec<f64> = keep.iter().map(|&i| points[i].0 * 1e6).collect();
    let y: Vec<f64> = keep.iter().map(|&i| points[i].1).collect();
    require_finite("time", &t)?;
    require_finite("temperature", &y)?;
    let sig: Option<Vec<f64>> = sigmas.map(|s| keep.iter().map(|&i| s[i]).collect());
    let spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(spread > 1e-9 * y[0].abs()) {
        return Err(AnalysisError::Unidentifiable("all temperatures are equal".into()));
    }
    let mut distinct = t.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(AnalysisError::Unidentifiable("a single delay does not fix the cooling rate".into()));
    }

    let hot: Vec<(f64, f64)> =
        t.iter().zip(&y).filter(|(_, y)| **y > t_env).map(|(t, y)| (*t, (y - t_env).ln())).collect();
    let (g0, lnd0) = if hot.len() >= 2 {
        let (s, c) = linear_regression(
            &hot.iter().map(|p| p.0).collect::<Vec<_>>(),
            &hot.iter().map(|p| p.1).collect::<Vec<_>>(),
        );
        (if s < 0.0 { -s } else { 1.0 }, c)
    } else {
        (1.0, (y[0] - t_env).abs().max(1.0).ln())
    };
    let p0 = [t_env + lnd0.exp(), g0];
    let model = |x: f64, p: &[f64], g: &mut [f64]| {
        let e = (-p[1] * x).exp();
        g[0] = e;
        g[1] = -(p[0] - t_env) * x * e;
        t_env + (p[0] - t_env) * e
    };
    let out = fit_curve(&t, &y, sig.as_deref(), &p0, model, |p| p[1] > 0.0 && p[1] < 1e4);
    let cov = out.covariance();
    let (t0, g) = (out.params[0], out.params[1]);
    let mut r = FitResult::from_outcome("cooling_extrapolation", &out);
    r.push("T0", t0, delta_stderr(cov.as_ref(), &[1.0, 0.0]));
    r.push("gamma", g * 1e6, delta_stderr(cov.as_ref(), &[0.0, 1e6]));
    r.push("cooling_time", 1e-6 / g, delta_stderr(cov.as_ref(), &[0.0, 1e-6 / (g * g)]));
    if keep.len() < points.len() {
        r.warnings.push(format!("{} point(s) at t_w <= 0 excluded", points.len() - keep.len()));
    }
    Ok(r)
}
