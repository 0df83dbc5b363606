//! Rabi, echo, FID and single-exponential decay fits. Times are in seconds
//! at the interface and µs inside the solver.

use std::f64::consts::TAU;

use super::{delta_stderr, dominant_frequency, fit_curve, linear_regression, require_finite, AnalysisError, FitResult};

fn prepare(t: &[f64], y: &[f64], min_points: usize) -> Result<Vec<f64>, AnalysisError> {
    if t.len() != y.len() {
        return Err(AnalysisError::InvalidInput("time and signal lengths differ".into()));
    }
    super::require_points(t.len(), min_points)?;
    require_finite("time", t)?;
    require_finite("signal", y)?;
    if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(AnalysisError::InvalidInput(format!("times not increasing at index {}", i + 1)));
    }
    Ok(t.iter().map(|t| t * 1e6).collect())
}

fn tail_mean(y: &[f64]) -> f64 {
    let k = (y.len() / 5).max(1);
    y[y.len() - k..].iter().sum::<f64>() / k as f64
}

/// Rate `k` of `|y − c| ∝ e^(−k·t)` from a log-linear regression.
fn log_rate(t: &[f64], y: &[f64], c: f64, fallback: f64) -> f64 {
    let a0 = (y[0] - c).abs();
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .map(|(t, y)| (*t, (y - c).abs()))
        .filter(|(_, v)| *v > 0.05 * a0)
        .map(|(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return fallback;
    }
    let (s, _) =
        linear_regression(&pts.iter().map(|p| p.0).collect::<Vec<_>>(), &pts.iter().map(|p| p.1).collect::<Vec<_>>());
    if s < 0.0 {
        -s
    } else {
        fallback
    }
}

/// `y = c + a·cos(2πΩt)·e^(−t/τ)`. Reports `offset`, `amplitude`,
/// `rabi_frequency` (MHz) and `decay` (s).
pub fn fit_rabi(t: &[f64], y: &[f64]) -> Result<FitResult, AnalysisError> {
    let tu = prepare(t, y, 16)?;
    let span = tu[tu.len() - 1] - tu[0];
    let f0 = dominant_frequency(&tu, y);
    if f0 * span < 1.5 {
        return Err(AnalysisError::InsufficientSpan(format!("{:.2} oscillation periods, need 1.5", f0 * span)));
    }
    let c0 = y.iter().sum::<f64>() / y.len() as f64;
    let a0 = y[0] - c0;
    let model = |x: f64, p: &[f64], g: &mut [f64]| {
        let (c, a, f, k) = (p[0], p[1], p[2], p[3]);
        let e = (-k * x).exp();
        let (s, co) = (TAU * f * x).sin_cos();
        g[0] = 1.0;
        g[1] = co * e;
        g[2] = -a * TAU * x * s * e;
        g[3] = -a * x * co * e;
        c + a * co * e
    };
    let feasible = |p: &[f64]| p[2] > 0.0 && p[3] > -1e-3 / span;
    let out = [1.0, 0.5, 2.0]
        .iter()
        .map(|k| fit_curve(&tu, y, None, &[c0, a0, f0, k / span], model, feasible))
        .min_by(|a, b| a.cost().total_cmp(&b.cost()))
        .expect("non-empty seed list");
    let cov = out.covariance();
    let k = out.params[3];
    let mut r = FitResult::from_outcome("rabi", &out);
    r.push("offset", out.params[0], delta_stderr(cov.as_ref(), &[1.0, 0.0, 0.0, 0.0]));
    r.push("amplitude", out.params[1], delta_stderr(cov.as_ref(), &[0.0, 1.0, 0.0, 0.0]));
    r.push("rabi_frequency", out.params[2], delta_stderr(cov.as_ref(), &[0.0, 0.0, 1.0, 0.0]));
    let decay = if k > 0.0 { 1e-6 / k } else { f64::INFINITY };
    r.push("decay", decay, delta_stderr(cov.as_ref(), &[0.0, 0.0, 0.0, 1e-6 / (k * k)]));
    Ok(r)
}

/// `y = a·e^(−t/τ) (+ c)`. Reports `amplitude`, `time_constant` (s) and,
/// with `offset`, `offset`.
pub fn fit_decay(t: &[f64], y: &[f64], offset: bool) -> Result<FitResult, AnalysisError> {
    let tu = prepare(t, y, if offset { 4 } else { 3 })?;
    let span = tu[tu.len() - 1] - tu[0];
    let c0 = if offset { tail_mean(y) } else { 0.0 };
    let k0 = log_rate(&tu, y, c0, 1.0 / span);
    let model = move |x: f64, p: &[f64], g: &mut [f64]| {
        let e = (-p[1] * x).exp();
        g[0] = e;
        g[1] = -p[0] * x * e;
        if offset {
            g[2] = 1.0;
        }
        p[0] * e + if offset { p[2] } else { 0.0 }
    };
    let mut p0 = vec![(y[0] - c0) * (k0 * tu[0]).exp(), k0];
    if offset {
        p0.push(c0);
    }
    let out = fit_curve(&tu, y, None, &p0, model, |p| p[1] > 0.0);
    let cov = out.covariance();
    let np = out.params.len();
    let k = out.params[1];
    let grad = |i: usize, v: f64| {
        let mut g = vec![0.0; np];
        g[i] = v;
        g
    };
    let mut r = FitResult::from_outcome(if offset { "decay_offset" } else { "decay" }, &out);
    r.push("amplitude", out.params[0], delta_stderr(cov.as_ref(), &grad(0, 1.0)));
    r.push("time_constant", 1e-6 / k, delta_stderr(cov.as_ref(), &grad(1, 1e-6 / (k * k))));
    if offset {
        r.push("offset", out.params[2], delta_stderr(cov.as_ref(), &grad(2, 1.0)));
    }
    Ok(r)
}

/// `y = a·e^(−t/T2) + c`. Reports `amplitude`, `t2` (s) and `offset`.
pub fn fit_echo(t: &[f64], y: &[f64]) -> Result<FitResult, AnalysisError> {
    let mut r = fit_decay(t, y, true)?;
    r.model = "echo".into();
    for p in r.params.iter_mut().filter(|p| p.name == "time_constant") {
        p.name = "t2".into();
    }
    let t2 = r.value("t2").unwrap_or(f64::NAN);
    let span = t[t.len() - 1] - t[0];
    if !(span >= 2.0 * t2) {
        return Err(AnalysisError::InsufficientSpan(format!("trace covers {:.2} decay constants, need 2", span / t2)));
    }
    Ok(r)
}

/// `y = a·cos(2πδt)·e^(−(t/T2*)²) + c`. Reports `amplitude`, `t2_star`
/// (s), `offset` and, when the data oscillate, `detuning` (MHz).
pub fn fit_fid(t: &[f64], y: &[f64]) -> Result<FitResult, AnalysisError> {
    let tu = prepare(t, y, 8)?;
    let span = tu[tu.len() - 1] - tu[0];
    let c0 = tail_mean(y);
    let a0 = y[0] - c0;
    let k0 = log_rate(&tu, y, c0, 2.0 / span);
    let w0 = 1.0 / k0;
    let d0 = dominant_frequency(&tu, y);
    // Oscillation is only meaningful when at least one period fits inside
    // the envelope.
    let oscillating = d0 * 2.0 * w0 >= 1.0;

    let model = move |x: f64, p: &[f64], g: &mut [f64]| {
        let (a, w, c) = (p[0], p[1], p[2]);
        let u = x / w;
        let e = (-u * u).exp();
        let (s, co) = if p.len() == 4 { (TAU * p[3] * x).sin_cos() } else { (0.0, 1.0) };
        g[0] = co * e;
        g[1] = a * co * e * 2.0 * u * u / w;
        g[2] = 1.0;
        if p.len() == 4 {
            g[3] = -a * TAU * x * s * e;
        }
        a * co * e + c
    };
    let mut p0 = vec![a0, w0, c0];
    if oscillating {
        p0.push(d0);
    }
    let out = fit_curve(&tu, y, None, &p0, model, |p| p[1] > 0.0);
    let cov = out.covariance();
    let np = out.params.len();
    let grad = |i: usize, v: f64| {
        let mut g = vec![0.0; np];
        g[i] = v;
        g
    };
    let t2 = out.params[1];
    let mut r = FitResult::from_outcome("fid", &out);
    r.push("amplitude", out.params[0], delta_stderr(cov.as_ref(), &grad(0, 1.0)));
    r.push("t2_star", t2 * 1e-6, delta_stderr(cov.as_ref(), &grad(1, 1e-6)));
    r.push("offset", out.params[2], delta_stderr(cov.as_ref(), &grad(2, 1.0)));
    if oscillating {
        r.push("detuning", out.params[3], delta_stderr(cov.as_ref(), &grad(3, 1.0)));
    }
    if !(span >= 2.0 * t2) {
        return Err(AnalysisError::InsufficientSpan(format!("trace covers {:.2} decay constants, need 2", span / t2)));
    }
    Ok(r)
}
