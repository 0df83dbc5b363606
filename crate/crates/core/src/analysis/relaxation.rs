use super::{delta_stderr, fit_curve, linear_regression, require_finite, AnalysisError, FitResult};

/// Fits `1/T1 = A·Tⁿ (+ 1/T1_sat)` to `(T kelvin, T1 seconds)` pairs in
/// log-rate space. Reports `A` (s⁻¹K⁻ⁿ), `n`, `ln_A` and, with
/// `saturation`, `t1_saturation` (s).
///
/// Internally the amplitude is anchored at the geometric-mean temperature,
/// which decorrelates it from the exponent.
pub fn fit_t1_powerlaw(points: &[(f64, f64)], saturation: bool) -> Result<FitResult, AnalysisError> {
    super::require_points(points.len(), if saturation { 5 } else { 4 })?;
    let temps: Vec<f64> = points.iter().map(|p| p.0).collect();
    let t1s: Vec<f64> = points.iter().map(|p| p.1).collect();
    require_finite("temperature", &temps)?;
    require_finite("T1", &t1s)?;
    if let Some(t) = temps.iter().find(|t| !(**t > 0.0)) {
        return Err(AnalysisError::InvalidInput(format!("temperature {t} K")));
    }
    if let Some(t1) = t1s.iter().find(|t| !(**t > 0.0)) {
        return Err(AnalysisError::InvalidInput(format!("non-positive T1 {t1}")));
    }
    let (tmin, tmax) = temps.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &t| (a.min(t), b.max(t)));
    if tmax < 1.5 * tmin {
        return Err(AnalysisError::InsufficientSpan(format!(
            "temperatures span {tmin:.0}–{tmax:.0} K, need a ratio of 1.5"
        )));
    }

    let t_ref = (temps.iter().map(|t| t.ln()).sum::<f64>() / temps.len() as f64).exp();
    let x: Vec<f64> = temps.iter().map(|t| (t / t_ref).ln()).collect();
    let y: Vec<f64> = t1s.iter().map(|t1| -t1.ln()).collect();

    let mut p0 = {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let top = if saturation { &idx[idx.len() / 2..] } else { &idx[..] };
        let (n, c) = linear_regression(
            &top.iter().map(|&i| x[i]).collect::<Vec<_>>(),
            &top.iter().map(|&i| y[i]).collect::<Vec<_>>(),
        );
        vec![c, n.max(0.1)]
    };
    if saturation {
        let slowest = y.iter().cloned().fold(f64::INFINITY, f64::min);
        p0.push(slowest - 2f64.ln());
    }

    let model = |xi: f64, p: &[f64], g: &mut [f64]| {
        let power = (p[0] + p[1] * xi).exp();
        if p.len() == 2 {
            g[0] = 1.0;
            g[1] = xi;
            return p[0] + p[1] * xi;
        }
        let sat = p[2].exp();
        let total = power + sat;
        g[0] = power / total;
        g[1] = xi * power / total;
        g[2] = sat / total;
        total.ln()
    };
    let out = fit_curve(&x, &y, None, &p0, model, |p| p.iter().all(|v| v.is_finite() && v.abs() < 700.0));
    let cov = out.covariance();
    let (u, n) = (out.params[0], out.params[1]);
    let lt = t_ref.ln();
    let ln_a = u - n * lt;
    let mut grad = vec![1.0, -lt];
    grad.resize(out.params.len(), 0.0);
    let s_ln_a = delta_stderr(cov.as_ref(), &grad);

    let mut r = FitResult::from_outcome(if saturation { "t1_powerlaw_saturated" } else { "t1_powerlaw" }, &out);
    r.push("A", ln_a.exp(), ln_a.exp() * s_ln_a);
    r.push("n", n, delta_stderr(cov.as_ref(), &unit(out.params.len(), 1)));
    r.push("ln_A", ln_a, s_ln_a);
    if saturation {
        let t_sat = (-out.params[2]).exp();
        r.push("t1_saturation", t_sat, t_sat * delta_stderr(cov.as_ref(), &unit(3, 2)));
    }
    Ok(r)
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
