//! Baseline minus a sum of Lorentzian dips.

use super::{fit_curve, require_finite, AnalysisError, FitResult};
use crate::nvspin::OdmrSpectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Poisson when every count is positive, uniform otherwise.
    #[default]
    Auto,
    Poisson,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianOptions {
    pub n_dips: usize,
    /// Initial centers, MHz; seeded from the data when absent.
    pub centers: Option<Vec<f64>>,
    /// Initial FWHM, MHz; estimated from the deepest dip when absent.
    pub width: Option<f64>,
    pub weighting: Weighting,
}

impl LorentzianOptions {
    pub fn dips(n_dips: usize) -> Self {
        Self { n_dips, centers: None, width: None, weighting: Weighting::Auto }
    }
}

/// `y = b·(1 − Σ a_k / (1 + ((f − c_k)/(w_k/2))²))`, parameters
/// `[b, c_1, w_1, a_1, c_2, ...]`.
fn model(f: f64, p: &[f64], g: &mut [f64]) -> f64 {
    let b = p[0];
    let mut sum = 0.0;
    for k in 0..(p.len() - 1) / 3 {
        let (c, w, a) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
        let u = 2.0 * (f - c) / w;
        let l = 1.0 / (1.0 + u * u);
        sum += a * l;
        let dl_du = -2.0 * u * l * l;
        g[1 + 3 * k] = -b * a * dl_du * (-2.0 / w);
        g[2 + 3 * k] = -b * a * dl_du * (-u / w);
        g[3 + 3 * k] = -b * l;
    }
    g[0] = 1.0 - sum;
    b * (1.0 - sum)
}

fn smooth(y: &[f64], half: usize) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

fn upper_quantile(y: &[f64], q: f64) -> f64 {
    let mut v = y.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v[((v.len() - 1) as f64 * q).round() as usize]
}

struct Seeds {
    baseline: f64,
    dips: Vec<(f64, f64, f64)>,
    merged: bool,
}

/// Candidate dips `(center, fwhm, depth)` from significant local minima of
/// the smoothed data, deepest first, after merging close neighbours.
fn seed_dips(f: &[f64], y: &[f64], sigma: Option<&[f64]>, width: Option<f64>) -> Seeds {
    let n = y.len();
    let half = (n / 40).clamp(1, 3);
    let s = smooth(y, half);
    let baseline = upper_quantile(&s, 0.9);
    let scatter = {
        let mut d: Vec<f64> = y.iter().zip(&s).map(|(a, b)| (a - b).abs()).collect();
        d.sort_by(|a, b| a.total_cmp(b));
        1.4826 * d[n / 2]
    };
    // Noise-free expected counts have no scatter whatever their scale.
    let noise = match sigma {
        Some(sig) => (sig.iter().sum::<f64>() / n as f64 / ((2 * half + 1) as f64).sqrt()).min(scatter),
        None => scatter,
    };
    let threshold = 3.0 * noise + 1e-9 * baseline.abs();
    let mut minima: Vec<usize> =
        (1..n - 1).filter(|&i| s[i] <= s[i - 1] && s[i] < s[i + 1] && baseline - s[i] > threshold).collect();
    minima.sort_by(|&a, &b| s[a].total_cmp(&s[b]));

    let fwhm_at = |i: usize| {
        let level = 0.5 * (baseline + s[i]);
        let mut lo = i;
        while lo > 0 && s[lo] < level {
            lo -= 1;
        }
        let mut hi = i;
        while hi < n - 1 && s[hi] < level {
            hi += 1;
        }
        f[hi] - f[lo]
    };
    let step = (f[n - 1] - f[0]) / (n - 1) as f64;
    let w0 = width.unwrap_or_else(|| minima.first().map_or(4.0 * step, |&i| fwhm_at(i)));
    let w0 = w0.clamp(2.0 * step, 0.5 * (f[n - 1] - f[0]));

    let mut dips: Vec<(f64, f64, f64)> = Vec::new();
    let mut merged = false;
    for i in minima {
        if dips.iter().any(|d| (d.0 - f[i]).abs() < 0.5 * w0) {
            merged = true;
            continue;
        }
        let depth = ((baseline - s[i]) / baseline).clamp(1e-6, 0.99);
        dips.push((f[i], w0, depth));
    }
    Seeds { baseline, dips, merged }
}

/// Fits `n_dips` Lorentzian dips to `(frequency MHz, counts)` data.
pub fn fit_lorentzian_xy(f: &[f64], y: &[f64], opts: &LorentzianOptions) -> Result<FitResult, AnalysisError> {
    if f.len() != y.len() {
        return Err(AnalysisError::InvalidInput("frequency and count lengths differ".into()));
    }
    require_finite("frequency", f)?;
    require_finite("counts", y)?;
    if opts.n_dips == 0 {
        return Err(AnalysisError::InvalidInput("n_dips must be at least 1".into()));
    }
    if let Some(i) = f.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(AnalysisError::InvalidInput(format!("frequencies not increasing at index {}", i + 1)));
    }
    let mut n_dips = opts.n_dips;
    super::require_points(y.len(), 5 * (1 + 3 * n_dips))?;

    let poisson = match opts.weighting {
        Weighting::Poisson => {
            if let Some(v) = y.iter().find(|v| !(**v > 0.0)) {
                return Err(AnalysisError::InvalidInput(format!("Poisson weights need positive counts, got {v}")));
            }
            true
        }
        Weighting::Uniform => false,
        Weighting::Auto => y.iter().all(|v| *v > 0.0),
    };
    let sigma: Option<Vec<f64>> = poisson.then(|| y.iter().map(|v| v.sqrt()).collect());

    let mut warnings = Vec::new();
    let seeds = seed_dips(f, y, sigma.as_deref(), opts.width);
    let mut p0 = vec![seeds.baseline];
    match &opts.centers {
        Some(c) => {
            if c.len() != n_dips {
                return Err(AnalysisError::InvalidInput(format!("{} initial centers for {} dips", c.len(), n_dips)));
            }
            let w = opts.width.or(seeds.dips.first().map(|d| d.1)).unwrap_or(10.0);
            let depth = seeds.dips.first().map_or(0.05, |d| d.2) / n_dips as f64;
            for &ci in c {
                p0.extend([ci, w, depth]);
            }
        }
        None => {
            if seeds.dips.len() < n_dips {
                if seeds.merged && !seeds.dips.is_empty() {
                    warnings.push(format!(
                        "only {} separable minima; fitting {} dips instead of {}",
                        seeds.dips.len(),
                        seeds.dips.len(),
                        n_dips
                    ));
                    n_dips = seeds.dips.len();
                } else {
                    return Err(AnalysisError::TooFewMinima { requested: n_dips, found: seeds.dips.len() });
                }
            }
            let mut chosen: Vec<_> = seeds.dips[..n_dips].to_vec();
            chosen.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (c, w, a) in chosen {
                p0.extend([c, w, a]);
            }
        }
    }

    let (f_lo, f_hi) = (f[0], f[f.len() - 1]);
    let span = f_hi - f_lo;
    let out = fit_curve(f, y, sigma.as_deref(), &p0, model, |p| {
        p[0] > 0.0
            && p[1..].chunks(3).all(|d| d[1] > 0.0 && d[1] < 10.0 * span && d[0] > f_lo - span && d[0] < f_hi + span)
    });

    let cov = out.covariance();
    let err = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
    let mut order: Vec<usize> = (0..n_dips).collect();
    order.sort_by(|&a, &b| out.params[1 + 3 * a].total_cmp(&out.params[1 + 3 * b]));

    let mut r = FitResult::from_outcome("lorentzian", &out);
    r.warnings = warnings;
    r.push("baseline", out.params[0], err(0));
    for (k, &d) in order.iter().enumerate() {
        let i = 1 + 3 * d;
        r.push(&format!("center_{}", k + 1), out.params[i], err(i));
        r.push(&format!("width_{}", k + 1), out.params[i + 1], err(i + 1));
        r.push(&format!("depth_{}", k + 1), out.params[i + 2], err(i + 2));
    }
    Ok(r)
}

/// Fits the raw counts of `spectrum`.
pub fn fit_lorentzian(spectrum: &OdmrSpectrum, opts: &LorentzianOptions) -> Result<FitResult, AnalysisError> {
    fit_lorentzian_xy(&spectrum.frequencies(), &spectrum.counts(), opts)
}

/// Depth of a dip with known center and FWHM (MHz): linear fit of
/// `b·(1 − a·L(f))` reporting `baseline` and `depth`. Unlike
/// [`fit_lorentzian_xy`] this works when no dip is visible, so contrasts of
/// different sequences are measured the same way.
pub fn fixed_dip_depth(f: &[f64], y: &[f64], center: f64, width: f64) -> Result<FitResult, AnalysisError> {
    if f.len() != y.len() {
        return Err(AnalysisError::InvalidInput("frequency and count lengths differ".into()));
    }
    super::require_points(f.len(), 3)?;
    require_finite("frequency", f)?;
    require_finite("counts", y)?;
    if !(width > 0.0) || !center.is_finite() {
        return Err(AnalysisError::InvalidInput(format!("dip at {center} MHz with width {width}")));
    }
    let shape = |x: f64| {
        let u = 2.0 * (x - center) / width;
        1.0 / (1.0 + u * u)
    };
    let sigma: Option<Vec<f64>> = y.iter().all(|v| *v > 0.0).then(|| y.iter().map(|v| v.sqrt()).collect());
    let b0 = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let model = |x: f64, p: &[f64], g: &mut [f64]| {
        let l = shape(x);
        g[0] = 1.0 - p[1] * l;
        g[1] = -p[0] * l;
        p[0] * (1.0 - p[1] * l)
    };
    let out = fit_curve(f, y, sigma.as_deref(), &[b0, 0.0], model, |p| p[0] > 0.0);
    let errs = out.stderrs();
    let mut r = FitResult::from_outcome("fixed_dip", &out);
    r.push("baseline", out.params[0], errs[0]);
    r.push("depth", out.params[1], errs[1]);
    Ok(r)
}
