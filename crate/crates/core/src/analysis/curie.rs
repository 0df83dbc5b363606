//! Critical-law fits of the nanoparticle-induced splitting.

use nalgebra::{DMatrix, DVector};

use super::{fit_curve, lsq, require_finite, AnalysisError, FitResult};

/// `(1 − T/T_C)^β` below `T_C`, 0 above.
fn law(t: f64, tc: f64, beta: f64) -> f64 {
    if t < tc {
        (1.0 - t / tc).powf(beta)
    } else {
        0.0
    }
}

struct Flat {
    t: Vec<f64>,
    s: Vec<f64>,
    w: Vec<f64>,
    round: Vec<usize>,
    rounds: usize,
}

fn flatten(rounds: &[Vec<(f64, f64)>], sigmas: Option<&[Vec<f64>]>) -> Result<Flat, AnalysisError> {
    if rounds.is_empty() {
        return Err(AnalysisError::InsufficientData { needed: 1, found: 0 });
    }
    if let Some(s) = sigmas {
        if s.len() != rounds.len() || s.iter().zip(rounds).any(|(a, b)| a.len() != b.len()) {
            return Err(AnalysisError::InvalidInput("one error per splitting required".into()));
        }
    }
    let mut f = Flat { t: Vec::new(), s: Vec::new(), w: Vec::new(), round: Vec::new(), rounds: rounds.len() };
    for (k, r) in rounds.iter().enumerate() {
        super::require_points(r.len(), 2)?;
        for (i, &(t, s)) in r.iter().enumerate() {
            if !(t > 0.0) {
                return Err(AnalysisError::InvalidInput(format!("temperature {t} K")));
            }
            let sigma = sigmas.map_or(1.0, |sg| sg[k][i]);
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(AnalysisError::InvalidInput(format!("splitting error {sigma}")));
            }
            f.t.push(t);
            f.s.push(s);
            f.w.push(1.0 / sigma);
            f.round.push(k);
        }
    }
    require_finite("temperature", &f.t)?;
    require_finite("splitting", &f.s)?;
    super::require_points(f.t.len(), f.rounds + 3)?;
    Ok(f)
}

/// Per-round amplitudes minimizing the weighted cost for fixed `(T_C, β)`,
/// and that cost.
fn profile(f: &Flat, tc: f64, beta: f64) -> (Vec<f64>, f64) {
    let mut num = vec![0.0; f.rounds];
    let mut den = vec![0.0; f.rounds];
    for i in 0..f.t.len() {
        let m = law(f.t[i], tc, beta) * f.w[i];
        num[f.round[i]] += m * f.s[i] * f.w[i];
        den[f.round[i]] += m * m;
    }
    let s0: Vec<f64> = num.iter().zip(&den).map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 }).collect();
    let cost = (0..f.t.len()).map(|i| ((s0[f.round[i]] * law(f.t[i], tc, beta) - f.s[i]) * f.w[i]).powi(2)).sum();
    (s0, cost)
}

/// Joint fit of `s_k(T) = s0_k·(1 − T/T_C)^β` over several cooling rounds
/// sharing `T_C` and `β`. Reports `T_C` (K), `beta` and `s0_1`, `s0_2`, ...
pub fn fit_curie_rounds(rounds: &[Vec<(f64, f64)>], sigmas: Option<&[Vec<f64>]>) -> Result<FitResult, AnalysisError> {
    fit_rounds(rounds, sigmas, 1)
}

/// Same law fitted to squared splittings, `s_k² = s0_k²·(1 − T/T_C)^{2β}`.
///
/// Squared splittings from [`measure_splitting`] carry symmetric errors and
/// may be negative on noise, so unresolved points above `T_C` do not bias
/// the transition upwards.
pub fn fit_curie_rounds_squared(
    rounds: &[Vec<(f64, f64)>],
    sigmas: Option<&[Vec<f64>]>,
) -> Result<FitResult, AnalysisError> {
    fit_rounds(rounds, sigmas, 2)
}

fn fit_rounds(rounds: &[Vec<(f64, f64)>], sigmas: Option<&[Vec<f64>]>, power: i32) -> Result<FitResult, AnalysisError> {
    let f = flatten(rounds, sigmas)?;
    let pw = f64::from(power);
    let smax = f.s.iter().cloned().fold(0.0_f64, f64::max);
    if !(smax > 0.0) {
        return Err(AnalysisError::Unidentifiable("no positive splitting".into()));
    }
    let t_on = (0..f.t.len()).filter(|&i| f.s[i] > 0.2f64.powi(power) * smax).map(|i| f.t[i]).fold(0.0_f64, f64::max);
    let t_hi = f.t.iter().cloned().fold(0.0_f64, f64::max);

    // The cost has a kink wherever T_C crosses a sample temperature, so the
    // coarse profile scan keeps the best seed between each pair of adjacent
    // samples and refines each one confined to its gap.
    let upper = t_hi.max(t_on) * 1.5;
    let mut edges: Vec<f64> = f.t.iter().cloned().filter(|&t| t > t_on && t < upper).collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let mut tcs: Vec<f64> = (0..=200).map(|i| t_on * (1.0 + 1e-4) + (upper - t_on) * i as f64 / 200.0).collect();
    let mut bounds = vec![t_on];
    bounds.extend(&edges);
    bounds.push(f64::INFINITY);
    tcs.extend(bounds.windows(2).filter(|w| w[1].is_finite()).map(|w| 0.5 * (w[0] + w[1])));
    let mut seeds: Vec<(f64, f64, f64)> = vec![(f64::INFINITY, 0.0, 0.0); bounds.len() - 1];
    for &tc in &tcs {
        let gap = edges.partition_point(|&e| e <= tc);
        for j in 0..=16 {
            let e = (0.05 + 0.06 * j as f64) * pw;
            let (_, c) = profile(&f, tc, e);
            if c < seeds[gap].0 {
                seeds[gap] = (c, tc, e);
            }
        }
    }
    let order: Vec<usize> = (0..seeds.len()).filter(|&g| seeds[g].0.is_finite()).collect();

    let m = f.t.len();
    let n = 2 + f.rounds;
    let eval = |p: &[f64], tc: f64, dtc: f64| {
        let e = p[1];
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, n);
        for i in 0..m {
            let k = f.round[i];
            let s0 = p[2 + k];
            let w = f.w[i];
            if f.t[i] < tc {
                let u = 1.0 - f.t[i] / tc;
                let mu = u.powf(e);
                r[i] = (s0 * mu - f.s[i]) * w;
                j[(i, 0)] = s0 * e * u.powf(e - 1.0) * f.t[i] / (tc * tc) * w * dtc;
                j[(i, 1)] = s0 * mu * u.ln() * w;
                j[(i, 2 + k)] = mu * w;
            } else {
                r[i] = -f.s[i] * w;
            }
        }
        (r, j)
    };
    let scale = f.s.iter().zip(&f.w).map(|(s, w)| (s * w).powi(2)).sum::<f64>().sqrt();
    let opts = lsq::LsqOptions { residual_floor: 1e-12 * scale, ..Default::default() };
    // Inside a gap `T_C` is a logistic (last gap: exponential) function of
    // the first parameter, so the kinks are never reached.
    let (out, tc, dtc) = order
        .iter()
        .map(|&g| {
            let (_, tc, e) = seeds[g];
            let (lo, hi) = (bounds[g], bounds[g + 1]);
            let map = move |z: f64| {
                if hi.is_finite() {
                    let sg = 1.0 / (1.0 + (-z).exp());
                    (lo + (hi - lo) * sg, (hi - lo) * sg * (1.0 - sg))
                } else {
                    (lo + z.exp(), z.exp())
                }
            };
            let z0 = if hi.is_finite() {
                // Near either end of the gap the logistic is flat and the
                // step in `z` stalls.
                let x = ((tc - lo) / (hi - lo)).clamp(0.1, 0.9);
                (x / (1.0 - x)).ln()
            } else {
                (tc - lo).ln()
            };
            let mut p0 = vec![z0, e];
            p0.extend(profile(&f, tc, e).0);
            let feasible = |p: &[f64]| p[0].abs() < 700.0 && p[1] > 0.01 * pw && p[1] < 3.0 * pw;
            let out = lsq::minimize(
                &p0,
                |p: &[f64]| {
                    let (tc, dtc) = map(p[0]);
                    eval(p, tc, dtc)
                },
                feasible,
                &opts,
            );
            let (tc, dtc) = map(out.params[0]);
            (out, tc, dtc)
        })
        .min_by(|a, b| a.0.cost().total_cmp(&b.0.cost()))
        .expect("at least one seed");
    let errs = out.stderrs();
    let model = if power == 1 { "curie" } else { "curie_squared" };
    let mut r = FitResult::from_outcome(model, &out);
    r.push("T_C", tc, errs[0] * dtc);
    r.push("beta", out.params[1] / pw, errs[1] / pw);
    for k in 0..f.rounds {
        let name = if f.rounds == 1 { "s0".to_string() } else { format!("s0_{}", k + 1) };
        let a = out.params[2 + k];
        if power == 1 {
            r.push(&name, a, errs[2 + k]);
        } else {
            let s0 = a.max(0.0).sqrt();
            r.push(&name, s0, errs[2 + k] / (s0 + (s0 * s0 + errs[2 + k]).sqrt()));
        }
    }
    if !f.t.iter().any(|&t| t >= tc) {
        r.warnings.push("no points above T_C: the transition temperature is only bounded".into());
    }
    Ok(r)
}

/// Single-round Curie fit of `(T kelvin, splitting MHz)` pairs.
pub fn fit_curie(points: &[(f64, f64)]) -> Result<FitResult, AnalysisError> {
    fit_curie_rounds(&[points.to_vec()], None)
}

/// Line pair in `q = s²`, parameters `[b, amp, D, q, w]`.
fn doublet(x: f64, p: &[f64], g: &mut [f64]) -> f64 {
    let (b, amp, d, q, w) = (p[0], p[1], p[2], p[3], p[4]);
    let a = 2.0 * (x - d) / w;
    let v = q / (w * w);
    let pp = 1.0 + a * a + v;
    let qq = pp * pp - 4.0 * a * a * v;
    let sum = 2.0 * pp / qq;
    let ds_da = 2.0 * (2.0 * a * qq - pp * (4.0 * a * pp - 8.0 * a * v)) / (qq * qq);
    let ds_dv = 2.0 * (qq - pp * (2.0 * pp - 4.0 * a * a)) / (qq * qq);
    let k = -b * amp;
    g[0] = 1.0 - amp * sum;
    g[1] = -b * sum;
    g[2] = k * ds_da * (-2.0 / w);
    g[3] = k * ds_dv / (w * w);
    g[4] = k * (ds_da * (-a / w) + ds_dv * (-2.0 * v / w));
    b * (1.0 - amp * sum)
}

/// Symmetric doublet `b·(1 − a·[L(f − D + s/2) + L(f − D − s/2)])` with a
/// shared FWHM `w`. Reports `baseline`, `depth`, `center`, `splitting`,
/// `splitting_squared` and `width` (MHz). Poisson weights are used when all
/// counts are positive.
///
/// The fit runs in `q = s²`; the line pair is a rational function of `q`, so
/// `q` may go negative on noise and stays unbiased near zero. The reported
/// `splitting` is `√max(q, 0)` with the upper one-sigma half-interval as its
/// error, which stays finite for an unresolved doublet.
pub fn measure_splitting(f: &[f64], y: &[f64], width_guess: f64) -> Result<FitResult, AnalysisError> {
    if f.len() != y.len() {
        return Err(AnalysisError::InvalidInput("frequency and count lengths differ".into()));
    }
    super::require_points(f.len(), 25)?;
    require_finite("frequency", f)?;
    require_finite("counts", y)?;
    if !(width_guess > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("width guess {width_guess}")));
    }
    let sigma: Option<Vec<f64>> = y.iter().all(|v| *v > 0.0).then(|| y.iter().map(|v| v.sqrt()).collect());

    let n = y.len();
    let half = 2usize;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(half), (i + half + 1).min(n));
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b0 = sorted[(n * 9) / 10];
    let imin = (0..n).min_by(|&a, &b| smooth[a].total_cmp(&smooth[b])).unwrap_or(0);
    let depth = ((b0 - smooth[imin]) / b0).clamp(1e-4, 0.9);
    let cut = b0 - 0.5 * (b0 - smooth[imin]);
    let (mut lo, mut hi) = (imin, imin);
    for (i, _) in smooth.iter().enumerate().filter(|(_, v)| **v < cut) {
        lo = lo.min(i);
        hi = hi.max(i);
    }
    let d0 = 0.5 * (f[lo] + f[hi]);
    let extent = f[hi] - f[lo];

    let span = f[n - 1] - f[0];
    let feasible =
        |p: &[f64]| p[0] > 0.0 && p[4] > 0.0 && p[4] < span && p[3] > -0.25 * p[4] * p[4] && (p[2] - d0).abs() < span;
    let s_extent = (extent - width_guess).max(0.0);
    let out = [0.0, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|k| k * width_guess)
        .chain(std::iter::once(s_extent))
        .map(|s| {
            let a = if s > width_guess { depth } else { 0.5 * depth };
            let o = fit_curve(f, y, sigma.as_deref(), &[b0, a, d0, s * s, width_guess], doublet, feasible);
            o
        })
        .min_by(|a, b| a.cost().total_cmp(&b.cost()))
        .expect("non-empty seed list");
    let errs = out.stderrs();
    let q = out.params[3];
    let s = q.max(0.0).sqrt();
    let s_err = errs[3] / (s + (s * s + errs[3]).sqrt());
    let mut r = FitResult::from_outcome("doublet", &out);
    r.push("baseline", out.params[0], errs[0]);
    r.push("depth", out.params[1], errs[1]);
    r.push("center", out.params[2], errs[2]);
    r.push("splitting", s, s_err);
    r.push("splitting_squared", q, errs[3]);
    r.push("width", out.params[4], errs[4]);
    Ok(r)
}
