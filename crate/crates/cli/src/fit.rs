//! `fit`: model fits on files written by `simulate` (or measured data in the
//! same layout).

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use hitodmr_core::analysis::{
    fit_curie_rounds, fit_curie_rounds_squared, fit_decay, fit_echo, fit_fid, fit_lorentzian, fit_rabi,
    fit_t1_powerlaw, AnalysisError, FitResult, LorentzianOptions,
};
use hitodmr_core::nvspin::OdmrSpectrum;

use crate::calibrate::{calibrate_group, load_spectra, CalibrationOptions};
use crate::tables::{read_rows, write_json, DecayRow, SplittingRow, Trace};
use crate::{CliError, FitArgs, FitTarget};

/// Fit output plus every result that has to converge.
pub struct Fitted {
    pub json: Value,
    pub fits: Vec<FitResult>,
}

fn one_or_many(fits: Vec<FitResult>) -> Fitted {
    let json = if fits.len() == 1 { json!(fits[0]) } else { json!(fits) };
    Fitted { json, fits }
}

fn traces(a: &FitArgs, f: fn(&[f64], &[f64]) -> Result<FitResult, AnalysisError>) -> Result<Fitted, CliError> {
    let fits = a
        .inputs
        .iter()
        .map(|p| {
            let t = Trace::load(p)?;
            Ok(f(&t.x, &t.y)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(one_or_many(fits))
}

pub fn fit_lorentzian_files(a: &FitArgs) -> Result<Fitted, CliError> {
    let mut opts = LorentzianOptions::dips(a.dips);
    opts.width = a.width;
    let fits = a
        .inputs
        .iter()
        .map(|p| Ok(fit_lorentzian(&OdmrSpectrum::load(p)?, &opts)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(one_or_many(fits))
}

pub fn fit_cooling_files(a: &FitArgs) -> Result<Fitted, CliError> {
    let opts = CalibrationOptions { environment_temperature: a.te, mw_duration: a.mw_duration_ns * 1e-9 };
    let spectra: Vec<(f64, OdmrSpectrum)> =
        load_spectra(&a.inputs, "tw")?.into_iter().map(|(_, w, s)| (w, s)).collect();
    let cal = calibrate_group("cooling", &spectra, &opts)?;
    let json = json!({ "fit": cal.fit, "points": cal.points, "calibration": cal.row });
    Ok(Fitted { json, fits: vec![cal.fit] })
}

/// Per-temperature exponential decays, then the power law through their
/// time constants.
pub fn fit_t1_files(a: &FitArgs) -> Result<Fitted, CliError> {
    let mut by_t: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in &a.inputs {
        for r in read_rows::<DecayRow>(p)? {
            if !(r.temperature_k > 0.0) {
                return Err(CliError::Validation(format!("{}: temperature {} K", p.display(), r.temperature_k)));
            }
            let e = by_t.entry(r.temperature_k.to_bits()).or_insert((r.temperature_k, Vec::new(), Vec::new()));
            e.1.push(r.time_s);
            e.2.push(r.signal);
        }
    }
    let mut decays = Vec::with_capacity(by_t.len());
    let mut fits = Vec::with_capacity(by_t.len() + 1);
    let mut pts = Vec::with_capacity(by_t.len());
    for (temp, t, y) in by_t.into_values() {
        let f = fit_decay(&t, &y, false)?;
        pts.push((temp, f.value("time_constant").unwrap_or(f64::NAN)));
        decays.push(json!({ "temperature_k": temp, "fit": f }));
        fits.push(f);
    }
    let law = fit_t1_powerlaw(&pts, !a.no_saturation)?;
    let json = json!({ "fit": law, "decays": decays });
    fits.push(law);
    Ok(Fitted { json, fits })
}

/// Joint fit over cooling rounds; squared splittings are used when every
/// row carries them.
pub fn fit_curie_files(a: &FitArgs) -> Result<Fitted, CliError> {
    let mut rows = Vec::new();
    for p in &a.inputs {
        rows.extend(read_rows::<SplittingRow>(p)?);
    }
    let squared = !rows.is_empty() && rows.iter().all(|r| r.splitting_sq_mhz2.is_some());
    type Round = (Vec<(f64, f64)>, Vec<Option<f64>>);
    let mut rounds: BTreeMap<usize, Round> = BTreeMap::new();
    for r in &rows {
        let e = rounds.entry(r.round).or_default();
        if squared {
            e.0.push((r.temperature_k, r.splitting_sq_mhz2.unwrap_or(f64::NAN)));
            e.1.push(r.splitting_sq_err_mhz2);
        } else {
            e.0.push((r.temperature_k, r.splitting_mhz));
            e.1.push(r.splitting_err_mhz);
        }
    }
    let points: Vec<Vec<(f64, f64)>> = rounds.values().map(|r| r.0.clone()).collect();
    let sigmas: Option<Vec<Vec<f64>>> = rounds
        .values()
        .map(|r| r.1.iter().map(|s| s.filter(|s| *s > 0.0 && s.is_finite())).collect::<Option<Vec<f64>>>())
        .collect();
    let f = if squared {
        fit_curie_rounds_squared(&points, sigmas.as_deref())?
    } else {
        fit_curie_rounds(&points, sigmas.as_deref())?
    };
    Ok(Fitted { json: json!(f), fits: vec![f] })
}

pub fn fit_files(a: &FitArgs) -> Result<Fitted, CliError> {
    match a.target {
        FitTarget::Lorentzian => fit_lorentzian_files(a),
        FitTarget::Cooling => fit_cooling_files(a),
        FitTarget::T1 => fit_t1_files(a),
        FitTarget::Rabi => traces(a, fit_rabi),
        FitTarget::Echo => traces(a, fit_echo),
        FitTarget::Fid => traces(a, fit_fid),
        FitTarget::Curie => fit_curie_files(a),
    }
}

fn emit(json: &Value, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => write_json(p, json),
        None => {
            println!("{}", serde_json::to_string_pretty(json)?);
            Ok(())
        }
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let fitted = fit_files(a)?;
    emit(&fitted.json, a.out.as_deref())?;
    if a.report {
        for f in &fitted.fits {
            eprint!("{}", f.report());
        }
    }
    let stalled: Vec<&str> = fitted.fits.iter().filter(|f| !f.converged).map(|f| f.model.as_str()).collect();
    if !stalled.is_empty() && !a.allow_nonconverged {
        return Err(CliError::NonConvergence(stalled.join(", ")));
    }
    Ok(())
}
