//! `calibrate`: peak temperature by extrapolating the cooling curve back to
//! the end of the heat pulse, next to the direct reading at `t_w < 0`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use hitodmr_core::analysis::{
    d_to_temperature, fit_cooling_extrapolation, fit_lorentzian, AnalysisError, FitResult, LorentzianOptions,
    TemperatureEstimate,
};
use hitodmr_core::nvspin::{DtRelation, OdmrSpectrum};

use crate::tables::write_rows;
use crate::{CalibrateArgs, CliError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// K
    pub environment_temperature: f64,
    /// s
    pub mw_duration: f64,
}

/// One spectrum reduced to a temperature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayPoint {
    /// s
    pub wait: f64,
    pub temperature: TemperatureEstimate,
    pub high_temperature_table: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub label: String,
    pub n_spectra: usize,
    pub t0_dt_k: Option<f64>,
    pub t0_dt_err_k: Option<f64>,
    pub t0_e_k: f64,
    pub t0_e_err_k: f64,
    pub cooling_time_us: f64,
    pub cooling_time_err_us: f64,
    pub warnings: String,
}

#[derive(Debug, Clone)]
pub struct GroupCalibration {
    pub row: CalibrationRow,
    pub points: Vec<DelayPoint>,
    pub fit: FitResult,
}

/// Center of the single dip converted with the cubic relation, or with the
/// high-temperature table when the cubic does not reach that far.
fn temperature_of(s: &OdmrSpectrum) -> Result<(TemperatureEstimate, bool), AnalysisError> {
    let fit = fit_lorentzian(s, &LorentzianOptions::dips(1))?;
    let d = fit.value("center_1").unwrap_or(f64::NAN);
    let sd = fit.stderr("center_1").filter(|e| e.is_finite()).unwrap_or(0.0);
    match d_to_temperature(&DtRelation::default(), d, sd) {
        Ok(t) => Ok((t, false)),
        Err(AnalysisError::OutOfRange { .. }) => {
            Ok((d_to_temperature(&DtRelation::with_high_temperature_calibration(), d, sd)?, true))
        }
        Err(e) => Err(e),
    }
}

/// Calibrates one series of spectra taken at different `t_w`.
pub fn calibrate_group(
    label: &str,
    spectra: &[(f64, OdmrSpectrum)],
    opts: &CalibrationOptions,
) -> Result<GroupCalibration, CliError> {
    let mut waits: Vec<f64> = spectra.iter().map(|s| s.0).collect();
    waits.sort_by(f64::total_cmp);
    waits.dedup();
    if waits.len() < 3 {
        return Err(AnalysisError::Unidentifiable(format!(
            "{label}: {} distinct delay(s); extrapolation needs at least 3",
            waits.len()
        ))
        .into());
    }
    let mut warnings = Vec::new();
    let mut points = Vec::with_capacity(spectra.len());
    for (wait, s) in spectra {
        let (temperature, table) = temperature_of(s)?;
        points.push(DelayPoint { wait: *wait, temperature, high_temperature_table: table });
    }

    let direct = points.iter().filter(|p| p.wait < 0.0).min_by(|a, b| a.wait.total_cmp(&b.wait));
    let (t0_dt_k, t0_dt_err_k) = match direct {
        Some(p) if !p.high_temperature_table => (Some(p.temperature.value), Some(p.temperature.stderr)),
        Some(_) => {
            warnings.push("heating-time spectrum beyond the cubic D(T) range; no direct reading".to_string());
            (None, None)
        }
        None => (None, None),
    };

    let cooling: Vec<&DelayPoint> = points.iter().filter(|p| p.wait > 0.0).collect();
    let n_table = cooling.iter().filter(|p| p.high_temperature_table).count();
    if n_table == cooling.len() && n_table > 0 {
        warnings.push("all cooling points above the cubic D(T) range; extrapolation only".to_string());
    } else if n_table > 0 {
        warnings.push(format!("{n_table} cooling point(s) converted with the high-temperature table"));
    }
    let half_pulse = 0.5 * opts.mw_duration;
    let pts: Vec<(f64, f64)> = cooling.iter().map(|p| (p.wait + half_pulse, p.temperature.value)).collect();
    let sig: Vec<f64> = cooling.iter().map(|p| p.temperature.stderr).collect();
    let sigmas = sig.iter().all(|s| *s > 0.0 && s.is_finite()).then_some(sig.as_slice());
    let fit = fit_cooling_extrapolation(&pts, sigmas, opts.environment_temperature)?;
    warnings.extend(fit.warnings.iter().cloned());
    if !fit.converged {
        warnings.push("cooling fit did not converge".to_string());
    }
    let val = |n: &str| fit.value(n).unwrap_or(f64::NAN);
    let err = |n: &str| fit.stderr(n).unwrap_or(f64::NAN);
    let row = CalibrationRow {
        label: label.to_string(),
        n_spectra: spectra.len(),
        t0_dt_k,
        t0_dt_err_k,
        t0_e_k: val("T0"),
        t0_e_err_k: err("T0"),
        cooling_time_us: val("cooling_time") * 1e6,
        cooling_time_err_us: err("cooling_time") * 1e6,
        warnings: warnings.join("; "),
    };
    Ok(GroupCalibration { row, points, fit })
}

/// Loads spectra and reads their delay label.
pub fn load_spectra(paths: &[PathBuf], wait_label: &str) -> Result<Vec<(PathBuf, f64, OdmrSpectrum)>, CliError> {
    paths
        .iter()
        .map(|p| {
            let s = OdmrSpectrum::load(p)?;
            let w = s.label(wait_label).ok_or_else(|| {
                CliError::Validation(format!("{}: no `{wait_label}` label in the spectrum metadata", p.display()))
            })?;
            Ok((p.clone(), w, s))
        })
        .collect()
}

fn group_label(dir: &Path) -> String {
    dir.file_name().map_or_else(|| ".".to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn cmd_calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let opts = CalibrationOptions { environment_temperature: a.te, mw_duration: a.mw_duration_ns * 1e-9 };
    let mut groups: BTreeMap<PathBuf, Vec<(f64, OdmrSpectrum)>> = BTreeMap::new();
    for (p, w, s) in load_spectra(&a.inputs, &a.wait_label)? {
        groups.entry(p.parent().map(Path::to_path_buf).unwrap_or_default()).or_default().push((w, s));
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (dir, spectra) in &groups {
        let cal = calibrate_group(&group_label(dir), spectra, &opts)?;
        if !cal.row.warnings.is_empty() {
            eprintln!("warning: {}: {}", cal.row.label, cal.row.warnings);
        }
        rows.push(cal.row);
    }
    match &a.out {
        Some(p) => write_rows(p, &rows),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}
