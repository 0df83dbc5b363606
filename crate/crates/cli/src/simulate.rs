//! `simulate`: runs the canned protocols through the executor and writes
//! plot-ready CSV with JSON metadata.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use hitodmr_core::analysis::{
    d_to_temperature, fit_lorentzian, fixed_dip_depth, measure_splitting, three_point_temperature, LorentzianOptions,
    ThreePointCalibration,
};
use hitodmr_core::magnet::NanomagnetState;
use hitodmr_core::nvspin::{synth_spectrum, OdmrSpectrum, SynthConfig};
use hitodmr_core::pulseprog::{
    canned, execute, parse, CannedName, CannedParams, ExecOptions, ExperimentRecord, Power, Quantity, SweepValues,
};
use hitodmr_core::thermal::{od_power_scale, FocusGrid};

use crate::config::{expand, Range3, RunConfig};
use crate::tables::{write_json, write_rows, DecayRow, SplittingRow, Trace};
use crate::{CliError, SimTarget, SimulateArgs};

/// Whether to draw shot noise and how many repetitions to accumulate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shots {
    pub noise: bool,
    pub accumulate: Option<u32>,
}

impl Shots {
    pub fn from_flag(shots: Option<u64>) -> Result<Self, CliError> {
        match shots {
            None => Ok(Self { noise: true, accumulate: None }),
            Some(0) => Ok(Self { noise: false, accumulate: None }),
            Some(n) => u32::try_from(n)
                .map(|m| Self { noise: true, accumulate: Some(m) })
                .map_err(|_| CliError::Validation(format!("--shots {n} exceeds {}", u32::MAX))),
        }
    }

    fn count(&self, preset: u32) -> u32 {
        self.accumulate.unwrap_or(preset)
    }

    fn exec(&self, seed: u64) -> ExecOptions {
        ExecOptions { seed, noise: self.noise, ..ExecOptions::default() }
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str, cfg: &RunConfig) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| CliError::Validation(format!("config `{}` has no [{name}] section", cfg.preset)))
}

fn freq_sweep(r: Range3) -> Result<SweepValues, CliError> {
    expand(r, "frequencies_mhz")?;
    Ok(SweepValues::Range { start: Quantity::mhz(r[0]), stop: Quantity::mhz(r[1]), step: Quantity::mhz(r[2]) })
}

/// Marks summed counts with the number of integrated repetitions.
fn tag(mut s: OdmrSpectrum, shots: u64, noise: bool, seed: u64) -> OdmrSpectrum {
    s.meta.shots = if noise { shots } else { 0 };
    s.meta.seed = seed;
    s
}

fn single_spectrum(rec: &ExperimentRecord) -> Result<OdmrSpectrum, CliError> {
    rec.spectra("w", true)?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::Validation("program recorded no spectrum".into()))
}

pub fn odmr(cfg: &RunConfig, shots: Shots) -> Result<Vec<OdmrSpectrum>, CliError> {
    let s = section(&cfg.file.odmr, "odmr", cfg)?;
    let m = shots.count(s.accumulate);
    let mut out = Vec::new();
    for (i, &peak) in s.peak_temperatures_k.iter().enumerate() {
        let base = cfg.thermal;
        let w =
            if peak > base.environment_temperature { base.heating_rate_for_peak(peak, s.heat_us * 1e-6) } else { 0.0 };
        let mut p = CannedParams::defaults(CannedName::Fig1c);
        p.power = Power::Scale(1.0);
        p.heat_duration = Quantity::us(s.heat_us);
        p.waits = vec![Quantity::us(s.wait_us)];
        p.frequencies = freq_sweep(s.frequencies_mhz)?;
        p.accumulate = m;
        let seed = cfg.seed * 1000 + i as u64;
        let rec = execute(
            &canned(CannedName::Fig1c, &p)?,
            &base.with_heating_rate(w),
            &cfg.ensemble,
            None,
            &shots.exec(seed),
        )?;
        let mut sp = tag(single_spectrum(&rec)?, m as u64, shots.noise, seed);
        sp.meta.labels.insert("peak_k".into(), peak);
        out.push(sp);
    }
    Ok(out)
}

/// One directory of spectra over `t_w` per attenuator setting.
pub fn cooling(cfg: &RunConfig, shots: Shots) -> Result<Vec<(String, Vec<OdmrSpectrum>)>, CliError> {
    let s = section(&cfg.file.cooling, "cooling", cfg)?;
    let m = shots.count(s.accumulate);
    let mut out = Vec::new();
    for (i, row) in s.rows.iter().enumerate() {
        let base = cfg.thermal.with_cooling_time(row.cooling_time_us * 1e-6);
        let w = base.heating_rate_for_peak(row.peak_k, row.heat_us * 1e-6) / od_power_scale::<f64>(row.od);
        let mut p = CannedParams::defaults(CannedName::FigS7Calibration);
        p.power = Power::Od(row.od);
        p.heat_duration = Quantity::us(row.heat_us);
        p.waits = row.waits_us.iter().map(|&w| Quantity::us(w)).collect();
        p.frequencies = freq_sweep(s.frequencies_mhz)?;
        p.accumulate = m;
        p.passes = row.passes;
        let seed = cfg.seed * 1000 + i as u64;
        let prog = canned(CannedName::FigS7Calibration, &p)?;
        let rec = execute(&prog, &base.with_heating_rate(w), &cfg.ensemble, None, &shots.exec(seed))?;
        let spectra = rec
            .spectra("w", true)?
            .into_iter()
            .map(|mut sp| {
                sp.meta.labels.insert("od".into(), row.od as f64);
                tag(sp, m as u64 * row.passes as u64, shots.noise, seed)
            })
            .collect();
        out.push((row.label.clone(), spectra));
    }
    Ok(out)
}

/// Bright-minus-dark readout against heating time at each temperature.
pub fn t1(cfg: &RunConfig, shots: Shots) -> Result<Vec<DecayRow>, CliError> {
    let s = section(&cfg.file.t1, "t1", cfg)?;
    if s.points < 2 {
        return Err(CliError::Validation("t1.points must be at least 2".into()));
    }
    let base = cfg.thermal;
    let mut out = Vec::new();
    for &temp in &s.temperatures_k {
        let thermal = base.with_heating_rate(base.heating_rate_for_stationary(temp).max(0.0));
        let t1 = cfg.ensemble.t1_at(temp);
        let start = 4.0 * base.cooling_time() + base.aom_delay;
        let ths: Vec<Quantity> = (0..s.points)
            .map(|i| {
                let th = start + s.span_t1 * t1 * i as f64 / (s.points - 1) as f64;
                Quantity::us((th * 1e8).round() / 100.0)
            })
            .collect();
        let mut p = CannedParams::defaults(CannedName::RelaxFig2a);
        p.accumulate = shots.count(s.accumulate);
        p.heat_durations = SweepValues::List(ths);
        let seed = cfg.seed + temp as u64;
        let rec = execute(&canned(CannedName::RelaxFig2a, &p)?, &thermal, &cfg.ensemble, None, &shots.exec(seed))?;
        let per = rec.rows.len() / s.points;
        if per < 2 || rec.rows.len() % s.points != 0 {
            return Err(CliError::Validation(format!("unexpected relaxation record layout ({} rows)", rec.rows.len())));
        }
        for chunk in rec.rows.chunks(per) {
            let (bright, dark) = (&chunk[per - 2], &chunk[per - 1]);
            out.push(DecayRow {
                temperature_k: temp,
                time_s: bright.binding("th").unwrap_or(f64::NAN),
                signal: bright.counts - dark.counts,
            });
        }
    }
    Ok(out)
}

/// Counts against microwave pulse length, one trace per temperature.
pub fn rabi(cfg: &RunConfig, shots: Shots) -> Result<Vec<(f64, Trace)>, CliError> {
    let s = section(&cfg.file.rabi, "rabi", cfg)?;
    let base = cfg.thermal;
    let mut out = Vec::new();
    for &temp in &s.temperatures_k {
        let w = if temp > base.environment_temperature {
            base.heating_rate_for_peak(temp, s.peak_at_us * 1e-6)
        } else {
            0.0
        };
        let thermal = base.with_heating_rate(w);
        let mut p = CannedParams::defaults(CannedName::RabiFig2d);
        p.accumulate = 1;
        p.heat_duration = Quantity::us(s.heat_us);
        p.mw_frequency = Quantity::mhz(cfg.ensemble.zfs(temp)?);
        expand(s.durations_ns, "durations_ns")?;
        p.mw_durations = SweepValues::Range {
            start: Quantity::ns(s.durations_ns[0]),
            stop: Quantity::ns(s.durations_ns[1]),
            step: Quantity::ns(s.durations_ns[2]),
        };
        // Drive at the resonance of the temperature actually reached during
        // the pulses, found with a noise-free pass.
        let quiet = ExecOptions { noise: false, ..ExecOptions::default() };
        let probe = execute(&canned(CannedName::RabiFig2d, &p)?, &thermal, &cfg.ensemble, None, &quiet)?;
        let mw_temps: Vec<f64> = probe.rows.iter().filter_map(|r| r.temperature).collect();
        let t_mw = mw_temps.iter().sum::<f64>() / mw_temps.len().max(1) as f64;
        p.mw_frequency = Quantity::mhz((cfg.ensemble.zfs(t_mw)? * 100.0).round() / 100.0);
        p.accumulate = shots.count(s.accumulate);
        let seed = cfg.seed + temp as u64;
        let rec = execute(&canned(CannedName::RabiFig2d, &p)?, &thermal, &cfg.ensemble, None, &shots.exec(seed))?;
        let rows: Vec<_> = rec.rows.iter().filter(|r| r.temperature.is_some()).collect();
        let x = rows.iter().map(|r| r.binding("tau").unwrap_or(f64::NAN)).collect();
        let y = rows.iter().map(|r| r.counts).collect();
        out.push((temp, Trace::new("time_s", "counts", x, y)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundSummary {
    pub round: usize,
    pub hottest_k: f64,
    pub coldest_k: f64,
    pub projection_before: f64,
    pub projection_after: f64,
    pub resampled: bool,
}

#[derive(Debug, Clone)]
pub struct CurieRun {
    /// `(round, step, spectrum)`, rounds numbered from 1.
    pub spectra: Vec<(usize, usize, OdmrSpectrum)>,
    pub splittings: Vec<SplittingRow>,
    pub rounds: Vec<RoundSummary>,
}

/// Cooling rounds of the nanoparticle; its moment carries over between
/// every acquisition.
pub fn curie_rounds(cfg: &RunConfig, shots: Shots) -> Result<CurieRun, CliError> {
    let s = section(&cfg.file.curie, "curie", cfg)?;
    if s.steps < 2 {
        return Err(CliError::Validation("curie.steps must be at least 2".into()));
    }
    let env = cfg.thermal.environment_temperature;
    let mut magnet = NanomagnetState::new(cfg.magnet, env, s.magnet_seed.unwrap_or(cfg.seed))?;
    let mut run = CurieRun { spectra: Vec::new(), splittings: Vec::new(), rounds: Vec::new() };
    for (k, &[hot, cold]) in s.schedule_k.iter().enumerate() {
        let (before, draws) = (magnet.projection(), magnet.draws);
        for i in 0..s.steps {
            let target = hot + (cold - hot) * i as f64 / (s.steps - 1) as f64;
            let thermal = cfg.thermal.with_heating_rate(cfg.thermal.heating_rate_for_peak(target, s.heat_us * 1e-6));
            let mut p = CannedParams::defaults(CannedName::FigS11CurieRound);
            p.accumulate = shots.count(s.accumulate);
            p.waits = vec![Quantity::us(s.wait_us)];
            p.heat_duration = Quantity::us(s.heat_us);
            p.frequencies = freq_sweep(s.frequencies_mhz)?;
            let seed = cfg.seed * 1000 + (k * 100 + i) as u64;
            let prog = canned(CannedName::FigS11CurieRound, &p)?;
            let rec = execute(&prog, &thermal, &cfg.ensemble, Some(magnet.clone()), &shots.exec(seed))?;
            magnet = rec.magnet.clone().expect("magnet is carried through execution");
            let sp = tag(single_spectrum(&rec)?, p.accumulate as u64, shots.noise, seed);
            let fit = measure_splitting(&sp.frequencies(), &sp.counts(), s.width_guess_mhz)?;
            let val = |n: &str| fit.value(n).unwrap_or(f64::NAN);
            let err = |n: &str| fit.stderr(n).filter(|e| e.is_finite());
            run.splittings.push(SplittingRow {
                round: k + 1,
                temperature_k: sp.meta.temperature,
                splitting_mhz: val("splitting"),
                splitting_err_mhz: err("splitting"),
                splitting_sq_mhz2: Some(val("splitting_squared")),
                splitting_sq_err_mhz2: err("splitting_squared"),
            });
            run.spectra.push((k + 1, i, sp));
        }
        run.rounds.push(RoundSummary {
            round: k + 1,
            hottest_k: hot,
            coldest_k: cold,
            projection_before: before,
            projection_after: magnet.projection(),
            resampled: magnet.draws != draws,
        });
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatCell {
    pub x_um: f64,
    pub y_um: f64,
    pub temperature_k: f64,
    pub delay_s: f64,
    pub three_point_k: f64,
}

#[derive(Debug, Clone)]
pub struct HeatmapRun {
    pub cells: Vec<HeatCell>,
    pub calibration: ThreePointCalibration,
    pub cold: OdmrSpectrum,
    pub hot: OdmrSpectrum,
}

/// Stationary temperature per focus position and its three-point estimate.
pub fn heatmap(cfg: &RunConfig, shots: Shots) -> Result<HeatmapRun, CliError> {
    let s = section(&cfg.file.heatmap, "heatmap", cfg)?;
    let n_shots = if shots.noise { shots.accumulate.map_or(s.shots, u64::from) } else { 0 };
    let xs = expand(s.xs_um, "xs_um")?;
    let ys = expand(s.ys_um, "ys_um")?;
    let mut thermal = cfg.thermal;
    thermal.aom_delay = cfg.thermal.aom_delay.max(500e-9);
    thermal.propagation_speed = s.propagation_speed_m_per_s;
    let thermal = thermal.with_heating_rate(thermal.heating_rate_for_stationary(s.peak_k));
    let [nx, ny] = s.nd_position_um;
    let (r2, m, period) = (s.spot_radius_um.powi(2), s.film_modulation, s.film_period_um);
    let coupling = |x: f64, y: f64| {
        let (dx, dy) = (x * 1e6 - nx, y * 1e6 - ny);
        let film = 1.0 + m * (std::f64::consts::TAU * dx / period).cos() * (std::f64::consts::TAU * dy / period).cos();
        (-(dx * dx + dy * dy) / (2.0 * r2)).exp() * film / (1.0 + m)
    };
    let grid = FocusGrid { xs: xs.iter().map(|x| x * 1e-6).collect(), ys: ys.iter().map(|y| y * 1e-6).collect() };
    let map = thermal.heat_map(&grid, (nx * 1e-6, ny * 1e-6), coupling)?;

    let freqs = expand(s.frequencies_mhz, "frequencies_mhz")?;
    let synth = |temperature: f64, seed: u64, grid: &[f64]| {
        let c = SynthConfig { temperature, shots: n_shots, seed, ..SynthConfig::default() };
        synth_spectrum(&cfg.ensemble, &c, grid)
    };
    let env = thermal.environment_temperature;
    let hottest = map.temperature.iter().cloned().fold(env, f64::max);
    let cold = synth(env, cfg.seed, &freqs)?;
    let hot = synth(hottest, cfg.seed + 1, &freqs)?;
    let fit_cold = fit_lorentzian(&cold, &LorentzianOptions::dips(1))?;
    let fit_hot = fit_lorentzian(&hot, &LorentzianOptions::dips(1))?;
    let center = fit_cold.value("center_1").unwrap_or(f64::NAN);
    let width = fit_cold.value("width_1").unwrap_or(f64::NAN);
    let t_hot = d_to_temperature(
        &cfg.ensemble.dt_relation,
        fit_hot.value("center_1").unwrap_or(f64::NAN),
        fit_hot.stderr("center_1").unwrap_or(0.0),
    )?;
    let cal = ThreePointCalibration::from_spectra(
        center,
        width,
        center + s.reference_offset_mhz,
        &cold,
        env,
        &hot,
        t_hot.value,
    )?;

    let probes = [cal.f1, cal.f2, cal.f3];
    let mut cells = Vec::with_capacity(map.temperature.len());
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            let idx = iy * xs.len() + ix;
            let t = map.temperature[idx];
            let probe = synth(t, cfg.seed * 1_000_003 + 2 + idx as u64, &probes)?;
            cells.push(HeatCell {
                x_um: x,
                y_um: y,
                temperature_k: t,
                delay_s: map.delay[idx],
                three_point_k: three_point_temperature(cal.contrast(&probe)?, &cal),
            });
        }
    }
    Ok(HeatmapRun { cells, calibration: cal, cold, hot })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastRow {
    pub sequence: String,
    pub mw_temperature_k: f64,
    pub contrast: f64,
    pub contrast_err: f64,
}

/// The four pump/readout gating sequences; contrast is the depth of a dip
/// fixed at the expected position and width.
pub fn mechanism(cfg: &RunConfig, shots: Shots) -> Result<Vec<(ContrastRow, OdmrSpectrum)>, CliError> {
    let s = section(&cfg.file.mechanism, "mechanism", cfg)?;
    let thermal = cfg.thermal.with_heating_rate(cfg.thermal.heating_rate_for_stationary(s.stationary_k));
    let seqs = [CannedName::FigS6Seq1, CannedName::FigS6Seq2, CannedName::FigS6Seq3, CannedName::FigS6Seq4];
    let mut out = Vec::new();
    for (i, name) in seqs.into_iter().enumerate() {
        let mut p = CannedParams::defaults(name);
        p.accumulate = shots.count(s.accumulate);
        p.heat_duration = Quantity::us(s.heat_us);
        p.frequencies = freq_sweep(s.frequencies_mhz)?;
        let seed = cfg.seed * 1000 + i as u64;
        let rec = execute(&canned(name, &p)?, &thermal, &cfg.ensemble, None, &shots.exec(seed))?;
        let sp = tag(single_spectrum(&rec)?, p.accumulate as u64, shots.noise, seed);
        let center = cfg.ensemble.zfs(sp.meta.temperature)?;
        let fit = fixed_dip_depth(&sp.frequencies(), &sp.counts(), center, cfg.ensemble.linewidth)?;
        let row = ContrastRow {
            sequence: format!("seq{}", i + 1),
            mw_temperature_k: sp.meta.temperature,
            contrast: fit.value("depth").unwrap_or(f64::NAN),
            contrast_err: fit.stderr("depth").unwrap_or(f64::NAN),
        };
        out.push((row, sp));
    }
    Ok(out)
}

/// Executes a user program; `stationary` sets the heating rate so that a
/// sustained unit power scale reaches that temperature.
pub fn program(
    cfg: &RunConfig,
    text: &str,
    stationary: Option<f64>,
    shots: Shots,
) -> Result<ExperimentRecord, CliError> {
    let prog = parse(text)?;
    let w = stationary.map_or(0.0, |t| cfg.thermal.heating_rate_for_stationary(t));
    if !(w >= 0.0) {
        return Err(CliError::Validation(format!("stationary temperature {stationary:?} is below T_E")));
    }
    let magnet = NanomagnetState::new(cfg.magnet, cfg.thermal.environment_temperature, cfg.seed)?;
    Ok(execute(&prog, &cfg.thermal.with_heating_rate(w), &cfg.ensemble, Some(magnet), &shots.exec(cfg.seed))?)
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    fn spectrum(&mut self, rel: &str, s: &OdmrSpectrum) -> Result<(), CliError> {
        let p = self.path(rel)?;
        Ok(s.save(&p)?)
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.target, a.preset.as_deref(), a.config.as_deref(), a.seed, a.out.clone())?;
    let shots = Shots::from_flag(a.shots)?;
    let mut w = Writer::new(&cfg.out)?;
    let summary: Value = match a.target {
        SimTarget::Odmr => {
            let spectra = odmr(&cfg, shots)?;
            for (i, s) in spectra.iter().enumerate() {
                w.spectrum(&format!("odmr_{i:02}.csv"), s)?;
            }
            json!({ "spectra": spectra.len() })
        }
        SimTarget::Cooling => {
            let rows = cooling(&cfg, shots)?;
            for (label, spectra) in &rows {
                for (i, s) in spectra.iter().enumerate() {
                    w.spectrum(&format!("{}/tw_{i:02}.csv", label.to_lowercase()), s)?;
                }
            }
            json!({ "rows": rows.iter().map(|(l, s)| json!({ "label": l, "spectra": s.len() })).collect::<Vec<_>>() })
        }
        SimTarget::T1 => {
            let rows = t1(&cfg, shots)?;
            let p = w.path("t1_decays.csv")?;
            write_rows(&p, &rows)?;
            json!({ "points": rows.len() })
        }
        SimTarget::Rabi => {
            let traces = rabi(&cfg, shots)?;
            for (temp, t) in &traces {
                let p = w.path(&format!("rabi_{:.0}K.csv", temp))?;
                t.save(&p)?;
            }
            json!({ "temperatures_k": traces.iter().map(|t| t.0).collect::<Vec<_>>() })
        }
        SimTarget::CurieRounds => {
            let run = curie_rounds(&cfg, shots)?;
            for (k, i, s) in &run.spectra {
                w.spectrum(&format!("round{k}/step_{i:02}.csv"), s)?;
            }
            let p = w.path("splittings.csv")?;
            write_rows(&p, &run.splittings)?;
            json!({ "rounds": run.rounds })
        }
        SimTarget::Heatmap => {
            let run = heatmap(&cfg, shots)?;
            let p = w.path("heatmap.csv")?;
            write_rows(&p, &run.cells)?;
            w.spectrum("reference_cold.csv", &run.cold)?;
            w.spectrum("reference_hot.csv", &run.hot)?;
            json!({ "calibration": run.calibration })
        }
        SimTarget::Mechanism => {
            let rows = mechanism(&cfg, shots)?;
            for (r, s) in &rows {
                w.spectrum(&format!("{}.csv", r.sequence), s)?;
            }
            let table: Vec<&ContrastRow> = rows.iter().map(|r| &r.0).collect();
            let p = w.path("contrast.csv")?;
            write_rows(&p, &table)?;
            json!({ "contrast": table })
        }
        SimTarget::Program => {
            let path = a
                .program
                .as_ref()
                .ok_or_else(|| CliError::Validation("simulate program needs --program <file>".into()))?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let rec = program(&cfg, &text, a.stationary, shots)?;
            let p = w.path("record.csv")?;
            rec.save(&p)?;
            json!({ "rows": rec.rows.len(), "total_time_s": rec.total_time })
        }
    };
    let run = json!({
        "target": format!("{:?}", a.target),
        "shots": a.shots,
        "config": cfg,
        "summary": summary,
        "files": w.files,
    });
    let p = w.dir.join("run.json");
    write_json(&p, &run)
}
