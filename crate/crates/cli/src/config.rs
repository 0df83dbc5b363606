//! Run configuration: TOML files with a `seed`, model overrides and one
//! section per experiment. Presets for each figure are compiled in and can
//! be replaced by files in `$HITODMR_PRESET_DIR`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hitodmr_core::magnet::MagnetParams;
use hitodmr_core::nvspin::NvEnsemble;
use hitodmr_core::thermal::ThermalModel;

use crate::{CliError, SimTarget};

pub const PRESET_DIR_ENV: &str = "HITODMR_PRESET_DIR";

const BUNDLED: [(&str, &str); 7] = [
    ("fig1a", include_str!("../presets/fig1a.toml")),
    ("fig1d", include_str!("../presets/fig1d.toml")),
    ("fig2a", include_str!("../presets/fig2a.toml")),
    ("fig2d", include_str!("../presets/fig2d.toml")),
    ("fig3b", include_str!("../presets/fig3b.toml")),
    ("figS6", include_str!("../presets/figS6.toml")),
    ("figS7", include_str!("../presets/figS7.toml")),
];

pub fn bundled_presets() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn default_preset(target: SimTarget) -> Option<&'static str> {
    match target {
        SimTarget::Odmr => Some("fig1d"),
        SimTarget::Cooling => Some("figS7"),
        SimTarget::T1 => Some("fig2a"),
        SimTarget::Rabi => Some("fig2d"),
        SimTarget::CurieRounds => Some("fig3b"),
        SimTarget::Heatmap => Some("fig1a"),
        SimTarget::Mechanism => Some("figS6"),
        SimTarget::Program => None,
    }
}

/// `[start, stop, step]` in the section's unit.
pub type Range3 = [f64; 3];

pub fn expand(r: Range3, what: &str) -> Result<Vec<f64>, CliError> {
    let [start, stop, step] = r;
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(CliError::Validation(format!("{what}: bad range [{start}, {stop}, {step}]")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + step * i as f64).collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    pub cooling_time_us: Option<f64>,
    pub environment_temperature_k: Option<f64>,
    pub aom_delay_ns: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub linewidth_mhz: Option<f64>,
    pub strain_mhz: Option<f64>,
    pub base_contrast: Option<f64>,
    pub base_count_rate: Option<f64>,
    pub t1_amplitude: Option<f64>,
    pub t1_exponent: Option<f64>,
    pub t1_saturation_us: Option<f64>,
    pub rabi_frequency_mhz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetSection {
    pub curie_temperature_k: Option<f64>,
    pub critical_exponent: Option<f64>,
    pub coupling_mhz: Option<f64>,
    pub broadening_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrSection {
    /// Peak temperature of each spectrum; values at or below `T_E` mean no heating.
    pub peak_temperatures_k: Vec<f64>,
    pub heat_us: f64,
    /// Microwave pulse relative to the end of the heat pulse.
    pub wait_us: f64,
    pub frequencies_mhz: Range3,
    pub accumulate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolingRow {
    pub label: String,
    pub od: u8,
    pub cooling_time_us: f64,
    pub peak_k: f64,
    pub heat_us: f64,
    pub passes: u32,
    pub waits_us: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolingSection {
    pub frequencies_mhz: Range3,
    pub accumulate: u32,
    pub rows: Vec<CoolingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T1Section {
    pub temperatures_k: Vec<f64>,
    /// Heating durations per temperature.
    pub points: usize,
    /// Sweep span in units of the true `T1`.
    pub span_t1: f64,
    pub accumulate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiSection {
    pub temperatures_k: Vec<f64>,
    pub heat_us: f64,
    /// The heating rate reaches the target temperature this long after the pulse starts.
    pub peak_at_us: f64,
    pub durations_ns: Range3,
    pub accumulate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurieSection {
    /// `[hottest, coldest]` peak temperature of each cooling round.
    pub schedule_k: Vec<[f64; 2]>,
    pub steps: usize,
    pub heat_us: f64,
    pub wait_us: f64,
    pub frequencies_mhz: Range3,
    pub accumulate: u32,
    pub width_guess_mhz: f64,
    /// Seed of the nanoparticle's initial moment; the run seed when absent.
    pub magnet_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapSection {
    pub xs_um: Range3,
    pub ys_um: Range3,
    pub nd_position_um: [f64; 2],
    /// Stationary temperature with the focus on the nanodiamond.
    pub peak_k: f64,
    pub spot_radius_um: f64,
    /// Relative modulation of the film absorption.
    pub film_modulation: f64,
    pub film_period_um: f64,
    /// Speed of the heat front along the film; sets the arrival-delay map.
    pub propagation_speed_m_per_s: f64,
    /// Per-point repetitions of the three-point measurement.
    pub shots: u64,
    pub frequencies_mhz: Range3,
    /// Distance of the off-resonance reference above the dip.
    pub reference_offset_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    pub stationary_k: f64,
    pub heat_us: f64,
    pub frequencies_mhz: Range3,
    pub accumulate: u32,
}

/// The on-disk format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub magnet: MagnetSection,
    pub odmr: Option<OdmrSection>,
    pub cooling: Option<CoolingSection>,
    pub t1: Option<T1Section>,
    pub rabi: Option<RabiSection>,
    pub curie: Option<CurieSection>,
    pub heatmap: Option<HeatmapSection>,
    pub mechanism: Option<MechanismSection>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("{origin}: {e}")))
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub thermal: ThermalModel,
    pub ensemble: NvEnsemble,
    pub magnet: MagnetParams,
    pub file: ConfigFile,
}

/// Preset text, looked up in `$HITODMR_PRESET_DIR` when set.
pub fn preset_text(name: &str) -> Result<String, CliError> {
    if let Some(dir) = std::env::var_os(PRESET_DIR_ENV) {
        let path = Path::new(&dir).join(format!("{name}.toml"));
        if !path.is_file() {
            return Err(CliError::Validation(format!("preset `{name}` not found in {}", path.display())));
        }
        return std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())));
    }
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| t.to_string()).ok_or_else(|| {
        let known: Vec<&str> = bundled_presets().collect();
        CliError::Validation(format!("unknown preset `{name}` (available: {})", known.join(", ")))
    })
}

impl RunConfig {
    /// Applies overrides to the model defaults and checks that a seed is set.
    pub fn resolve(preset: &str, file: ConfigFile, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        let seed = seed
            .or(file.seed)
            .ok_or_else(|| CliError::Validation("a seed is required (--seed or `seed` in the config)".into()))?;
        let out = out.or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("hitodmr-out"));

        let mut thermal = ThermalModel::default();
        let t = &file.thermal;
        if let Some(v) = t.cooling_time_us {
            thermal = thermal.with_cooling_time(v * 1e-6);
        }
        if let Some(v) = t.environment_temperature_k {
            thermal.environment_temperature = v;
        }
        if let Some(v) = t.aom_delay_ns {
            thermal.aom_delay = v * 1e-9;
        }
        thermal.validate()?;

        let mut ensemble = NvEnsemble::default();
        let e = &file.ensemble;
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut ensemble.linewidth, e.linewidth_mhz);
        set(&mut ensemble.strain, e.strain_mhz);
        set(&mut ensemble.base_contrast, e.base_contrast);
        set(&mut ensemble.base_count_rate, e.base_count_rate);
        set(&mut ensemble.t1_amplitude, e.t1_amplitude);
        set(&mut ensemble.t1_exponent, e.t1_exponent);
        set(&mut ensemble.t1_saturation, e.t1_saturation_us.map(|v| v * 1e-6));
        set(&mut ensemble.rabi_frequency, e.rabi_frequency_mhz);
        ensemble.validate()?;

        let mut magnet = MagnetParams::default();
        let m = &file.magnet;
        set(&mut magnet.curie_temperature, m.curie_temperature_k);
        set(&mut magnet.critical_exponent, m.critical_exponent);
        set(&mut magnet.coupling_scale, m.coupling_mhz);
        set(&mut magnet.gradient_broadening_scale, m.broadening_mhz);
        magnet.validate()?;

        Ok(Self { preset: preset.to_string(), seed, out, thermal, ensemble, magnet, file })
    }

    /// Loads `config` if given, else the named preset, else the target's default.
    pub fn load(
        target: SimTarget,
        preset: Option<&str>,
        config: Option<&Path>,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let (name, file) = match (config, preset.or(default_preset(target))) {
            (Some(path), _) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                (path.display().to_string(), ConfigFile::parse(&text, &path.display().to_string())?)
            }
            (None, Some(name)) => (name.to_string(), ConfigFile::parse(&preset_text(name)?, name)?),
            (None, None) => ("none".to_string(), ConfigFile::default()),
        };
        Self::resolve(&name, file, seed, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_preset_parses_and_resolves() {
        for name in bundled_presets() {
            let file = ConfigFile::parse(&preset_text(name).unwrap(), name).unwrap();
            assert!(file.seed.is_some(), "{name} has no seed");
            RunConfig::resolve(name, file, None, None).unwrap();
        }
    }

    #[test]
    fn missing_seed_is_rejected() {
        let err = RunConfig::resolve("x", ConfigFile::default(), None, None).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
        assert_eq!(RunConfig::resolve("x", ConfigFile::default(), Some(3), None).unwrap().seed, 3);
    }

    #[test]
    fn unknown_keys_and_presets_are_validation_errors() {
        assert!(matches!(ConfigFile::parse("seed = 1\nsede = 2\n", "t"), Err(CliError::Validation(_))));
        assert!(matches!(ConfigFile::parse("[thermal]\ntau = 1\n", "t"), Err(CliError::Validation(_))));
        assert!(matches!(preset_text("fig9z"), Err(CliError::Validation(_))));
    }

    #[test]
    fn overrides_reach_the_models() {
        let file = ConfigFile::parse(
            "seed = 4\n[thermal]\ncooling_time_us = 2.0\n[ensemble]\nlinewidth_mhz = 7.5\n[magnet]\ncurie_temperature_k = 600\n",
            "t",
        )
        .unwrap();
        let c = RunConfig::resolve("t", file, None, None).unwrap();
        assert!((c.thermal.cooling_time() - 2e-6).abs() < 1e-15);
        assert_eq!(c.ensemble.linewidth, 7.5);
        assert_eq!(c.magnet.curie_temperature, 600.0);
    }

    #[test]
    fn ranges_include_their_end_point() {
        assert_eq!(expand([2730.0, 2740.0, 2.0], "f").unwrap().len(), 6);
        assert_eq!(expand([0.0, 250.0, 5.0], "t").unwrap().last(), Some(&250.0));
        assert!(expand([1.0, 0.0, 1.0], "t").is_err());
    }
}
