use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ensemble::{sample_poisson, LineShift, NvEnsemble};
use super::SpinError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// MHz
    pub frequency: f64,
    pub counts: f64,
    pub reference_counts: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectrumMeta {
    /// Repetitions integrated per frequency point; 0 marks expected counts.
    pub shots: u64,
    /// Readout window, s.
    pub window: f64,
    /// Gauss.
    pub field: [f64; 3],
    /// Nominal temperature during the microwave pulse, K.
    pub temperature: f64,
    pub seed: u64,
    /// Free-form numeric tags, e.g. `t_w` in seconds.
    #[serde(default)]
    pub labels: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OdmrSpectrum {
    pub points: Vec<SpectrumPoint>,
    pub meta: SpectrumMeta,
}

impl OdmrSpectrum {
    pub const CSV_HEADER: [&'static str; 3] = ["freq_MHz", "counts", "ref_counts"];

    pub fn new(points: Vec<SpectrumPoint>, meta: SpectrumMeta) -> Result<Self, SpinError> {
        let s = Self { points, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SpinError> {
        if self.points.is_empty() {
            return Err(SpinError::EmptyGrid);
        }
        for (i, w) in self.points.windows(2).enumerate() {
            if !(w[1].frequency > w[0].frequency) {
                return Err(SpinError::GridNotIncreasing(i + 1));
            }
        }
        if let Some(p) = self.points.iter().find(|p| !(p.counts >= 0.0)) {
            return Err(SpinError::Io(format!("negative counts {} at {} MHz", p.counts, p.frequency)));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.frequency).collect()
    }

    pub fn counts(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.counts).collect()
    }

    /// Counts divided by the reference column where present.
    pub fn normalized(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| match p.reference_counts {
                Some(r) if r > 0.0 => p.counts / r,
                _ => p.counts,
            })
            .collect()
    }

    pub fn label(&self, key: &str) -> Option<f64> {
        self.meta.labels.get(key).copied()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SpinError> {
        let io = |e: csv::Error| SpinError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER).map_err(io)?;
        for p in &self.points {
            let r = p.reference_counts.map(|r| r.to_string()).unwrap_or_default();
            w.write_record([p.frequency.to_string(), p.counts.to_string(), r]).map_err(io)?;
        }
        w.flush().map_err(|e| SpinError::Io(e.to_string()))
    }

    /// Reads the CSV body; metadata defaults when no sidecar is supplied.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, SpinError> {
        let io = |e: csv::Error| SpinError::Io(e.to_string());
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(io)?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != Self::CSV_HEADER {
            return Err(SpinError::Io(format!("unexpected header {headers:?}")));
        }
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
            let num = |i: usize| -> Result<f64, SpinError> {
                field(i).parse().map_err(|_| SpinError::Io(format!("bad field {i} in {rec:?}")))
            };
            let reference_counts = if field(2).is_empty() { None } else { Some(num(2)?) };
            points.push(SpectrumPoint { frequency: num(0)?, counts: num(1)?, reference_counts });
        }
        Self::new(points, SpectrumMeta::default())
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes `path` and its JSON metadata sidecar.
    pub fn save(&self, path: &Path) -> Result<(), SpinError> {
        let f = std::fs::File::create(path).map_err(|e| SpinError::Io(e.to_string()))?;
        self.write_csv(f)?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| SpinError::Io(e.to_string()))?;
        std::fs::write(Self::sidecar_path(path), meta).map_err(|e| SpinError::Io(e.to_string()))
    }

    /// Reads `path` and, when present, its sidecar.
    pub fn load(path: &Path) -> Result<Self, SpinError> {
        let f = std::fs::File::open(path).map_err(|e| SpinError::Io(format!("{}: {e}", path.display())))?;
        let mut s = Self::read_csv(f)?;
        let side = Self::sidecar_path(path);
        if side.exists() {
            let text = std::fs::read_to_string(&side).map_err(|e| SpinError::Io(e.to_string()))?;
            s.meta = serde_json::from_str(&text).map_err(|e| SpinError::Io(format!("{}: {e}", side.display())))?;
        }
        Ok(s)
    }
}

/// Acquisition settings for [`synth_spectrum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Gauss.
    pub field: [f64; 3],
    /// Temperature during the microwave pulse, K.
    pub temperature: f64,
    /// Temperature during polarization and readout; defaults to `temperature`.
    pub readout_temperature: Option<f64>,
    /// s
    pub mw_duration: f64,
    /// 0 disables shot noise.
    pub shots: u64,
    /// s
    pub window: f64,
    pub seed: u64,
    pub shift: LineShift,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            field: [0.0; 3],
            temperature: 296.0,
            readout_temperature: None,
            mw_duration: 30e-9,
            shots: 0,
            window: 300e-9,
            seed: 0,
            shift: LineShift::default(),
        }
    }
}

/// Pulsed ODMR spectrum: perfect polarization, a microwave pulse of
/// `mw_duration`, then readout.
pub fn synth_spectrum(ens: &NvEnsemble, cfg: &SynthConfig, grid: &[f64]) -> Result<OdmrSpectrum, SpinError> {
    if grid.is_empty() {
        return Err(SpinError::EmptyGrid);
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(SpinError::GridNotIncreasing(i + 1));
    }
    if let Some(&f) = grid.iter().find(|f| !(**f > 0.0)) {
        return Err(SpinError::InvalidFrequency(f));
    }
    if !(cfg.window > 0.0) {
        return Err(SpinError::InvalidDuration(cfg.window));
    }
    if !(cfg.mw_duration >= 0.0) {
        return Err(SpinError::InvalidDuration(cfg.mw_duration));
    }
    let lines = ens.transitions_shifted(cfg.field, cfg.temperature, cfg.shift)?;
    let t_read = cfg.readout_temperature.unwrap_or(cfg.temperature);
    let shots = if cfg.shots == 0 { 1.0 } else { cfg.shots as f64 };
    let reference = ens.expected_counts(1.0, t_read, cfg.window, shots);
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let k = ens.mw_flip_fraction(f, cfg.mw_duration, &lines, cfg.shift);
            let mean = ens.expected_counts(1.0 - k, t_read, cfg.window, shots);
            let (counts, reference_counts) = if cfg.shots == 0 {
                (mean, reference)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64);
                (sample_poisson(mean, &mut rng), sample_poisson(reference, &mut rng))
            };
            SpectrumPoint { frequency: f, counts, reference_counts: Some(reference_counts) }
        })
        .collect();
    OdmrSpectrum::new(
        points,
        SpectrumMeta {
            shots: cfg.shots,
            window: cfg.window,
            field: cfg.field,
            temperature: cfg.temperature,
            seed: cfg.seed,
            labels: BTreeMap::new(),
        },
    )
}
