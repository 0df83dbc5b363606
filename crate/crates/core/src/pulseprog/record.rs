use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PulseError;
use crate::magnet::NanomagnetState;
use crate::nvspin::{OdmrSpectrum, SpectrumMeta, SpectrumPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    /// Active sweep bindings, outermost first; durations in s, frequencies in MHz.
    pub bindings: Vec<(String, f64)>,
    pub rep: u64,
    pub counts: f64,
    /// Noise-free mean of `counts`.
    pub expected: f64,
    /// Temperature at the last microwave pulse before the readout, K.
    pub temperature: Option<f64>,
    /// Start of the readout, s.
    pub t_offset: f64,
    /// A microwave pulse acted on a spin that was never polarized.
    pub unpolarized: bool,
}

impl RecordRow {
    pub fn binding(&self, key: &str) -> Option<f64> {
        self.bindings.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub rows: Vec<RecordRow>,
    /// Simulated wall-clock time, s.
    pub total_time: f64,
    pub seed: u64,
    pub noise: bool,
    pub readout_window: f64,
    pub program: String,
    pub magnet: Option<NanomagnetState>,
}

#[derive(Default)]
struct Slot {
    frequency: f64,
    counts: f64,
    temperature: f64,
    n: usize,
    reference: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    total_time: f64,
    seed: u64,
    noise: bool,
    readout_window: f64,
    program: String,
    rows: usize,
    unpolarized_rows: Vec<usize>,
    expected_counts: Vec<f64>,
    magnet: Option<NanomagnetState>,
}

fn io<E: std::fmt::Display>(e: E) -> PulseError {
    PulseError::Io(e.to_string())
}

impl ExperimentRecord {
    pub const CSV_HEADER: [&'static str; 6] = ["sweep_key", "sweep_value", "rep", "counts", "temp_K", "t_offset_s"];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PulseError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            let keys: Vec<&str> = r.bindings.iter().map(|(k, _)| k.as_str()).collect();
            let vals: Vec<String> = r.bindings.iter().map(|(_, v)| v.to_string()).collect();
            w.write_record([
                keys.join(";"),
                vals.join(";"),
                r.rep.to_string(),
                r.counts.to_string(),
                r.temperature.map(|t| t.to_string()).unwrap_or_default(),
                r.t_offset.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    fn header(&self) -> Header {
        Header {
            total_time: self.total_time,
            seed: self.seed,
            noise: self.noise,
            readout_window: self.readout_window,
            program: self.program.clone(),
            rows: self.rows.len(),
            unpolarized_rows: (0..self.rows.len()).filter(|&i| self.rows[i].unpolarized).collect(),
            expected_counts: self.rows.iter().map(|r| r.expected).collect(),
            magnet: self.magnet.clone(),
        }
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    pub fn save(&self, path: &Path) -> Result<(), PulseError> {
        self.write_csv(std::fs::File::create(path).map_err(io)?)?;
        let text = serde_json::to_string_pretty(&self.header()).map_err(io)?;
        std::fs::write(Self::sidecar_path(path), text).map_err(io)
    }

    /// Reads a CSV body plus its JSON sidecar.
    pub fn load(path: &Path) -> Result<Self, PulseError> {
        let text = std::fs::read_to_string(Self::sidecar_path(path)).map_err(io)?;
        let h: Header = serde_json::from_str(&text).map_err(io)?;
        let rows = Self::read_rows(std::fs::File::open(path).map_err(io)?)?;
        if rows.len() != h.rows || h.expected_counts.len() != h.rows {
            return Err(PulseError::Io(format!("sidecar lists {} rows, CSV has {}", h.rows, rows.len())));
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.unpolarized = h.unpolarized_rows.contains(&i);
                r.expected = h.expected_counts[i];
                r
            })
            .collect();
        Ok(Self {
            rows,
            total_time: h.total_time,
            seed: h.seed,
            noise: h.noise,
            readout_window: h.readout_window,
            program: h.program,
            magnet: h.magnet,
        })
    }

    /// Rows of a CSV body; `expected` mirrors `counts` and flags are cleared.
    pub fn read_rows<R: Read>(input: R) -> Result<Vec<RecordRow>, PulseError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(io)?.clone();
        if headers.iter().collect::<Vec<_>>() != Self::CSV_HEADER {
            return Err(PulseError::Io(format!("unexpected header {headers:?}")));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            let get = |i: usize| rec.get(i).unwrap_or("");
            let num = |s: &str| -> Result<f64, PulseError> {
                s.parse().map_err(|_| PulseError::Io(format!("bad number `{s}` in {rec:?}")))
            };
            let keys: Vec<&str> = if get(0).is_empty() { Vec::new() } else { get(0).split(';').collect() };
            let vals: Vec<&str> = if get(1).is_empty() { Vec::new() } else { get(1).split(';').collect() };
            if keys.len() != vals.len() {
                return Err(PulseError::Io(format!("sweep keys and values differ in {rec:?}")));
            }
            let bindings = keys
                .iter()
                .zip(&vals)
                .map(|(k, v)| Ok((k.to_string(), num(v)?)))
                .collect::<Result<Vec<_>, PulseError>>()?;
            let counts = num(get(3))?;
            rows.push(RecordRow {
                bindings,
                rep: get(2).parse().map_err(io)?,
                counts,
                expected: counts,
                temperature: if get(4).is_empty() { None } else { Some(num(get(4))?) },
                t_offset: num(get(5))?,
                unpolarized: false,
            });
        }
        Ok(rows)
    }

    /// Groups rows into spectra over the frequency symbol `freq_key`.
    ///
    /// Readouts with no microwave pulse since the previous readout go into
    /// the points' reference counts.
    ///
    /// Rows sharing every other binding are one spectrum; repetitions are
    /// summed when `sum_reps` is set and kept apart otherwise (as a `rep`
    /// label). Other bindings become spectrum labels.
    pub fn spectra(&self, freq_key: &str, sum_reps: bool) -> Result<Vec<OdmrSpectrum>, PulseError> {
        type Key = Vec<(String, u64)>;
        type Group = (Vec<(String, f64)>, BTreeMap<u64, Slot>);
        let mut groups: BTreeMap<Key, Group> = BTreeMap::new();
        for r in &self.rows {
            let Some(f) = r.binding(freq_key) else {
                continue;
            };
            let others: Vec<(String, f64)> = r.bindings.iter().filter(|(k, _)| k != freq_key).cloned().collect();
            let mut key: Key = others.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect();
            let mut labels = others;
            if !sum_reps {
                key.push(("rep".into(), r.rep));
                labels.push(("rep".into(), r.rep as f64));
            }
            let entry = groups.entry(key).or_insert_with(|| (labels, BTreeMap::new()));
            let slot = entry.1.entry(f.to_bits()).or_insert(Slot { frequency: f, ..Slot::default() });
            match r.temperature {
                Some(t) => {
                    slot.counts += r.counts;
                    slot.temperature += t;
                    slot.n += 1;
                }
                None => slot.reference = Some(slot.reference.unwrap_or(0.0) + r.counts),
            }
        }
        let mut out = Vec::with_capacity(groups.len());
        for (_, (labels, points)) in groups {
            let mut pts: Vec<Slot> = points.into_values().filter(|p| p.n > 0).collect();
            if pts.is_empty() {
                continue;
            }
            pts.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
            let temp = pts.iter().map(|p| p.temperature / p.n as f64).sum::<f64>() / pts.len() as f64;
            let meta = SpectrumMeta {
                shots: 0,
                window: self.readout_window,
                field: [0.0; 3],
                temperature: temp,
                seed: self.seed,
                labels: labels.into_iter().collect(),
            };
            let points = pts
                .into_iter()
                .map(|p| SpectrumPoint { frequency: p.frequency, counts: p.counts, reference_counts: p.reference })
                .collect();
            out.push(OdmrSpectrum::new(points, meta)?);
        }
        Ok(out)
    }
}
