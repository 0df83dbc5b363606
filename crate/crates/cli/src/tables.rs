//! Plain CSV tables exchanged between `simulate` and `fit`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Two-column trace `(x, y)`; the header names are kept for writing only.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub x_name: String,
    pub y_name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Trace {
    pub fn new(x_name: &str, y_name: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x_name: x_name.into(), y_name: y_name.into(), x, y }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([&self.x_name, &self.y_name])?;
        for (x, y) in self.x.iter().zip(&self.y) {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// First two columns of any headed numeric CSV.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let h = r.headers()?.clone();
        if h.len() < 2 {
            return Err(CliError::Validation(format!("{}: need two columns", path.display())));
        }
        let mut t = Trace::new(&h[0], &h[1], Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64, CliError> {
                rec[k].trim().parse().map_err(|_| {
                    CliError::Validation(format!("{}: row {}: `{}` is not a number", path.display(), i + 1, &rec[k]))
                })
            };
            t.x.push(num(0)?);
            t.y.push(num(1)?);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub temperature_k: f64,
    pub time_s: f64,
    pub signal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingRow {
    pub round: usize,
    pub temperature_k: f64,
    pub splitting_mhz: f64,
    pub splitting_err_mhz: Option<f64>,
    pub splitting_sq_mhz2: Option<f64>,
    pub splitting_sq_err_mhz2: Option<f64>,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = Trace::new("time_s", "counts", vec![0.0, 4e-9, 8e-9], vec![10.0, 9.5, 0.1 + 0.2]);
        t.save(&p).unwrap();
        assert_eq!(Trace::load(&p).unwrap(), t);
    }

    #[test]
    fn splitting_rows_round_trip_with_missing_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let rows = vec![
            SplittingRow {
                round: 1,
                temperature_k: 600.5,
                splitting_mhz: 12.25,
                splitting_err_mhz: Some(0.5),
                splitting_sq_mhz2: Some(150.0625),
                splitting_sq_err_mhz2: Some(12.0),
            },
            SplittingRow {
                round: 2,
                temperature_k: 310.0,
                splitting_mhz: 30.0,
                splitting_err_mhz: None,
                splitting_sq_mhz2: None,
                splitting_sq_err_mhz2: None,
            },
        ];
        write_rows(&p, &rows).unwrap();
        assert_eq!(read_rows::<SplittingRow>(&p).unwrap(), rows);
    }

    #[test]
    fn non_numeric_trace_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "t,y\n1,abc\n").unwrap();
        assert!(matches!(Trace::load(&p), Err(CliError::Validation(_))));
        assert!(matches!(Trace::load(&dir.path().join("none.csv")), Err(CliError::Io(_))));
    }
}
