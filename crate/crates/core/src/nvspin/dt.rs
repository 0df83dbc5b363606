use serde::{Deserialize, Serialize};

use super::SpinError;
use crate::scalar::Scalar;

/// Zero-field splitting `D(T)` as a cubic polynomial, with an optional
/// piecewise-linear calibration table for temperatures above the cubic's
/// validity range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtRelation<F = f64> {
    /// MHz
    pub a0: F,
    /// MHz/K
    pub a1: F,
    /// MHz/K²
    pub a2: F,
    /// MHz/K³
    pub a3: F,
    /// Lowest temperature accepted by the inverse map, K.
    pub validity_min: F,
    /// Highest temperature covered by the cubic, K.
    pub validity_max: F,
    /// Evaluate the cubic beyond `validity_max` when no table is present.
    pub extrapolate_above: bool,
    /// `(K, MHz)` knots used above `validity_max`, ascending in temperature.
    #[serde(default = "Vec::new")]
    pub high_temperature: Vec<(F, F)>,
}

impl<F: Scalar> Default for DtRelation<F> {
    fn default() -> Self {
        Self {
            a0: F::lit(2869.7),
            a1: F::lit(9.7e-2),
            a2: F::lit(-3.7e-4),
            a3: F::lit(1.7e-7),
            validity_min: F::lit(296.0),
            validity_max: F::lit(700.0),
            extrapolate_above: false,
            high_temperature: Vec::new(),
        }
    }
}

impl<F: Scalar> DtRelation<F> {
    /// The cubic joined at `validity_max` to a table through the
    /// extrapolation-thermometry anchors (771 K, 2801.5 MHz) and
    /// (1004 K, 2758 MHz).
    pub fn with_high_temperature_calibration() -> Self {
        let base = Self::default();
        let join = base.cubic(base.validity_max);
        let table = vec![(base.validity_max, join), (F::lit(771.0), F::lit(2801.5)), (F::lit(1004.0), F::lit(2758.0))];
        base.with_table(table)
    }

    pub fn with_table(mut self, table: Vec<(F, F)>) -> Self {
        self.high_temperature = table;
        self
    }

    pub fn extrapolating(mut self) -> Self {
        self.extrapolate_above = true;
        self
    }

    pub fn cubic(&self, t: F) -> F {
        self.a0 + t * (self.a1 + t * (self.a2 + t * self.a3))
    }

    fn cubic_slope(&self, t: F) -> F {
        self.a1 + t * (F::lit(2.0) * self.a2 + F::lit(3.0) * self.a3 * t)
    }

    fn table_segment(&self, t: F) -> (F, F, F, F) {
        let tab = &self.high_temperature;
        let n = tab.len();
        if n == 1 {
            return (tab[0].0, tab[0].1, tab[0].0 + F::one(), tab[0].1 + self.cubic_slope(tab[0].0));
        }
        let mut i = 0;
        while i + 2 < n && t > tab[i + 1].0 {
            i += 1;
        }
        (tab[i].0, tab[i].1, tab[i + 1].0, tab[i + 1].1)
    }

    /// Zero-field splitting at temperature `t` (K), MHz.
    pub fn zfs(&self, t: F) -> Result<F, SpinError> {
        if !(t > F::zero()) {
            return Err(SpinError::InvalidTemperature(t.to_f64_lossy()));
        }
        if t <= self.validity_max {
            return Ok(self.cubic(t));
        }
        if !self.high_temperature.is_empty() {
            let (t0, d0, t1, d1) = self.table_segment(t);
            return Ok(d0 + (d1 - d0) * (t - t0) / (t1 - t0));
        }
        if self.extrapolate_above {
            return Ok(self.cubic(t));
        }
        Err(SpinError::OutsideCalibration {
            temperature: t.to_f64_lossy(),
            validity_max: self.validity_max.to_f64_lossy(),
        })
    }

    /// `dD/dT` at `t`, MHz/K.
    pub fn slope(&self, t: F) -> Result<F, SpinError> {
        if !(t > F::zero()) {
            return Err(SpinError::InvalidTemperature(t.to_f64_lossy()));
        }
        if t <= self.validity_max {
            return Ok(self.cubic_slope(t));
        }
        if !self.high_temperature.is_empty() {
            let (t0, d0, t1, d1) = self.table_segment(t);
            return Ok((d1 - d0) / (t1 - t0));
        }
        if self.extrapolate_above {
            return Ok(self.cubic_slope(t));
        }
        Err(SpinError::OutsideCalibration {
            temperature: t.to_f64_lossy(),
            validity_max: self.validity_max.to_f64_lossy(),
        })
    }

    /// Highest temperature at which `zfs` succeeds.
    pub fn max_temperature(&self) -> F {
        if self.high_temperature.is_empty() && !self.extrapolate_above {
            self.validity_max
        } else {
            F::infinity()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        let dt = DtRelation::<f64>::default();
        assert!((dt.zfs(409.0).unwrap() - 2859.1).abs() < 0.5);
        assert!((dt.zfs(639.0).unwrap() - 2824.9).abs() < 0.5);
        // 2869.7 + 29.1 − 33.3 + 4.59
        assert!((dt.zfs(300.0).unwrap() - 2870.09).abs() < 1e-9);
        let slope = dt.slope(300.0).unwrap() * 1e3;
        assert!((-90.0..=-60.0).contains(&slope), "{slope} kHz/K");
    }

    #[test]
    fn out_of_validity_without_extrapolation() {
        let dt = DtRelation::<f64>::default();
        assert!(matches!(dt.zfs(800.0), Err(SpinError::OutsideCalibration { .. })));
        assert!(dt.clone().extrapolating().zfs(800.0).is_ok());
        assert!(matches!(dt.zfs(0.0), Err(SpinError::InvalidTemperature(_))));
    }

    #[test]
    fn table_is_continuous_and_hits_anchors() {
        let dt = DtRelation::<f64>::with_high_temperature_calibration();
        let below = dt.zfs(700.0).unwrap();
        let above = dt.zfs(700.0 + 1e-9).unwrap();
        assert!((below - above).abs() < 1e-6);
        assert!((dt.zfs(1004.0).unwrap() - 2758.0).abs() < 1e-9);
        assert!((dt.zfs(771.0).unwrap() - 2801.5).abs() < 1e-9);
        assert!(dt.zfs(1100.0).unwrap() < 2758.0);
    }

    #[test]
    fn strictly_decreasing_over_working_range() {
        for dt in [DtRelation::<f64>::default().extrapolating(), DtRelation::with_high_temperature_calibration()] {
            let mut prev = f64::INFINITY;
            for i in 0..=704 {
                let d = dt.zfs(296.0 + i as f64).unwrap();
                assert!(d < prev);
                prev = d;
            }
        }
    }
}
