use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::nvspin::OdmrSpectrum;

/// `C = (c1 − c2)/(2·c3 − c1 − c2)`.
pub fn three_point_contrast(c1: f64, c2: f64, c3: f64) -> Result<f64, AnalysisError> {
    let den = 2.0 * c3 - c1 - c2;
    if !(den > 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "off-resonance reference {c3} does not exceed the dip counts ({c1}, {c2})"
        )));
    }
    Ok((c1 - c2) / den)
}

/// Linear map from three-point contrast to temperature, anchored by two
/// full spectra at known temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreePointCalibration {
    /// MHz
    pub f1: f64,
    /// MHz
    pub f2: f64,
    /// Off-resonance reference, MHz.
    pub f3: f64,
    /// FWHM used to check the reference placement, MHz.
    pub linewidth: f64,
    /// K per unit contrast.
    pub slope: f64,
    /// K
    pub reference_temperature: f64,
    pub reference_contrast: f64,
    /// K
    pub hot_temperature: f64,
    pub hot_contrast: f64,
}

/// Counts at `f` by linear interpolation between grid points.
fn counts_at(s: &OdmrSpectrum, f: f64) -> Result<f64, AnalysisError> {
    let p = &s.points;
    let (lo, hi) = (p[0].frequency, p[p.len() - 1].frequency);
    if !(f >= lo && f <= hi) {
        return Err(AnalysisError::OutOfRange { value: f, min: lo, max: hi });
    }
    let i = p.partition_point(|q| q.frequency <= f).clamp(1, p.len() - 1);
    let (a, b) = (&p[i - 1], &p[i]);
    let x = (f - a.frequency) / (b.frequency - a.frequency);
    Ok(a.counts + x * (b.counts - a.counts))
}

fn contrast_of(s: &OdmrSpectrum, f: [f64; 3]) -> Result<f64, AnalysisError> {
    three_point_contrast(counts_at(s, f[0])?, counts_at(s, f[1])?, counts_at(s, f[2])?)
}

impl ThreePointCalibration {
    /// Half-maximum probes around `center` and the two reference spectra.
    #[allow(clippy::too_many_arguments)]
    pub fn from_spectra(
        center: f64,
        linewidth: f64,
        f3: f64,
        cold: &OdmrSpectrum,
        t_cold: f64,
        hot: &OdmrSpectrum,
        t_hot: f64,
    ) -> Result<Self, AnalysisError> {
        let f = [center - 0.5 * linewidth, center + 0.5 * linewidth, f3];
        let c_cold = contrast_of(cold, f)?;
        let c_hot = contrast_of(hot, f)?;
        if !(c_hot != c_cold) {
            return Err(AnalysisError::Unidentifiable("reference spectra give equal contrast".into()));
        }
        let cal = Self {
            f1: f[0],
            f2: f[1],
            f3,
            linewidth,
            slope: (t_hot - t_cold) / (c_hot - c_cold),
            reference_temperature: t_cold,
            reference_contrast: c_cold,
            hot_temperature: t_hot,
            hot_contrast: c_hot,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.f1 < self.f2) {
            return Err(AnalysisError::InvalidInput(format!("f1 {} must be below f2 {}", self.f1, self.f2)));
        }
        if !(self.linewidth > 0.0) {
            return Err(AnalysisError::InvalidInput(format!("linewidth {}", self.linewidth)));
        }
        let (lo, hi) = (self.f1 - 3.0 * self.linewidth, self.f2 + 3.0 * self.linewidth);
        if self.f3 >= lo && self.f3 <= hi {
            return Err(AnalysisError::InvalidInput(format!(
                "reference {} MHz lies within [{lo}, {hi}] MHz of the dip",
                self.f3
            )));
        }
        if !self.slope.is_finite() {
            return Err(AnalysisError::InvalidInput("slope is not finite".into()));
        }
        Ok(())
    }

    /// Contrast of a spectrum at the calibration frequencies.
    pub fn contrast(&self, s: &OdmrSpectrum) -> Result<f64, AnalysisError> {
        contrast_of(s, [self.f1, self.f2, self.f3])
    }
}

/// `T_ref + slope·(C − C_ref)`.
pub fn three_point_temperature(c: f64, cal: &ThreePointCalibration) -> f64 {
    cal.reference_temperature + cal.slope * (c - cal.reference_contrast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nvspin::{SpectrumMeta, SpectrumPoint};

    fn lorentz_dip(center: f64) -> impl Fn(f64) -> f64 {
        move |f: f64| {
            let u = 2.0 * (f - center) / 10.0;
            1000.0 * (1.0 - 0.05 / (1.0 + u * u))
        }
    }

    fn spectrum(center: f64) -> OdmrSpectrum {
        let dip = lorentz_dip(center);
        let points = (0..=200)
            .map(|i| {
                let f = 2800.0 + 0.5 * i as f64;
                SpectrumPoint { frequency: f, counts: dip(f), reference_counts: None }
            })
            .collect();
        OdmrSpectrum::new(points, SpectrumMeta::default()).unwrap()
    }

    #[test]
    fn equal_counts_give_zero() {
        assert_eq!(three_point_contrast(950.0, 950.0, 1000.0).unwrap(), 0.0);
        assert!(three_point_contrast(1000.0, 1000.0, 900.0).is_err());
    }

    #[test]
    fn shifted_dip_matches_analytic_lorentzian() {
        let dip = lorentz_dip(2872.0);
        let (f1, f2, f3) = (2865.0, 2875.0, 2820.0);
        let expect = three_point_contrast(dip(f1), dip(f2), dip(f3)).unwrap();
        let cal =
            ThreePointCalibration::from_spectra(2870.0, 10.0, f3, &spectrum(2870.0), 296.0, &spectrum(2866.0), 346.0)
                .unwrap();
        let got = cal.contrast(&spectrum(2872.0)).unwrap();
        assert!((got - expect).abs() < 1e-3, "{got} vs {expect}");
        assert!(expect > 0.0);
    }

    #[test]
    fn calibration_reproduces_anchors() {
        let cal = ThreePointCalibration::from_spectra(
            2870.0,
            10.0,
            2820.0,
            &spectrum(2870.0),
            296.0,
            &spectrum(2866.0),
            346.0,
        )
        .unwrap();
        assert!((three_point_temperature(cal.hot_contrast, &cal) - 346.0).abs() < 1e-9);
        assert!((three_point_temperature(cal.reference_contrast, &cal) - 296.0).abs() < 1e-9);
    }

    #[test]
    fn reference_too_close_rejected() {
        assert!(ThreePointCalibration::from_spectra(
            2870.0,
            10.0,
            2850.0,
            &spectrum(2870.0),
            296.0,
            &spectrum(2866.0),
            346.0
        )
        .is_err());
    }
}
