//! Dixon forward model: multi-peak fat modulation, the complex echo signal
//! and its magnitude-only reduction.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FAT_6PEAK_3T: &str = include_str!("../presets/fat_6peak_3t_v1.json");
const FAT_6PEAK_1P5T: &str = include_str!("../presets/fat_6peak_1p5t_v1.json");
const FAT_1PEAK_3T: &str = include_str!("../presets/fat_1peak_3t_v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatPeak {
    pub alpha: f64,
    pub f_hz: f64,
}

/// Fat spectrum with amplitudes normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FatSpectrum {
    peaks: Vec<FatPeak>,
}

impl FatSpectrum {
    /// Amplitudes must already sum to one within 1e-6.
    pub fn new(peaks: Vec<FatPeak>) -> Result<Self> {
        Self::validate(&peaks)?;
        let sum: f64 = peaks.iter().map(|p| p.alpha).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "fat peak amplitudes sum to {sum}, expected 1"
            )));
        }
        Ok(Self { peaks })
    }

    /// Rescales the amplitudes to sum to one.
    pub fn normalized(mut peaks: Vec<FatPeak>) -> Result<Self> {
        Self::validate(&peaks)?;
        let sum: f64 = peaks.iter().map(|p| p.alpha).sum();
        if sum <= 0.0 {
            return Err(Error::InvalidArgument(
                "fat peak amplitudes sum to zero".into(),
            ));
        }
        for p in &mut peaks {
            p.alpha /= sum;
        }
        Ok(Self { peaks })
    }

    fn validate(peaks: &[FatPeak]) -> Result<()> {
        if peaks.is_empty() {
            return Err(Error::InvalidArgument("fat spectrum has no peaks".into()));
        }
        for p in peaks {
            if !(p.alpha >= 0.0 && p.alpha.is_finite() && p.f_hz.is_finite()) {
                return Err(Error::InvalidArgument(format!("invalid fat peak {p:?}")));
            }
        }
        Ok(())
    }

    pub fn single_peak(f_hz: f64) -> Self {
        Self {
            peaks: vec![FatPeak { alpha: 1.0, f_hz }],
        }
    }

    /// Single methylene peak at -3.4 ppm, 3 T.
    pub fn single_peak_3t() -> Self {
        Self::from_json_str(FAT_1PEAK_3T).expect("bundled preset")
    }

    /// Six-peak liver fat model at 3 T.
    pub fn six_peak_3t() -> Self {
        Self::from_json_str(FAT_6PEAK_3T).expect("bundled preset")
    }

    /// Six-peak liver fat model at 1.5 T.
    pub fn six_peak_1p5t() -> Self {
        Self::from_json_str(FAT_6PEAK_1P5T).expect("bundled preset")
    }

    /// Looks up a bundled preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "6peak-3t" => Some(Self::six_peak_3t()),
            "6peak-1.5t" => Some(Self::six_peak_1p5t()),
            "1peak-3t" => Some(Self::single_peak_3t()),
            _ => None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let peaks: Vec<FatPeak> = serde_json::from_str(text)?;
        Self::normalized(peaks)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading fat spectrum {}", path.display()), e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.peaks).expect("peaks serialize")
    }

    pub fn peaks(&self) -> &[FatPeak] {
        &self.peaks
    }
}

impl Default for FatSpectrum {
    fn default() -> Self {
        Self::six_peak_3t()
    }
}

/// `sum_p alpha_p * exp(j 2 pi f_p t)`.
pub fn fat_modulation(spectrum: &FatSpectrum, t: f64) -> Complex64 {
    spectrum
        .peaks
        .iter()
        .map(|p| Complex64::from_polar(p.alpha, 2.0 * PI * p.f_hz * t))
        .sum()
}

/// Per-voxel ground truth of the complex signal model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexVoxelTruth {
    pub rho_w: f64,
    pub rho_f: f64,
    pub r2star: f64,
    #[serde(default)]
    pub psi: f64,
    #[serde(default)]
    pub phi0: f64,
}

impl ComplexVoxelTruth {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.rho_w, self.rho_f, self.r2star]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
            && self.psi.is_finite()
            && self.phi0.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid voxel truth {self:?}")))
        }
    }
}

pub fn complex_signal(truth: &ComplexVoxelTruth, spectrum: &FatSpectrum, t: f64) -> Complex64 {
    let chemical = truth.rho_w + truth.rho_f * fat_modulation(spectrum, t);
    let phase = Complex64::from_polar(1.0, 2.0 * PI * truth.psi * t + truth.phi0);
    chemical * phase * (-truth.r2star * t).exp()
}

/// `|rho_w + rho_f * c| * exp(-r2star * t)` for a precomputed fat modulation `c`.
#[inline]
pub fn magnitude_with_modulation(rho_w: f64, rho_f: f64, r2star: f64, c: Complex64, t: f64) -> f64 {
    let re = rho_w + rho_f * c.re;
    let im = rho_f * c.im;
    re.hypot(im) * (-r2star * t).exp()
}

/// Magnitude model value and its gradient with respect to
/// `(rho_w, rho_f, r2star)`. At exact cancellation the subgradient 0 is used
/// for the density components.
#[inline]
pub fn magnitude_and_gradient(
    rho_w: f64,
    rho_f: f64,
    r2star: f64,
    c: Complex64,
    t: f64,
) -> (f64, [f64; 3]) {
    let re = rho_w + rho_f * c.re;
    let im = rho_f * c.im;
    let modulus = re.hypot(im);
    let decay = (-r2star * t).exp();
    let value = modulus * decay;
    if modulus == 0.0 {
        return (0.0, [0.0, 0.0, 0.0]);
    }
    let d_rho_w = re / modulus * decay;
    let d_rho_f = (re * c.re + im * c.im) / modulus * decay;
    (value, [d_rho_w, d_rho_f, -t * value])
}

pub fn magnitude_signal(rho_w: f64, rho_f: f64, r2star: f64, spectrum: &FatSpectrum, t: f64) -> f64 {
    magnitude_with_modulation(rho_w, rho_f, r2star, fat_modulation(spectrum, t), t)
}

/// Fat modulation at each echo time.
pub fn modulations(spectrum: &FatSpectrum, echo_times_s: &[f64]) -> Vec<Complex64> {
    echo_times_s
        .iter()
        .map(|&t| fat_modulation(spectrum, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn modulation_at_zero_is_one() {
        for s in [FatSpectrum::six_peak_3t(), FatSpectrum::single_peak_3t()] {
            assert!(close(fat_modulation(&s, 0.0), Complex64::new(1.0, 0.0), 1e-12));
        }
    }

    #[test]
    fn single_peak_opposed_and_in_phase() {
        let s = FatSpectrum::single_peak(-434.0);
        let opposed = fat_modulation(&s, 1.0 / (2.0 * 434.0));
        let in_phase = fat_modulation(&s, 1.0 / 434.0);
        assert!(close(opposed, Complex64::new(-1.0, 0.0), 1e-12));
        assert!(close(in_phase, Complex64::new(1.0, 0.0), 1e-12));
    }

    #[test]
    fn presets_are_normalized() {
        for s in [FatSpectrum::six_peak_3t(), FatSpectrum::six_peak_1p5t()] {
            let sum: f64 = s.peaks().iter().map(|p| p.alpha).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert_eq!(s.peaks().len(), 6);
        }
        assert!((FatSpectrum::six_peak_3t().peaks()[1].f_hz + 434.29).abs() < 1e-9);
    }

    #[test]
    fn unnormalized_spectrum_rejected_by_new() {
        let peaks = vec![FatPeak { alpha: 0.5, f_hz: -434.0 }];
        assert!(FatSpectrum::new(peaks.clone()).is_err());
        assert!(FatSpectrum::normalized(peaks).is_ok());
        assert!(FatSpectrum::normalized(vec![]).is_err());
        assert!(FatSpectrum::normalized(vec![FatPeak { alpha: -1.0, f_hz: 0.0 }]).is_err());
    }

    #[test]
    fn water_only_without_decay_is_one() {
        let truth = ComplexVoxelTruth { rho_w: 1.0, ..Default::default() };
        for t in [0.0, 1e-3, 7.38e-3] {
            let s = complex_signal(&truth, &FatSpectrum::default(), t);
            assert!(close(s, Complex64::new(1.0, 0.0), 1e-14));
        }
    }

    #[test]
    fn decay_after_one_time_constant() {
        let truth = ComplexVoxelTruth { rho_w: 1.0, r2star: 100.0, ..Default::default() };
        let s = complex_signal(&truth, &FatSpectrum::default(), 0.01);
        assert!((s.re - (-1.0f64).exp()).abs() < 1e-15);
        assert!(s.im.abs() < 1e-15);
    }

    #[test]
    fn field_offset_changes_phase_only() {
        let spectrum = FatSpectrum::default();
        let base = ComplexVoxelTruth { rho_w: 0.7, rho_f: 0.3, r2star: 40.0, psi: 0.0, phi0: 0.0 };
        let shifted = ComplexVoxelTruth { psi: 100.0, phi0: 0.8, ..base };
        for t in [1.23e-3, 2.46e-3, 5.0e-3] {
            let a = complex_signal(&base, &spectrum, t);
            let b = complex_signal(&shifted, &spectrum, t);
            assert!((a.norm() - b.norm()).abs() < 1e-14);
            assert!((a - b).norm() > 1e-3);
        }
    }

    #[test]
    fn equal_densities_cancel_at_opposed_phase() {
        let s = FatSpectrum::single_peak(-434.0);
        let t = 1.0 / (2.0 * 434.0);
        assert!(magnitude_signal(1.0, 1.0, 0.0, &s, t).abs() < 1e-12);
    }

    #[test]
    fn fat_free_decay() {
        let s = FatSpectrum::default();
        for t in [0.0, 1e-3, 4e-3] {
            let m = magnitude_signal(2.0, 0.0, 80.0, &s, t);
            assert!((m - 2.0 * (-80.0 * t).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_value_function() {
        let c = fat_modulation(&FatSpectrum::default(), 3.69e-3);
        let (v, _) = magnitude_and_gradient(0.6, 0.4, 55.0, c, 3.69e-3);
        assert_eq!(v, magnitude_with_modulation(0.6, 0.4, 55.0, c, 3.69e-3));
    }
}
