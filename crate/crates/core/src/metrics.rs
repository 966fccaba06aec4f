//! Reconstruction quality metrics on water images and PDFF maps.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::maps::ParamMaps;
use crate::volume::{quantile, BinaryMask, ScalarVolume};

fn check(a: &ScalarVolume, b: &ScalarVolume, mask: &BinaryMask) -> Result<usize> {
    a.geometry().ensure_same(b.geometry(), "reference volume")?;
    a.geometry().ensure_same(mask.geometry(), "mask")?;
    match mask.count() {
        0 => Err(Error::Empty("metric mask has no voxels".into())),
        n => Ok(n),
    }
}

/// Share of mask voxels whose reconstructed water is strictly closer to the
/// reference water than to the reference fat.
pub fn fraction_correct(
    recon_w: &ScalarVolume,
    ref_w: &ScalarVolume,
    ref_f: &ScalarVolume,
    mask: &BinaryMask,
) -> Result<f64> {
    let n = check(recon_w, ref_w, mask)?;
    ref_w.geometry().ensure_same(ref_f.geometry(), "reference fat")?;
    let correct = (0..recon_w.len())
        .filter(|&i| {
            let r = recon_w.get(i) as f64;
            mask.get(i) && (r - ref_w.get(i) as f64).abs() < (r - ref_f.get(i) as f64).abs()
        })
        .count();
    Ok(correct as f64 / n as f64)
}

/// Masked mean squared error.
pub fn mse(recon: &ScalarVolume, reference: &ScalarVolume, mask: &BinaryMask) -> Result<f64> {
    let n = check(recon, reference, mask)?;
    let sum: f64 = (0..recon.len())
        .filter(|&i| mask.get(i))
        .map(|i| {
            let d = recon.get(i) as f64 - reference.get(i) as f64;
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// `10 log10(range^2 / mse)`; `+inf` when `mse` is zero.
pub fn psnr_from_mse(mse: f64, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::InvalidArgument(format!("data range must be positive, got {data_range}")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

pub fn psnr(recon: &ScalarVolume, reference: &ScalarVolume, mask: &BinaryMask, data_range: f64) -> Result<f64> {
    psnr_from_mse(mse(recon, reference, mask)?, data_range)
}

/// 99.9th percentile of the reference inside the mask.
pub fn data_range(reference: &ScalarVolume, mask: &BinaryMask) -> Result<f64> {
    reference.geometry().ensure_same(mask.geometry(), "mask")?;
    let values: Vec<f32> = (0..reference.len())
        .filter(|&i| mask.get(i))
        .map(|i| reference.get(i))
        .collect();
    quantile(&values, 0.999)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Odd in-plane window width.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Defaults to [`data_range`] of the reference.
    pub data_range: Option<f64>,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, data_range: None }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size * size)
        .map(|n| {
            let (a, b) = ((n / size) as f64 - half, (n % size) as f64 - half);
            (-(a * a + b * b) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean local SSIM over in-mask window centres, with 2-D Gaussian windows
/// in each slice along the third axis. Only centres whose window fits
/// inside the slice contribute.
pub fn ssim(recon: &ScalarVolume, reference: &ScalarVolume, mask: &BinaryMask, params: &SsimParams) -> Result<f64> {
    check(recon, reference, mask)?;
    let g = *recon.geometry();
    let [d0, d1, d2] = g.dims;
    let size = params.window;
    if size == 0 || size % 2 == 0 {
        return Err(Error::InvalidArgument(format!("window size must be odd, got {size}")));
    }
    if d0 < size || d1 < size {
        return Err(Error::Geometry(format!(
            "slice {d0}x{d1} is smaller than the {size}x{size} window"
        )));
    }
    let range = match params.data_range {
        Some(r) => r,
        None => data_range(reference, mask)?,
    };
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::InvalidArgument(format!("data range must be positive, got {range}")));
    }
    let c1 = (params.k1 * range).powi(2);
    let c2 = (params.k2 * range).powi(2);
    let weights = gaussian_window(size, params.sigma);
    let half = size / 2;

    let per_slice: Vec<(f64, usize)> = (0..d2)
        .into_par_iter()
        .map(|k| {
            let mut sum = 0.0;
            let mut count = 0;
            for i in half..d0 - half {
                for j in half..d1 - half {
                    if !mask.get(g.index(i, j, k)) {
                        continue;
                    }
                    let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for a in 0..size {
                        for b in 0..size {
                            let idx = g.index(i + a - half, j + b - half, k);
                            let w = weights[a * size + b];
                            let x = recon.get(idx) as f64;
                            let y = reference.get(idx) as f64;
                            mx += w * x;
                            my += w * y;
                            mxx += w * x * x;
                            myy += w * y * y;
                            mxy += w * x * y;
                        }
                    }
                    let vx = mxx - mx * mx;
                    let vy = myy - my * my;
                    let cxy = mxy - mx * my;
                    sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    count += 1;
                }
            }
            (sum, count)
        })
        .collect();
    let (sum, count) = per_slice.iter().fold((0.0, 0), |(s, c), &(a, b)| (s + a, c + b));
    if count == 0 {
        return Err(Error::Empty("no in-mask window centres".into()));
    }
    Ok(sum / count as f64)
}

/// `100 * mean |pdff_recon - pdff_ref|` over `region`.
pub fn pdff_mae(recon: &ParamMaps, reference: &ParamMaps, region: &BinaryMask) -> Result<f64> {
    let n = check(&recon.pdff, &reference.pdff, region)?;
    let sum: f64 = (0..region.len())
        .filter(|&i| region.get(i))
        .map(|i| (recon.pdff.get(i) as f64 - reference.pdff.get(i) as f64).abs())
        .sum();
    Ok(100.0 * sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionMae {
    pub region: String,
    pub mae_percent: f64,
}

fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub fraction_correct: f64,
    pub ssim: f64,
    /// `+inf` (written as `"inf"`) for a perfect reconstruction.
    #[serde(serialize_with = "serialize_db")]
    pub psnr_db: f64,
    pub mse: f64,
    pub pdff_mae_percent: Vec<RegionMae>,
}

impl MetricReport {
    /// Water-image metrics over `mask` plus PDFF MAE per named region.
    pub fn compute(
        recon: &ParamMaps,
        reference: &ParamMaps,
        mask: &BinaryMask,
        regions: &[(String, BinaryMask)],
    ) -> Result<Self> {
        let range = data_range(&reference.rho_w, mask)?;
        let mse = mse(&recon.rho_w, &reference.rho_w, mask)?;
        Ok(Self {
            fraction_correct: fraction_correct(&recon.rho_w, &reference.rho_w, &reference.rho_f, mask)?,
            ssim: ssim(
                &recon.rho_w,
                &reference.rho_w,
                mask,
                &SsimParams { data_range: Some(range), ..Default::default() },
            )?,
            psnr_db: psnr_from_mse(mse, range)?,
            mse,
            pdff_mae_percent: regions
                .iter()
                .map(|(name, region)| {
                    Ok(RegionMae { region: name.clone(), mae_percent: pdff_mae(recon, reference, region)? })
                })
                .collect::<Result<_>>()?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["fraction_correct", "ssim", "psnr_db", "mse"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        cols.extend(self.pdff_mae_percent.iter().map(|r| format!("pdff_mae_{}", r.region)));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let psnr = if self.psnr_db.is_infinite() { "inf".to_string() } else { self.psnr_db.to_string() };
        let mut cols = vec![
            self.fraction_correct.to_string(),
            self.ssim.to_string(),
            psnr,
            self.mse.to_string(),
        ];
        cols.extend(self.pdff_mae_percent.iter().map(|r| r.mae_percent.to_string()));
        cols.join(",")
    }
}
