//! Voxelwise magnitude-only water-fat fitting.
//!
//! * [`fit_mago`]: Gaussian least squares from a water-dominant and a
//!   fat-dominant start, keeping the smaller residual.
//! * [`smooth_residual_select`]: the same choice made on boxcar-smoothed
//!   residuals.
//! * [`fit_magorino`]: two-start fit of the Rician likelihood.
//! * [`fit_mago_sp`]: single fit started from a predicted water image, with
//!   either objective.
//!
//! All voxel fits are independent; output is identical for any thread count.

mod noise;
mod objective;
mod voxel;

pub use noise::{estimate_sigma_background, RicianNoiseModel, SigmaEstimation, MIN_BACKGROUND_VOXELS};
pub use objective::{
    gaussian_with_gradient, rician_nll_sample, rician_nll_sample_dnu, rician_with_gradient,
    Objective, VoxelData,
};
pub use voxel::{
    fit_voxel, fit_voxel_data, prior_init, reference_magnitude, two_start_inits, FitConfig,
    VoxelParams,
};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::{Basin, FitFlags, ParamMaps};
use crate::signal::{modulations, FatSpectrum};
use crate::volume::{BinaryMask, MultiEchoVolume, ScalarVolume, VolumeGeometry};

/// Gaussian sum of squared residuals at `params`.
pub fn gaussian_objective(
    params: &VoxelParams,
    magnitudes: &[f64],
    echo_times_s: &[f64],
    spectrum: &FatSpectrum,
) -> f64 {
    let mods = modulations(spectrum, echo_times_s);
    let data = VoxelData { magnitudes, echo_times_s, modulations: &mods };
    gaussian_with_gradient([params.rho_w, params.rho_f, params.r2star], &data).0
}

/// Rician negative log-likelihood at `params`.
pub fn rician_negloglik(
    params: &VoxelParams,
    noise: &RicianNoiseModel,
    magnitudes: &[f64],
    echo_times_s: &[f64],
    spectrum: &FatSpectrum,
) -> f64 {
    let mods = modulations(spectrum, echo_times_s);
    let data = VoxelData { magnitudes, echo_times_s, modulations: &mods };
    rician_with_gradient([params.rho_w, params.rho_f, params.r2star], noise.sigma, &data).0
}

struct Prepared {
    times: Vec<f64>,
    mods: Vec<Complex64>,
}

impl Prepared {
    fn new(m: &MultiEchoVolume, spectrum: &FatSpectrum) -> Self {
        let times = m.echo_times_s();
        let mods = modulations(spectrum, &times);
        Self { times, mods }
    }

    fn data<'a>(&'a self, magnitudes: &'a [f64]) -> VoxelData<'a> {
        VoxelData { magnitudes, echo_times_s: &self.times, modulations: &self.mods }
    }
}

fn check_inputs(m: &MultiEchoVolume, mask: &BinaryMask, config: &FitConfig) -> Result<()> {
    config.validate()?;
    m.geometry().ensure_same(mask.geometry(), "fit mask")?;
    if m.n_echoes() < 3 {
        return Err(Error::InvalidArgument(format!(
            "R2*-inclusive fitting needs at least 3 echoes, got {}",
            m.n_echoes()
        )));
    }
    Ok(())
}

fn assemble(geometry: VolumeGeometry, fits: Vec<Option<VoxelParams>>) -> Result<ParamMaps> {
    let field = |f: fn(&VoxelParams) -> f64| {
        ScalarVolume::new(
            geometry,
            fits.iter().map(|p| p.as_ref().map_or(0.0, |p| f(p) as f32)).collect(),
        )
    };
    let basin = fits.iter().map(|p| p.as_ref().map_or(Basin::Unfitted, |p| p.basin)).collect();
    let flags = fits
        .iter()
        .map(|p| match p {
            Some(p) if !p.converged => FitFlags::NOT_CONVERGED,
            _ => FitFlags::NONE,
        })
        .collect();
    ParamMaps::from_parts(
        field(|p| p.rho_w)?,
        field(|p| p.rho_f)?,
        field(|p| p.r2star)?,
        field(|p| p.residual)?,
        basin,
        flags,
    )
}

/// Runs `fit` on every in-mask voxel in parallel; order of results is the
/// voxel order regardless of scheduling.
fn map_voxels<F>(m: &MultiEchoVolume, mask: &BinaryMask, fit: F) -> Vec<Option<VoxelParams>>
where
    F: Fn(usize, &[f64]) -> VoxelParams + Sync,
{
    (0..m.geometry().len())
        .into_par_iter()
        .map(|idx| mask.get(idx).then(|| fit(idx, &m.voxel_signal(idx))))
        .collect()
}

/// Full-volume solutions from the water-dominant and from the fat-dominant
/// start, `(water_start, fat_start)`.
pub fn fit_two_starts(
    m: &MultiEchoVolume,
    mask: &BinaryMask,
    config: &FitConfig,
    spectrum: &FatSpectrum,
    objective: Objective,
) -> Result<(ParamMaps, ParamMaps)> {
    check_inputs(m, mask, config)?;
    let prep = Prepared::new(m, spectrum);
    let pairs: Vec<Option<[VoxelParams; 2]>> = (0..m.geometry().len())
        .into_par_iter()
        .map(|idx| {
            mask.get(idx).then(|| {
                let signal = m.voxel_signal(idx);
                let data = prep.data(&signal);
                two_start_inits(&signal, config)
                    .map(|init| fit_voxel_data(&objective, &init, config, &data))
            })
        })
        .collect();
    let g = *m.geometry();
    let water = assemble(g, pairs.iter().map(|p| p.map(|p| p[0])).collect())?;
    let fat = assemble(g, pairs.iter().map(|p| p.map(|p| p[1])).collect())?;
    Ok((water, fat))
}

fn pick(maps_w: &ParamMaps, maps_f: &ParamMaps, take_fat: impl Fn(usize) -> bool) -> Result<ParamMaps> {
    let g = *maps_w.geometry();
    g.ensure_same(maps_f.geometry(), "basin maps")?;
    let n = g.len();
    let choose = |a: &ScalarVolume, b: &ScalarVolume| {
        ScalarVolume::new(g, (0..n).map(|i| if take_fat(i) { b.get(i) } else { a.get(i) }).collect())
    };
    let basin = (0..n)
        .map(|i| if take_fat(i) { maps_f.basin[i] } else { maps_w.basin[i] })
        .collect();
    let flags = (0..n)
        .map(|i| {
            let mut f = if take_fat(i) { maps_f.flags[i] } else { maps_w.flags[i] };
            f.0 &= !FitFlags::NO_SIGNAL.0;
            f
        })
        .collect();
    ParamMaps::from_parts(
        choose(&maps_w.rho_w, &maps_f.rho_w)?,
        choose(&maps_w.rho_f, &maps_f.rho_f)?,
        choose(&maps_w.r2star, &maps_f.r2star)?,
        choose(&maps_w.residual, &maps_f.residual)?,
        basin,
        flags,
    )
}

/// Per voxel, the basin with the smaller residual (ties keep the water start).
pub fn select_min_residual(maps_w: &ParamMaps, maps_f: &ParamMaps) -> Result<ParamMaps> {
    pick(maps_w, maps_f, |i| maps_f.residual.get(i) < maps_w.residual.get(i))
}

/// Two-start Gaussian fit keeping the smaller-residual solution per voxel.
pub fn fit_mago(
    m: &MultiEchoVolume,
    mask: &BinaryMask,
    config: &FitConfig,
    spectrum: &FatSpectrum,
) -> Result<ParamMaps> {
    let (w, f) = fit_two_starts(m, mask, config, spectrum, Objective::Gaussian)?;
    select_min_residual(&w, &f)
}

/// Two-start Rician-likelihood fit keeping the smaller negative
/// log-likelihood per voxel.
pub fn fit_magorino(
    m: &MultiEchoVolume,
    mask: &BinaryMask,
    config: &FitConfig,
    spectrum: &FatSpectrum,
    noise: &RicianNoiseModel,
) -> Result<ParamMaps> {
    let (w, f) = fit_two_starts(m, mask, config, spectrum, Objective::Rician { sigma: noise.sigma })?;
    select_min_residual(&w, &f)
}

/// Sum of `values` over the in-mask part of the `(2r+1)^3` cube around each
/// voxel, with the matching in-mask count. Separable, fixed summation order.
fn box_sum(g: &VolumeGeometry, values: &[f64], radius: usize) -> Vec<f64> {
    let mut cur = values.to_vec();
    for axis in 0..3 {
        let mut next = vec![0.0; cur.len()];
        let len = g.dims[axis];
        for idx in 0..cur.len() {
            let c = g.coords(idx);
            let lo = c[axis].saturating_sub(radius);
            let hi = (c[axis] + radius).min(len - 1);
            let mut acc = 0.0;
            for p in lo..=hi {
                let mut q = c;
                q[axis] = p;
                acc += cur[g.index(q[0], q[1], q[2])];
            }
            next[idx] = acc;
        }
        cur = next;
    }
    cur
}

/// Basin choice on residuals averaged over the in-mask `(2r+1)^3`
/// neighbourhood. Radius 0 reduces to [`select_min_residual`].
pub fn smooth_residual_select(
    maps_w: &ParamMaps,
    maps_f: &ParamMaps,
    kernel_radius: usize,
) -> Result<ParamMaps> {
    let g = *maps_w.geometry();
    g.ensure_same(maps_f.geometry(), "basin maps")?;
    if kernel_radius == 0 {
        return select_min_residual(maps_w, maps_f);
    }
    let in_mask: Vec<f64> =
        maps_w.basin.iter().map(|b| if *b == Basin::Unfitted { 0.0 } else { 1.0 }).collect();
    let masked = |maps: &ParamMaps| -> Vec<f64> {
        (0..g.len()).map(|i| in_mask[i] * maps.residual.get(i) as f64).collect()
    };
    let sum_w = box_sum(&g, &masked(maps_w), kernel_radius);
    let sum_f = box_sum(&g, &masked(maps_f), kernel_radius);
    // Both sums share the in-mask count, so comparing sums compares means.
    pick(maps_w, maps_f, |i| in_mask[i] > 0.0 && sum_f[i] < sum_w[i])
}

/// Single fit per voxel started from a predicted water image.
pub fn fit_mago_sp(
    m: &MultiEchoVolume,
    prior: &ScalarVolume,
    mask: &BinaryMask,
    config: &FitConfig,
    spectrum: &FatSpectrum,
    objective: Objective,
) -> Result<ParamMaps> {
    check_inputs(m, mask, config)?;
    m.geometry().ensure_same(prior.geometry(), "signal prior")?;
    if prior.data().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("signal prior must be nonnegative".into()));
    }
    let prep = Prepared::new(m, spectrum);
    let fits = map_voxels(m, mask, |idx, signal| {
        let data = prep.data(signal);
        let init = prior_init(prior.get(idx) as f64, config, &data);
        fit_voxel_data(&objective, &init, config, &data)
    });
    assemble(*m.geometry(), fits)
}
