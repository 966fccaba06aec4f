use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::objective::{Objective, VoxelData};
use crate::error::{Error, Result};
use crate::maps::Basin;
use crate::optim::{self, Bounds, Termination};
use crate::signal::{magnitude_with_modulation, modulations, FatSpectrum};

/// R2* is optimized in units of this many 1/s so all three coordinates have
/// comparable magnitude.
const R2STAR_UNIT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Upper bound on each density as a multiple of the voxel's reference
    /// (brightest echo) magnitude. Lower bounds are 0.
    pub rho_upper_factor: f64,
    /// Upper bound on R2* in 1/s. Lower bound is 0.
    pub r2star_max: f64,
    pub max_iterations: usize,
    /// Infinity norm of the projected gradient, in reference-scaled units.
    pub gradient_tolerance: f64,
    /// Infinity norm of an accepted step, in reference-scaled units.
    pub step_tolerance: f64,
    /// Longest trial step, in reference-scaled units. Keeps a start from
    /// jumping across the barrier into the other basin.
    pub max_step: f64,
    /// Minor-species fraction of the two-start inits.
    pub init_fraction: f64,
    /// R2* of the two-start inits, 1/s.
    pub r2star_init: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rho_upper_factor: 4.0,
            r2star_max: 500.0,
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            max_step: 0.2,
            init_fraction: 0.01,
            r2star_init: 50.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho_upper_factor > 0.0
            && self.r2star_max > 0.0
            && self.max_iterations > 0
            && self.gradient_tolerance > 0.0
            && self.step_tolerance > 0.0
            && self.max_step > 0.0
            && (0.0..1.0).contains(&self.init_fraction)
            && (0.0..=self.r2star_max).contains(&self.r2star_init);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid fit config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelParams {
    pub rho_w: f64,
    pub rho_f: f64,
    pub r2star: f64,
    /// Objective value at the solution, in data units.
    pub residual: f64,
    pub basin: Basin,
    pub converged: bool,
    pub iterations: usize,
}

impl VoxelParams {
    pub fn init(rho_w: f64, rho_f: f64, r2star: f64, basin: Basin) -> Self {
        Self {
            rho_w,
            rho_f,
            r2star,
            residual: f64::NAN,
            basin,
            converged: false,
            iterations: 0,
        }
    }

    pub fn pdff(&self) -> f64 {
        crate::maps::pdff(self.rho_w, self.rho_f)
    }
}

/// Brightest echo magnitude: the scale for bounds and inits.
pub fn reference_magnitude(magnitudes: &[f64]) -> f64 {
    magnitudes.iter().fold(0.0, |m, &v| m.max(v))
}

/// Water-dominant and fat-dominant two-start inits.
pub fn two_start_inits(magnitudes: &[f64], config: &FitConfig) -> [VoxelParams; 2] {
    let m0 = reference_magnitude(magnitudes);
    let eps = config.init_fraction;
    [
        VoxelParams::init(m0, eps * m0, config.r2star_init, Basin::WaterDominantInit),
        VoxelParams::init(eps * m0, m0, config.r2star_init, Basin::FatDominantInit),
    ]
}

const PRIOR_SCAN_FAT_STEPS: usize = 40;
const PRIOR_SCAN_R2STAR_STEPS: usize = 20;

/// Single prior-based init: water from the prior; fat and R2* from a coarse
/// scan of the squared residual over their box with water held fixed.
pub fn prior_init(prior_water: f64, config: &FitConfig, data: &VoxelData) -> VoxelParams {
    let m0 = reference_magnitude(data.magnitudes);
    let w = prior_water.clamp(0.0, config.rho_upper_factor * m0);
    let n = data.len();
    let r2_grid = |ri: usize| config.r2star_max * ri as f64 / PRIOR_SCAN_R2STAR_STEPS as f64;
    // The model factorises into |w + f c_i| times exp(-r2 t_i).
    let decay: Vec<f64> = (0..=PRIOR_SCAN_R2STAR_STEPS)
        .flat_map(|ri| (0..n).map(move |i| (-r2_grid(ri) * data.echo_times_s[i]).exp()))
        .collect();
    let mut best = (f64::INFINITY, 0.0, 0.5 * config.r2star_max);
    let mut amp = vec![0.0; n];
    for fi in 0..=PRIOR_SCAN_FAT_STEPS {
        let f = config.rho_upper_factor * m0 * fi as f64 / PRIOR_SCAN_FAT_STEPS as f64;
        for (i, a) in amp.iter_mut().enumerate() {
            *a = magnitude_with_modulation(w, f, 0.0, data.modulations[i], 0.0);
        }
        for ri in 0..=PRIOR_SCAN_R2STAR_STEPS {
            let e = &decay[ri * n..(ri + 1) * n];
            let v: f64 = (0..n).map(|i| (amp[i] * e[i] - data.magnitudes[i]).powi(2)).sum();
            if v < best.0 {
                best = (v, f, r2_grid(ri));
            }
        }
    }
    VoxelParams::init(w, best.1, best.2, Basin::PriorInit)
}

/// Fits one voxel from `init` with precomputed fat modulations.
pub fn fit_voxel_data(
    objective: &Objective,
    init: &VoxelParams,
    config: &FitConfig,
    data: &VoxelData,
) -> VoxelParams {
    let scale = reference_magnitude(data.magnitudes);
    if scale <= 0.0 {
        let p = [0.0, 0.0, init.r2star.clamp(0.0, config.r2star_max)];
        return VoxelParams {
            rho_w: 0.0,
            rho_f: 0.0,
            r2star: p[2],
            residual: objective.evaluate(p, data).0,
            basin: init.basin,
            converged: true,
            iterations: 0,
        };
    }

    let scaled: Vec<f64> = data.magnitudes.iter().map(|m| m / scale).collect();
    let scaled_data = VoxelData { magnitudes: &scaled, ..*data };
    let scaled_objective = objective.rescaled(scale);
    let bounds = Bounds {
        lower: [0.0; 3],
        upper: [config.rho_upper_factor, config.rho_upper_factor, config.r2star_max / R2STAR_UNIT],
    };
    let x0 = [init.rho_w / scale, init.rho_f / scale, init.r2star / R2STAR_UNIT];
    let options = optim::Options {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        step_tolerance: config.step_tolerance,
        max_step: config.max_step,
    };
    let f = |x: &[f64; 3]| {
        let (v, g) = scaled_objective.evaluate([x[0], x[1], x[2] * R2STAR_UNIT], &scaled_data);
        (v, [g[0], g[1], g[2] * R2STAR_UNIT])
    };
    let min = optim::minimize(f, x0, &bounds, &options);

    let p = [min.x[0] * scale, min.x[1] * scale, min.x[2] * R2STAR_UNIT];
    VoxelParams {
        rho_w: p[0],
        rho_f: p[1],
        r2star: p[2],
        residual: objective.evaluate(p, data).0,
        basin: init.basin,
        converged: min.termination != Termination::MaxIterations,
        iterations: min.iterations,
    }
}

/// Fits one voxel's magnitudes from `init`. Returns a local minimum of the
/// objective inside the box; `converged == false` flags an iteration cap hit.
pub fn fit_voxel(
    objective: &Objective,
    init: &VoxelParams,
    config: &FitConfig,
    magnitudes: &[f64],
    echo_times_s: &[f64],
    spectrum: &FatSpectrum,
) -> Result<VoxelParams> {
    if magnitudes.len() != echo_times_s.len() {
        return Err(Error::InvalidArgument(format!(
            "{} magnitudes for {} echo times",
            magnitudes.len(),
            echo_times_s.len()
        )));
    }
    config.validate()?;
    let mods: Vec<Complex64> = modulations(spectrum, echo_times_s);
    let data = VoxelData { magnitudes, echo_times_s, modulations: &mods };
    Ok(fit_voxel_data(objective, init, config, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::magnitude_signal;
    use crate::volume::default_echo_times_ms;

    fn times() -> Vec<f64> {
        default_echo_times_ms(6).iter().map(|t| t * 1e-3).collect()
    }

    fn synth(w: f64, f: f64, r2: f64, s: &FatSpectrum, t: &[f64]) -> Vec<f64> {
        t.iter().map(|&ti| magnitude_signal(w, f, r2, s, ti)).collect()
    }

    #[test]
    fn noiseless_water_only_round_trip() {
        let s = FatSpectrum::default();
        let t = times();
        let m = synth(120.0, 0.0, 40.0, &s, &t);
        let init = VoxelParams::init(110.0, 1.0, 60.0, Basin::WaterDominantInit);
        let p = fit_voxel(&Objective::Gaussian, &init, &FitConfig::default(), &m, &t, &s).unwrap();
        assert!(p.converged);
        assert!((p.rho_w / 120.0 - 1.0).abs() < 1e-6, "{p:?}");
        assert!(p.rho_f < 1e-6 * 120.0, "{p:?}");
        assert!((p.r2star / 40.0 - 1.0).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn init_at_minimum_is_unchanged() {
        let s = FatSpectrum::default();
        let t = times();
        let m = synth(70.0, 30.0, 80.0, &s, &t);
        let init = VoxelParams::init(70.0, 30.0, 80.0, Basin::PriorInit);
        let config = FitConfig::default();
        let p = fit_voxel(&Objective::Gaussian, &init, &config, &m, &t, &s).unwrap();
        let scale = reference_magnitude(&m);
        assert!((p.rho_w - 70.0).abs() / scale < 1e-9);
        assert!((p.rho_f - 30.0).abs() / scale < 1e-9);
        assert!((p.r2star - 80.0).abs() < 1e-7);
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let s = FatSpectrum::default();
        let t = times();
        let m = synth(70.0, 30.0, 80.0, &s, &t);
        let config = FitConfig { max_iterations: 2, ..FitConfig::default() };
        let init = two_start_inits(&m, &config)[1];
        let p = fit_voxel(&Objective::Gaussian, &init, &config, &m, &t, &s).unwrap();
        assert!(!p.converged);
        assert!(p.residual.is_finite());
    }

    #[test]
    fn zero_signal_voxel_returns_zero_densities() {
        let s = FatSpectrum::default();
        let t = times();
        let m = vec![0.0; 6];
        let init = VoxelParams::init(0.0, 0.0, 50.0, Basin::WaterDominantInit);
        let p = fit_voxel(&Objective::Gaussian, &init, &FitConfig::default(), &m, &t, &s).unwrap();
        assert_eq!((p.rho_w, p.rho_f), (0.0, 0.0));
        assert_eq!(p.residual, 0.0);
    }

    #[test]
    fn prior_init_scans_fat_and_r2star() {
        let s = FatSpectrum::default();
        let t = times();
        let m = synth(50.05, 49.95, 40.0, &s, &t);
        let c = modulations(&s, &t);
        let data = VoxelData { magnitudes: &m, echo_times_s: &t, modulations: &c };
        let config = FitConfig::default();
        let init = prior_init(50.05, &config, &data);
        assert_eq!(init.rho_w, 50.05);
        assert_eq!(init.basin, Basin::PriorInit);
        let p = fit_voxel_data(&Objective::Gaussian, &init, &config, &data);
        assert!((p.pdff() - 0.4995).abs() < 1e-4, "{p:?}");
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let s = FatSpectrum::default();
        let init = VoxelParams::init(1.0, 0.0, 50.0, Basin::WaterDominantInit);
        assert!(fit_voxel(&Objective::Gaussian, &init, &FitConfig::default(), &[1.0, 2.0], &[1e-3], &s).is_err());
    }
}
