//! Per-voxel fitting objectives over `(rho_w, rho_f, r2star)`.

use num_complex::Complex64;

use crate::bessel::{i1_over_i0, ln_i0};
use crate::signal::magnitude_and_gradient;

/// Noise-model choice for a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Sum of squared magnitude residuals.
    Gaussian,
    /// Rician negative log-likelihood with noise standard deviation `sigma`.
    Rician { sigma: f64 },
}

/// One voxel's measured echoes with the fat modulation at each echo time.
#[derive(Debug, Clone, Copy)]
pub struct VoxelData<'a> {
    pub magnitudes: &'a [f64],
    pub echo_times_s: &'a [f64],
    pub modulations: &'a [Complex64],
}

impl VoxelData<'_> {
    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }
}

/// `sum_i (|s(t_i)| - m_i)^2` and its gradient.
pub fn gaussian_with_gradient(p: [f64; 3], data: &VoxelData) -> (f64, [f64; 3]) {
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    for i in 0..data.len() {
        let (model, dm) =
            magnitude_and_gradient(p[0], p[1], p[2], data.modulations[i], data.echo_times_s[i]);
        let r = model - data.magnitudes[i];
        value += r * r;
        for k in 0..3 {
            grad[k] += 2.0 * r * dm[k];
        }
    }
    (value, grad)
}

/// Negative log of the Rician density of magnitude `m` given noiseless
/// magnitude `nu`. For `m == 0` the parameter-free `-ln(m / sigma^2)` term
/// is dropped (the density vanishes there for every `nu`).
pub fn rician_nll_sample(m: f64, nu: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let log_term = if m > 0.0 { -(m / s2).ln() } else { 0.0 };
    log_term + (m * m + nu * nu) / (2.0 * s2) - ln_i0(m * nu / s2)
}

/// Derivative of [`rician_nll_sample`] with respect to `nu`.
pub fn rician_nll_sample_dnu(m: f64, nu: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    nu / s2 - (m / s2) * i1_over_i0(m * nu / s2)
}

/// Rician negative log-likelihood summed over echoes, and its gradient.
pub fn rician_with_gradient(p: [f64; 3], sigma: f64, data: &VoxelData) -> (f64, [f64; 3]) {
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    for i in 0..data.len() {
        let (model, dm) =
            magnitude_and_gradient(p[0], p[1], p[2], data.modulations[i], data.echo_times_s[i]);
        let m = data.magnitudes[i];
        value += rician_nll_sample(m, model, sigma);
        let dnu = rician_nll_sample_dnu(m, model, sigma);
        for k in 0..3 {
            grad[k] += dnu * dm[k];
        }
    }
    (value, grad)
}

impl Objective {
    pub fn evaluate(&self, p: [f64; 3], data: &VoxelData) -> (f64, [f64; 3]) {
        match *self {
            Objective::Gaussian => gaussian_with_gradient(p, data),
            Objective::Rician { sigma } => rician_with_gradient(p, sigma, data),
        }
    }

    /// The same objective for data divided by `scale`.
    pub(crate) fn rescaled(&self, scale: f64) -> Objective {
        match *self {
            Objective::Gaussian => Objective::Gaussian,
            Objective::Rician { sigma } => Objective::Rician { sigma: sigma / scale },
        }
    }
}
