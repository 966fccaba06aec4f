use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, MultiEchoVolume};

/// Minimum number of background voxels for a noise estimate.
pub const MIN_BACKGROUND_VOXELS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaEstimation {
    Fixed,
    BackgroundEstimated,
}

/// Global Rician noise level for likelihood-based fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianNoiseModel {
    pub sigma: f64,
    pub estimation: SigmaEstimation,
}

impl RicianNoiseModel {
    pub fn fixed(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma, estimation: SigmaEstimation::Fixed })
    }

    pub fn from_background(m: &MultiEchoVolume, body: &BinaryMask) -> Result<Self> {
        Ok(Self {
            sigma: estimate_sigma_background(m, body)?,
            estimation: SigmaEstimation::BackgroundEstimated,
        })
    }
}

/// Noise standard deviation from the mean first-echo magnitude outside the
/// body, assuming Rayleigh-distributed background: `mean / sqrt(pi / 2)`.
pub fn estimate_sigma_background(m: &MultiEchoVolume, body: &BinaryMask) -> Result<f64> {
    m.geometry().ensure_same(body.geometry(), "body mask")?;
    let first = &m.echoes()[0];
    let (count, sum) = (0..first.len())
        .filter(|&i| !body.get(i))
        .fold((0usize, 0.0f64), |(c, s), i| (c + 1, s + first.get(i) as f64));
    if count < MIN_BACKGROUND_VOXELS {
        return Err(Error::InvalidArgument(format!(
            "noise estimate needs at least {MIN_BACKGROUND_VOXELS} background voxels, found {count}"
        )));
    }
    let sigma = sum / count as f64 / (std::f64::consts::PI / 2.0).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(
            "background is exactly zero; noise sigma must be positive".into(),
        ));
    }
    Ok(sigma)
}
