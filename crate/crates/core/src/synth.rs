//! Synthetic water-fat swaps: thresholded Perlin fields blend water and fat
//! volumes into a complementary swapped pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::perlin::{perlin3d, PerlinField};
use crate::volume::{BinaryMask, ScalarVolume};

pub const DEFAULT_THRESHOLD_RANGE: [f64; 2] = [0.1, 0.6];

/// Voxels whose field value exceeds `threshold`.
pub fn threshold_to_mask(field: &PerlinField, threshold: f64) -> BinaryMask {
    BinaryMask::from_fn(*field.geometry(), |i| field.values.get(i) as f64 > threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapFixture {
    pub water: ScalarVolume,
    pub fat: ScalarVolume,
    pub kappa: BinaryMask,
    pub threshold: f64,
}

/// Exchanges water and fat wherever `kappa` is set. Applying it twice with
/// the same mask restores the inputs.
pub fn blend_swap(
    x_water: &ScalarVolume,
    x_fat: &ScalarVolume,
    kappa: &BinaryMask,
) -> Result<(ScalarVolume, ScalarVolume)> {
    let g = *x_water.geometry();
    g.ensure_same(x_fat.geometry(), "fat volume")?;
    g.ensure_same(kappa.geometry(), "swap mask")?;
    let pick = |swap_src: &ScalarVolume, keep_src: &ScalarVolume| {
        ScalarVolume::from_fn(g, |i| if kappa.get(i) { swap_src.get(i) } else { keep_src.get(i) })
    };
    Ok((pick(x_fat, x_water)?, pick(x_water, x_fat)?))
}

/// Draws a threshold uniformly from `threshold_range`, thresholds a Perlin
/// field of the given lattice spacing and swaps the inputs inside it.
pub fn synthesize_swap(
    x_water: &ScalarVolume,
    x_fat: &ScalarVolume,
    spacing: usize,
    threshold_range: [f64; 2],
    seed: u64,
) -> Result<SwapFixture> {
    let [lo, hi] = threshold_range;
    if !(lo.is_finite() && hi.is_finite() && -1.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold range must satisfy -1 <= lo <= hi <= 1, got [{lo}, {hi}]"
        )));
    }
    x_water.geometry().ensure_same(x_fat.geometry(), "fat volume")?;
    if x_water.data().iter().chain(x_fat.data()).any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("water and fat volumes must be nonnegative".into()));
    }
    let field = perlin3d(x_water.geometry(), spacing, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let threshold = if lo == hi { lo } else { rng.gen_range(lo..hi) };
    let kappa = threshold_to_mask(&field, threshold);
    let (water, fat) = blend_swap(x_water, x_fat, &kappa)?;
    Ok(SwapFixture { water, fat, kappa, threshold })
}
