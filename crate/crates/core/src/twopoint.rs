//! Two-point Dixon arithmetic on opposed-phase (`s0`) and in-phase (`s1`)
//! magnitudes, with prior-based choice between the two candidate pairs.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::volume::{BinaryMask, ScalarVolume};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoPointFlags(pub u8);

impl TwoPointFlags {
    pub const NONE: Self = Self(0);
    /// `s0 > s1 + tolerance`: violates `|W - F| <= W + F`.
    pub const INFEASIBLE: Self = Self(1);
    /// Negative `(s1 - s0) / 2` clamped to zero.
    pub const CLAMPED: Self = Self(2);
    /// Both candidates equally far from the prior.
    pub const TIE: Self = Self(4);

    pub fn contains(self, other: Self) -> bool {
        other.0 != 0 && self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: Self) {
        self.0 |= other.0;
    }
}

/// The two possible water values of a voxel, `candidate_a >= candidate_b`.
/// Whichever is water, the other is fat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointPair {
    pub candidate_a: f64,
    pub candidate_b: f64,
    pub flags: TwoPointFlags,
}

/// Candidates `(s1 + s0) / 2` and `max((s1 - s0) / 2, 0)`.
pub fn two_point_candidates(s0: f64, s1: f64, tolerance: f64) -> TwoPointPair {
    let mut flags = TwoPointFlags::NONE;
    let half_diff = 0.5 * (s1 - s0);
    if half_diff < 0.0 {
        flags.insert(TwoPointFlags::CLAMPED);
        if s0 - s1 > tolerance {
            flags.insert(TwoPointFlags::INFEASIBLE);
        }
    }
    TwoPointPair {
        candidate_a: 0.5 * (s1 + s0),
        candidate_b: half_diff.max(0.0),
        flags,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointSelection {
    pub rho_w: f64,
    pub rho_f: f64,
    pub flags: TwoPointFlags,
}

/// Water is the candidate closer to `prior_w`; fat is the other one.
/// Ties go to the larger candidate.
pub fn select_with_prior(pair: &TwoPointPair, prior_w: f64) -> TwoPointSelection {
    let da = (pair.candidate_a - prior_w).abs();
    let db = (pair.candidate_b - prior_w).abs();
    let mut flags = pair.flags;
    if da == db {
        flags.insert(TwoPointFlags::TIE);
    }
    let (rho_w, rho_f) = if db < da {
        (pair.candidate_b, pair.candidate_a)
    } else {
        (pair.candidate_a, pair.candidate_b)
    };
    TwoPointSelection { rho_w, rho_f, flags }
}

/// Feasibility tolerance: three noise standard deviations when a noise
/// estimate exists, else `1e-6 * max(s1)`.
pub fn default_tolerance(s1: &ScalarVolume, sigma: Option<f64>) -> f64 {
    match sigma {
        Some(sigma) => 3.0 * sigma,
        None => 1e-6 * s1.data().iter().fold(0.0f64, |m, &v| m.max(v as f64)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointResult {
    pub water: ScalarVolume,
    pub fat: ScalarVolume,
    pub flags: Vec<TwoPointFlags>,
}

impl TwoPointResult {
    pub fn count(&self, flag: TwoPointFlags) -> usize {
        self.flags.iter().filter(|f| f.contains(flag)).count()
    }

    pub fn flags_volume(&self) -> ScalarVolume {
        ScalarVolume::new(*self.water.geometry(), self.flags.iter().map(|f| f.0 as f32).collect())
            .expect("finite flag codes")
    }
}

/// Voxelwise candidate computation and prior selection; out-of-mask voxels
/// are zero with no flags.
pub fn select_volume_with_prior(
    s0: &ScalarVolume,
    s1: &ScalarVolume,
    prior: &ScalarVolume,
    mask: &BinaryMask,
    tolerance: f64,
) -> Result<TwoPointResult> {
    let g = *s0.geometry();
    g.ensure_same(s1.geometry(), "in-phase image")?;
    g.ensure_same(prior.geometry(), "signal prior")?;
    g.ensure_same(mask.geometry(), "mask")?;
    let picks: Vec<TwoPointSelection> = (0..g.len())
        .map(|i| {
            if !mask.get(i) {
                return TwoPointSelection { rho_w: 0.0, rho_f: 0.0, flags: TwoPointFlags::NONE };
            }
            let pair = two_point_candidates(s0.get(i) as f64, s1.get(i) as f64, tolerance);
            select_with_prior(&pair, prior.get(i) as f64)
        })
        .collect();
    Ok(TwoPointResult {
        water: ScalarVolume::new(g, picks.iter().map(|p| p.rho_w as f32).collect())?,
        fat: ScalarVolume::new(g, picks.iter().map(|p| p.rho_f as f32).collect())?,
        flags: picks.iter().map(|p| p.flags).collect(),
    })
}
