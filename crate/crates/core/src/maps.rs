use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{ScalarVolume, VolumeGeometry};

/// Which start produced a voxel's solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basin {
    /// Outside the fit mask.
    Unfitted,
    WaterDominantInit,
    FatDominantInit,
    PriorInit,
    /// Not produced by a fit (simulation truth, external reference).
    Reference,
}

impl Basin {
    pub fn code(self) -> f32 {
        match self {
            Basin::Unfitted => 0.0,
            Basin::WaterDominantInit => 1.0,
            Basin::FatDominantInit => 2.0,
            Basin::PriorInit => 3.0,
            Basin::Reference => 4.0,
        }
    }

    pub fn from_code(code: f32) -> Option<Self> {
        Some(match code as i32 {
            0 => Basin::Unfitted,
            1 => Basin::WaterDominantInit,
            2 => Basin::FatDominantInit,
            3 => Basin::PriorInit,
            4 => Basin::Reference,
            _ => return None,
        })
    }
}

/// Per-voxel diagnostic bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FitFlags(pub u8);

impl FitFlags {
    pub const NONE: FitFlags = FitFlags(0);
    /// Optimizer hit `max_iterations` without meeting a tolerance.
    pub const NOT_CONVERGED: FitFlags = FitFlags(1);
    /// `rho_w + rho_f == 0`; PDFF reported as 0.
    pub const NO_SIGNAL: FitFlags = FitFlags(2);

    pub fn contains(self, other: FitFlags) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub fn insert(&mut self, other: FitFlags) {
        self.0 |= other.0;
    }
}

/// `rho_f / (rho_w + rho_f)`, 0 when the total is not positive.
#[inline]
pub fn pdff(rho_w: f64, rho_f: f64) -> f64 {
    let total = rho_w + rho_f;
    if total > 0.0 {
        (rho_f / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Fitted (or reference) parameter volumes sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMaps {
    pub rho_w: ScalarVolume,
    pub rho_f: ScalarVolume,
    pub r2star: ScalarVolume,
    pub pdff: ScalarVolume,
    pub residual: ScalarVolume,
    pub basin: Vec<Basin>,
    pub flags: Vec<FitFlags>,
}

impl ParamMaps {
    /// Builds maps from densities; PDFF and the no-signal flag are derived.
    pub fn from_parts(
        rho_w: ScalarVolume,
        rho_f: ScalarVolume,
        r2star: ScalarVolume,
        residual: ScalarVolume,
        basin: Vec<Basin>,
        mut flags: Vec<FitFlags>,
    ) -> Result<Self> {
        let g = *rho_w.geometry();
        for (name, v) in [("rho_f", &rho_f), ("r2star", &r2star), ("residual", &residual)] {
            g.ensure_same(v.geometry(), name)?;
        }
        if basin.len() != g.len() || flags.len() != g.len() {
            return Err(Error::Geometry("basin/flags length mismatch".into()));
        }
        let mut pdff_data = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            let (w, f) = (rho_w.get(i) as f64, rho_f.get(i) as f64);
            if w + f <= 0.0 && basin[i] != Basin::Unfitted {
                flags[i].insert(FitFlags::NO_SIGNAL);
            }
            pdff_data.push(pdff(w, f) as f32);
        }
        Ok(Self {
            pdff: ScalarVolume::new(g, pdff_data)?,
            rho_w,
            rho_f,
            r2star,
            residual,
            basin,
            flags,
        })
    }

    /// Reference maps (e.g. simulation truth) with zero residual.
    pub fn reference(rho_w: ScalarVolume, rho_f: ScalarVolume, r2star: ScalarVolume) -> Result<Self> {
        let g = *rho_w.geometry();
        Self::from_parts(
            rho_w,
            rho_f,
            r2star,
            ScalarVolume::zeros(g),
            vec![Basin::Reference; g.len()],
            vec![FitFlags::NONE; g.len()],
        )
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        self.rho_w.geometry()
    }

    pub fn basin_volume(&self) -> ScalarVolume {
        ScalarVolume::new(*self.geometry(), self.basin.iter().map(|b| b.code()).collect())
            .expect("basin codes are finite")
    }

    pub fn flags_volume(&self) -> ScalarVolume {
        ScalarVolume::new(*self.geometry(), self.flags.iter().map(|f| f.0 as f32).collect())
            .expect("flag codes are finite")
    }

    pub fn not_converged_count(&self) -> usize {
        self.flags
            .iter()
            .filter(|f| f.contains(FitFlags::NOT_CONVERGED))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdff_definition() {
        assert_eq!(pdff(0.0, 0.0), 0.0);
        assert!((pdff(0.7, 0.3) - 0.3).abs() < 1e-15);
        assert_eq!(pdff(0.0, 2.0), 1.0);
    }

    #[test]
    fn zero_total_sets_no_signal_flag() {
        let g = VolumeGeometry::isotropic([2, 1, 1]).unwrap();
        let w = ScalarVolume::new(g, vec![0.0, 1.0]).unwrap();
        let f = ScalarVolume::new(g, vec![0.0, 1.0]).unwrap();
        let maps = ParamMaps::reference(w, f, ScalarVolume::zeros(g)).unwrap();
        assert!(maps.flags[0].contains(FitFlags::NO_SIGNAL));
        assert!(!maps.flags[1].contains(FitFlags::NO_SIGNAL));
        assert_eq!(maps.pdff.data(), &[0.0, 0.5]);
    }

    #[test]
    fn basin_codes_round_trip() {
        for b in [
            Basin::Unfitted,
            Basin::WaterDominantInit,
            Basin::FatDominantInit,
            Basin::PriorInit,
            Basin::Reference,
        ] {
            assert_eq!(Basin::from_code(b.code()), Some(b));
        }
    }
}
