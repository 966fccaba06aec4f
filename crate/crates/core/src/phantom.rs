//! Piecewise-constant phantom simulator with Rician magnitude noise.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::ParamMaps;
use crate::signal::{complex_signal, ComplexVoxelTruth, FatSpectrum};
use crate::volume::{MultiEchoVolume, ScalarVolume, VolumeGeometry};

/// Region shape in voxel coordinates (voxel centers at integer positions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    /// `min <= p < max` on every axis.
    Box { min: [f64; 3], max: [f64; 3] },
    /// `sum(((p - center) / radii)^2) <= 1`.
    Ellipsoid { center: [f64; 3], radii: [f64; 3] },
}

impl Shape {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Shape::Box { min, max } => (0..3).all(|a| p[a] >= min[a] && p[a] < max[a]),
            Shape::Ellipsoid { center, radii } => {
                (0..3)
                    .map(|a| ((p[a] - center[a]) / radii[a]).powi(2))
                    .sum::<f64>()
                    <= 1.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    #[serde(default)]
    pub name: String,
    #[serde(flatten)]
    pub shape: Shape,
    pub truth: ComplexVoxelTruth,
}

/// Phantom description; later regions override earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomLayout {
    pub dims: [usize; 3],
    #[serde(default = "unit_voxels")]
    pub voxel_size_mm: [f64; 3],
    #[serde(default)]
    pub background: ComplexVoxelTruth,
    pub regions: Vec<Region>,
}

fn unit_voxels() -> [f64; 3] {
    [1.0; 3]
}

impl PhantomLayout {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let layout: Self = serde_json::from_str(text)?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading layout {}", path.display()), e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        VolumeGeometry::new(self.dims, self.voxel_size_mm)?;
        self.background.validate()?;
        for r in &self.regions {
            r.truth.validate()?;
            if let Shape::Ellipsoid { radii, .. } = &r.shape {
                if radii.iter().any(|&x| !(x > 0.0)) {
                    return Err(Error::InvalidArgument(format!(
                        "region {:?}: ellipsoid radii must be positive",
                        r.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<VolumeGeometry> {
        VolumeGeometry::new(self.dims, self.voxel_size_mm)
    }

    pub fn truth_at(&self, p: [f64; 3]) -> ComplexVoxelTruth {
        self.regions
            .iter()
            .rev()
            .find(|r| r.shape.contains(p))
            .map(|r| r.truth)
            .unwrap_or(self.background)
    }

    /// Abdomen-like phantom: a subcutaneous fat shell (PDFF 0.90) around
    /// muscle (0.02), a liver (0.05) and a steatotic high-R2* lesion (0.30),
    /// in air. Total proton density is 100 in every tissue.
    pub fn abdomen(dims: [usize; 3]) -> Self {
        let d = dims.map(|x| x as f64);
        let c = d.map(|x| (x - 1.0) / 2.0);
        let tissue = |pdff: f64, r2star: f64, psi: f64, phi0: f64| ComplexVoxelTruth {
            rho_w: 100.0 * (1.0 - pdff),
            rho_f: 100.0 * pdff,
            r2star,
            psi,
            phi0,
        };
        let ellipsoid = |name: &str, center: [f64; 3], radii: [f64; 3], truth| Region {
            name: name.to_string(),
            shape: Shape::Ellipsoid { center, radii },
            truth,
        };
        Self {
            dims,
            voxel_size_mm: [1.64, 1.64, 4.0],
            background: ComplexVoxelTruth::default(),
            regions: vec![
                ellipsoid(
                    "subcutaneous_fat",
                    c,
                    [0.48 * d[0], 0.44 * d[1], 2.0 * d[2]],
                    tissue(0.90, 30.0, 15.0, 0.3),
                ),
                ellipsoid(
                    "muscle",
                    c,
                    [0.37 * d[0], 0.32 * d[1], 2.0 * d[2]],
                    tissue(0.02, 30.0, -10.0, 0.3),
                ),
                ellipsoid(
                    "liver",
                    [c[0] - 0.12 * d[0], c[1], c[2]],
                    [0.18 * d[0], 0.20 * d[1], 0.40 * d[2]],
                    tissue(0.05, 50.0, 25.0, -0.5),
                ),
                ellipsoid(
                    "lesion",
                    [c[0] + 0.18 * d[0], c[1] + 0.05 * d[1], c[2]],
                    [0.09 * d[0], 0.09 * d[1], 0.25 * d[2]],
                    tissue(0.30, 200.0, -30.0, 1.1),
                ),
            ],
        }
    }

    /// Per-region masks, in region order.
    pub fn region_masks(&self) -> Result<Vec<(String, crate::volume::BinaryMask)>> {
        let g = self.geometry()?;
        Ok(self
            .regions
            .iter()
            .enumerate()
            .map(|(r, region)| {
                let mask = crate::volume::BinaryMask::from_fn(g, |idx| {
                    self.owner(voxel_point(&g, idx)) == Some(r)
                });
                (region.name.clone(), mask)
            })
            .collect())
    }

    fn owner(&self, p: [f64; 3]) -> Option<usize> {
        self.regions.iter().rposition(|r| r.shape.contains(p))
    }
}

fn voxel_point(g: &VolumeGeometry, idx: usize) -> [f64; 3] {
    g.coords(idx).map(|x| x as f64)
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub echoes: MultiEchoVolume,
    pub truth: ParamMaps,
    /// Noiseless water density, the oracle signal prior.
    pub oracle_prior: ScalarVolume,
}

/// Noise stream for one voxel: a ChaCha stream selected by the voxel index,
/// drawn in echo order, two normals per echo.
fn voxel_rng(seed: u64, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx as u64);
    rng
}

/// Simulates magnitude echoes `|s + eta|` with circular complex Gaussian
/// `eta` of per-component standard deviation `noise_sigma`.
pub fn simulate_phantom(
    layout: &PhantomLayout,
    spectrum: &FatSpectrum,
    echo_times_ms: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<Phantom> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "invalid noise sigma {noise_sigma}"
        )));
    }
    layout.validate()?;
    let g = layout.geometry()?;
    let n = g.len();
    let n_echoes = echo_times_ms.len();
    let times_s: Vec<f64> = echo_times_ms.iter().map(|t| t * 1e-3).collect();

    let truths: Vec<ComplexVoxelTruth> = (0..n)
        .into_par_iter()
        .map(|idx| layout.truth_at(voxel_point(&g, idx)))
        .collect();

    let samples: Vec<Vec<f32>> = truths
        .par_iter()
        .enumerate()
        .map(|(idx, truth)| {
            let mut rng = voxel_rng(seed, idx);
            times_s
                .iter()
                .map(|&t| {
                    let s = complex_signal(truth, spectrum, t);
                    let noisy = if noise_sigma > 0.0 {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        s + Complex64::new(re, im) * noise_sigma
                    } else {
                        s
                    };
                    noisy.norm() as f32
                })
                .collect()
        })
        .collect();

    let echoes = (0..n_echoes)
        .map(|e| ScalarVolume::new(g, samples.iter().map(|v| v[e]).collect()))
        .collect::<Result<Vec<_>>>()?;
    let echoes = MultiEchoVolume::new(echo_times_ms.to_vec(), echoes)?;

    let field = |f: fn(&ComplexVoxelTruth) -> f64| {
        ScalarVolume::new(g, truths.iter().map(|t| f(t) as f32).collect())
    };
    let rho_w = field(|t| t.rho_w)?;
    let truth = ParamMaps::reference(rho_w.clone(), field(|t| t.rho_f)?, field(|t| t.r2star)?)?;
    Ok(Phantom {
        echoes,
        truth,
        oracle_prior: rho_w,
    })
}
