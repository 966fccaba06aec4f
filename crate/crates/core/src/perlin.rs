//! 3-D gradient (Perlin) noise on a voxel grid.
//!
//! Lattice points sit every `lattice_spacing_vox` voxels; each carries one of
//! the twelve cube-edge gradient directions chosen by hashing
//! `(seed, lattice coordinates)`. Interpolation uses the quintic fade
//! `6t^5 - 15t^4 + 10t^3`, so the field is C2 and exactly zero on lattice
//! points.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{ScalarVolume, VolumeGeometry};

const GRADIENTS: [[f64; 3]; 12] = [
    [1.0, 1.0, 0.0],
    [-1.0, 1.0, 0.0],
    [1.0, -1.0, 0.0],
    [-1.0, -1.0, 0.0],
    [1.0, 0.0, 1.0],
    [-1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0],
    [-1.0, 0.0, -1.0],
    [0.0, 1.0, 1.0],
    [0.0, -1.0, 1.0],
    [0.0, 1.0, -1.0],
    [0.0, -1.0, -1.0],
];

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gradient(seed: u64, lattice: [i64; 3]) -> [f64; 3] {
    let mut h = splitmix64(seed);
    for c in lattice {
        h = splitmix64(h ^ c as u64);
    }
    GRADIENTS[(h % 12) as usize]
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(t: f64, a: f64, b: f64) -> f64 {
    a + t * (b - a)
}

/// Noise value at a point given in lattice units.
pub fn noise_at(seed: u64, p: [f64; 3]) -> f64 {
    let cell = p.map(|x| x.floor());
    let frac: [f64; 3] = std::array::from_fn(|a| p[a] - cell[a]);
    let base = cell.map(|x| x as i64);
    let corner = |dx: i64, dy: i64, dz: i64| {
        let g = gradient(seed, [base[0] + dx, base[1] + dy, base[2] + dz]);
        g[0] * (frac[0] - dx as f64) + g[1] * (frac[1] - dy as f64) + g[2] * (frac[2] - dz as f64)
    };
    let [u, v, w] = frac.map(fade);
    lerp(
        w,
        lerp(v, lerp(u, corner(0, 0, 0), corner(1, 0, 0)), lerp(u, corner(0, 1, 0), corner(1, 1, 0))),
        lerp(v, lerp(u, corner(0, 0, 1), corner(1, 0, 1)), lerp(u, corner(0, 1, 1), corner(1, 1, 1))),
    )
    .clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerlinField {
    pub lattice_spacing_vox: usize,
    pub seed: u64,
    pub values: ScalarVolume,
}

impl PerlinField {
    pub fn geometry(&self) -> &VolumeGeometry {
        self.values.geometry()
    }
}

pub fn perlin3d(geometry: &VolumeGeometry, lattice_spacing_vox: usize, seed: u64) -> Result<PerlinField> {
    if lattice_spacing_vox < 2 {
        return Err(Error::InvalidArgument(format!(
            "lattice spacing must be >= 2 voxels, got {lattice_spacing_vox}"
        )));
    }
    let largest = *geometry.dims.iter().max().expect("three dims");
    if lattice_spacing_vox > largest {
        return Err(Error::InvalidArgument(format!(
            "lattice spacing {lattice_spacing_vox} exceeds every dimension of {:?}",
            geometry.dims
        )));
    }
    let spacing = lattice_spacing_vox as f64;
    let data: Vec<f32> = (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            let c = geometry.coords(idx);
            noise_at(seed, c.map(|x| x as f64 / spacing)) as f32
        })
        .collect();
    Ok(PerlinField {
        lattice_spacing_vox,
        seed,
        values: ScalarVolume::new(*geometry, data)?,
    })
}
