//! Dense 3-D volume containers.
//!
//! All volumes are stored row-major over `dims = [d0, d1, d2]`: the flat index
//! of voxel `(i, j, k)` is `(i * d1 + j) * d2 + k`. Axis 2 is the slice axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeGeometry {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
}

impl VolumeGeometry {
    pub fn new(dims: [usize; 3], voxel_size_mm: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Geometry(format!("dims must be >= 1, got {dims:?}")));
        }
        if voxel_size_mm.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Geometry(format!(
                "voxel sizes must be positive, got {voxel_size_mm:?}"
            )));
        }
        Ok(Self {
            dims,
            voxel_size_mm,
        })
    }

    /// Geometry with 1 mm isotropic voxels.
    pub fn isotropic(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline(always)]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    pub(crate) fn ensure_same(&self, other: &VolumeGeometry, what: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::GeometryMismatch(format!(
                "{what}: dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    geometry: VolumeGeometry,
    data: Vec<f32>,
}

impl ScalarVolume {
    pub fn new(geometry: VolumeGeometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at index {index}"
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn zeros(geometry: VolumeGeometry) -> Self {
        Self {
            data: vec![0.0; geometry.len()],
            geometry,
        }
    }

    pub fn from_fn(geometry: VolumeGeometry, f: impl Fn(usize) -> f32) -> Result<Self> {
        let data = (0..geometry.len()).map(f).collect();
        Self::new(geometry, data)
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f32 {
        self.data[idx]
    }

    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(self.geometry, self.data.iter().map(|v| v * factor).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiEchoVolume {
    geometry: VolumeGeometry,
    echo_times_ms: Vec<f64>,
    echoes: Vec<ScalarVolume>,
}

impl MultiEchoVolume {
    /// Echo times are in milliseconds, the unit of the file header.
    pub fn new(echo_times_ms: Vec<f64>, echoes: Vec<ScalarVolume>) -> Result<Self> {
        if echo_times_ms.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "at least 2 echoes required, got {}",
                echo_times_ms.len()
            )));
        }
        if echo_times_ms.len() != echoes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} echo times for {} echo volumes",
                echo_times_ms.len(),
                echoes.len()
            )));
        }
        if echo_times_ms.iter().any(|&t| !(t > 0.0 && t.is_finite()))
            || echo_times_ms.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidArgument(format!(
                "echo times must be positive and strictly increasing: {echo_times_ms:?}"
            )));
        }
        let geometry = *echoes[0].geometry();
        for (e, vol) in echoes.iter().enumerate() {
            geometry.ensure_same(vol.geometry(), &format!("echo {e}"))?;
            if vol.data().iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "echo {e} contains negative magnitudes"
                )));
            }
        }
        Ok(Self {
            geometry,
            echo_times_ms,
            echoes,
        })
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn echo_times_ms(&self) -> &[f64] {
        &self.echo_times_ms
    }

    pub fn echo_times_s(&self) -> Vec<f64> {
        self.echo_times_ms.iter().map(|t| t * 1e-3).collect()
    }

    pub fn echoes(&self) -> &[ScalarVolume] {
        &self.echoes
    }

    pub fn n_echoes(&self) -> usize {
        self.echoes.len()
    }

    /// Echo magnitudes of one voxel, in echo order.
    pub fn voxel_signal(&self, idx: usize) -> Vec<f64> {
        self.echoes.iter().map(|e| e.get(idx) as f64).collect()
    }

    pub fn scaled(&self, factor: f32) -> Result<Self> {
        let echoes = self
            .echoes
            .iter()
            .map(|e| e.scaled(factor))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.echo_times_ms.clone(), echoes)
    }
}

/// Echo times `1.23 * (x + 1)` ms for `x = 0..n`.
pub fn default_echo_times_ms(n: usize) -> Vec<f64> {
    (0..n).map(|x| (123 * (x + 1)) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    geometry: VolumeGeometry,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(geometry: VolumeGeometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "mask length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn full(geometry: VolumeGeometry) -> Self {
        Self {
            data: vec![true; geometry.len()],
            geometry,
        }
    }

    pub fn empty(geometry: VolumeGeometry) -> Self {
        Self {
            data: vec![false; geometry.len()],
            geometry,
        }
    }

    pub fn from_fn(geometry: VolumeGeometry, f: impl Fn(usize) -> bool) -> Self {
        Self {
            data: (0..geometry.len()).map(f).collect(),
            geometry,
        }
    }

    /// Nonzero voxels of a scalar volume.
    pub fn from_volume(v: &ScalarVolume) -> Self {
        Self::from_fn(*v.geometry(), |i| v.get(i) != 0.0)
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.data[idx]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.geometry.ensure_same(&other.geometry, "mask and")?;
        Ok(Self::from_fn(self.geometry, |i| self.data[i] && other.data[i]))
    }

    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.geometry.ensure_same(&other.geometry, "mask and-not")?;
        Ok(Self::from_fn(self.geometry, |i| self.data[i] && !other.data[i]))
    }

    pub fn not(&self) -> BinaryMask {
        Self::from_fn(self.geometry, |i| !self.data[i])
    }

    pub fn to_volume(&self) -> ScalarVolume {
        ScalarVolume {
            geometry: self.geometry,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Quantile with linear interpolation between order statistics
/// (position `q * (n - 1)` in the sorted sample).
pub fn quantile(values: &[f32], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile {q} outside [0, 1]")));
    }
    let mut sorted: Vec<f32> = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac)
}

/// Voxels whose first-echo magnitude strictly exceeds the `quantile` of all
/// first-echo values.
pub fn body_mask_from_signal(m: &MultiEchoVolume, quantile_level: f64) -> Result<BinaryMask> {
    if !(0.0..1.0).contains(&quantile_level) {
        return Err(Error::InvalidArgument(format!(
            "quantile must lie in [0, 1), got {quantile_level}"
        )));
    }
    let first = &m.echoes()[0];
    let threshold = quantile(first.data(), quantile_level)?;
    Ok(BinaryMask::from_fn(*m.geometry(), |i| {
        first.get(i) as f64 > threshold
    }))
}

pub const DEFAULT_BODY_QUANTILE: f64 = 0.05;
