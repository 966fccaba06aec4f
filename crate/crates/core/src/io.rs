//! Raw volume container: a JSON sidecar header (`<stem>.json`) next to a
//! little-endian float32 payload (`<stem>.raw`).
//!
//! Multi-echo payloads are echo-major: all voxels of echo 0, then echo 1, ...

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, MultiEchoVolume, ScalarVolume, VolumeGeometry};

pub const DTYPE: &str = "f32le";
pub const ORDER: &str = "row-major";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    #[serde(default = "one")]
    pub echoes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo_times_ms: Option<Vec<f64>>,
    pub dtype: String,
    pub order: String,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Scalar(ScalarVolume),
    MultiEcho(MultiEchoVolume),
}

impl Volume {
    pub fn geometry(&self) -> &VolumeGeometry {
        match self {
            Volume::Scalar(v) => v.geometry(),
            Volume::MultiEcho(v) => v.geometry(),
        }
    }
}

/// Header and payload paths for a container. Accepts the stem, the header or
/// the payload path.
pub fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = stem.clone().into_os_string();
    header.push(".json");
    let mut payload = stem.into_os_string();
    payload.push(".raw");
    (PathBuf::from(header), PathBuf::from(payload))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let (header_path, payload_path) = container_paths(path);
    let text = fs::read_to_string(&header_path)
        .map_err(|e| Error::io(format!("reading header {}", header_path.display()), e))?;
    let bad = |reason: String| Error::Header {
        path: header_path.clone(),
        reason,
    };
    let header: Header = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(bad(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.order != ORDER {
        return Err(bad(format!("unsupported order {:?}", header.order)));
    }
    let geometry =
        VolumeGeometry::new(header.dims, header.voxel_size_mm).map_err(|e| bad(e.to_string()))?;
    if header.echoes == 0 {
        return Err(bad("echoes must be >= 1".into()));
    }

    let bytes = fs::read(&payload_path)
        .map_err(|e| Error::io(format!("reading payload {}", payload_path.display()), e))?;
    let n = geometry.len();
    let expected = n * header.echoes * 4;
    if bytes.len() != expected {
        return Err(Error::PayloadLength {
            path: payload_path,
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: payload_path,
            index,
        });
    }

    match (header.echoes, header.echo_times_ms) {
        (1, None) => Ok(Volume::Scalar(ScalarVolume::new(geometry, values)?)),
        (_, Some(times)) => {
            if times.len() != header.echoes {
                return Err(bad(format!(
                    "{} echo times for {} echoes",
                    times.len(),
                    header.echoes
                )));
            }
            let echoes = values
                .chunks_exact(n)
                .map(|c| ScalarVolume::new(geometry, c.to_vec()))
                .collect::<Result<Vec<_>>>()?;
            MultiEchoVolume::new(times, echoes)
                .map(Volume::MultiEcho)
                .map_err(|e| bad(e.to_string()))
        }
        (n_echoes, None) => Err(bad(format!(
            "{n_echoes} echoes but no echo_times_ms"
        ))),
    }
}

pub fn read_scalar(path: &Path) -> Result<ScalarVolume> {
    match read_volume(path)? {
        Volume::Scalar(v) => Ok(v),
        Volume::MultiEcho(_) => Err(Error::InvalidArgument(format!(
            "{} is multi-echo, expected a scalar volume",
            path.display()
        ))),
    }
}

pub fn read_multi_echo(path: &Path) -> Result<MultiEchoVolume> {
    match read_volume(path)? {
        Volume::MultiEcho(v) => Ok(v),
        Volume::Scalar(_) => Err(Error::InvalidArgument(format!(
            "{} is a scalar volume, expected multi-echo",
            path.display()
        ))),
    }
}

/// Masks are stored as 0/1 scalar volumes; any nonzero value reads as set.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(BinaryMask::from_volume(&read_scalar(path)?))
}

pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    let (header_path, payload_path) = container_paths(path);
    let geometry = *v.geometry();
    let (echoes, echo_times_ms, chunks): (usize, Option<Vec<f64>>, Vec<&[f32]>) = match v {
        Volume::Scalar(s) => (1, None, vec![s.data()]),
        Volume::MultiEcho(m) => (
            m.n_echoes(),
            Some(m.echo_times_ms().to_vec()),
            m.echoes().iter().map(|e| e.data()).collect(),
        ),
    };
    let header = Header {
        dims: geometry.dims,
        voxel_size_mm: geometry.voxel_size_mm,
        echoes,
        echo_times_ms,
        dtype: DTYPE.to_string(),
        order: ORDER.to_string(),
    };
    let mut bytes = Vec::with_capacity(geometry.len() * echoes * 4);
    for chunk in chunks {
        for value in chunk {
            bytes.extend_from_slice(&value.to_le_bytes());
        }
    }
    let json = serde_json::to_string_pretty(&header)?;
    fs::write(&header_path, json)
        .map_err(|e| Error::io(format!("writing header {}", header_path.display()), e))?;
    fs::write(&payload_path, bytes)
        .map_err(|e| Error::io(format!("writing payload {}", payload_path.display()), e))?;
    Ok(())
}

pub fn write_scalar(v: &ScalarVolume, path: &Path) -> Result<()> {
    write_volume(&Volume::Scalar(v.clone()), path)
}

pub fn write_multi_echo(v: &MultiEchoVolume, path: &Path) -> Result<()> {
    write_volume(&Volume::MultiEcho(v.clone()), path)
}

pub fn write_mask(m: &BinaryMask, path: &Path) -> Result<()> {
    write_scalar(&m.to_volume(), path)
}
