//! Magnitude-only water-fat separation for multi-echo Dixon MRI.
//!
//! The crate covers the forward signal model and a phantom simulator,
//! voxelwise two-start and prior-initialized fitting with Gaussian or Rician
//! objectives, two-point solution selection, synthetic swap generation,
//! swap detection and evaluation metrics.

pub mod bessel;
pub mod detect;
pub mod error;
pub mod fitting;
pub mod io;
pub mod labeling;
pub mod maps;
pub mod metrics;
pub mod optim;
pub mod perlin;
pub mod phantom;
pub mod signal;
pub mod synth;
pub mod twopoint;
pub mod volume;

pub use error::{Error, Result};
pub use maps::{Basin, FitFlags, ParamMaps};
pub use signal::FatSpectrum;
pub use volume::{BinaryMask, MultiEchoVolume, ScalarVolume, VolumeGeometry};
