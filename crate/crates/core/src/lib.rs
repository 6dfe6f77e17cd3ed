//! Signal conditioning, spectral features and SPD covariance geometry for
//! multichannel EEG.
//!
//! The crate is organised bottom-up:
//!
//! * [`signal`] designs Butterworth/notch filters, applies them zero-phase and
//!   decomposes a recording into a filter bank.
//! * [`features`] turns band-limited segments into per-window differential
//!   entropy and log band-power sequences.
//! * [`spd`] holds the covariance geometry: affine-invariant distance,
//!   Riemannian mean, tangent-space vectorisation and the MDRM classifier.
//! * [`data`] reads and writes the binary segment/feature formats, ingests CSV
//!   and generates the synthetic datasets used for verification.

pub mod data;
pub mod error;
pub mod features;
pub mod segment;
pub mod signal;
pub mod spd;

pub use error::{Error, Result};
pub use segment::{EegSegment, Label};
