//! Link-level simulation of a massive MU-MIMO uplink.
//!
//! The crate is organised by processing stage:
//!
//! - [`scenario`]: system numerology, base-station array geometries, user
//!   placements and the scenario file format.
//! - [`channel`]: planar, spherical, i.i.d. Rayleigh and tapped multipath
//!   channel synthesis, plus the channel tensor container and its file I/O.
//! - [`frame`]: comb pilot map, least-squares estimation and spectral
//!   efficiency accounting.
//! - [`detect`]: QAM mapping, MRC/ZF/MMSE detection and uplink symbol
//!   simulation.
//! - [`hardening`]: gram-matrix statistics and uplink power control.
//! - [`analysis`]: power profiles, CFR interpolation, power-delay profiles,
//!   delay spread and coherence bandwidth.
//! - [`locate`]: MUSIC angle estimation, subarray partitioning and TDOA
//!   multilateration.
//!
//! Channel matrices are stored users × antennas (K×M) everywhere; the
//! detection code transposes internally.

// Validation is written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod detect;
mod error;
pub mod frame;
pub mod hardening;
pub mod linalg;
pub mod locate;
pub mod scenario;

pub use error::{Error, ErrorKind, Result};

pub use num_complex::Complex64;

pub use analysis::{Autocorrelation, CoherenceBw, PdpResult, PowerProfile, Window};
pub use channel::{ChannelMatrix, ChannelModelTag, ChannelTensor, FrequencyGrid, SpatialSignature, Tap, TapSet};
pub use detect::{DetectorKind, DetectorWeights, LinkReport, QamOrder};
pub use frame::{EstimatedCfr, FrameSchedule, PilotMap};
pub use hardening::{GramMatrix, PowerControlAlgorithm, PowerControlState, RatioMetric};
pub use locate::{PseudoSpectrum, SnapshotSet, TdoaProblem};
pub use scenario::{ArrayGeometry, Element, Polarisation, SystemConfig, UePlacement};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Wavelength in metres for a carrier frequency in Hz.
pub fn wavelength(carrier_freq: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_freq
}

/// Decibels to a linear power ratio.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio to decibels.
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}
