//! Channel synthesis.
//!
//! Two phase conventions coexist and are kept apart deliberately:
//! spatial (propagation-distance) phase is `exp(+j·2π·r/λ)`, while the
//! frequency response of a delayed tap is `exp(−j·2π·f·τ)` so that an IFFT
//! puts the tap at positive delay.
//!
//! A plane wave from a source in unit direction `u` (pointing from the
//! array towards the source) arrives with per-element phase
//! `exp(−j·2π/λ·p·u)` relative to the array origin, i.e. the spatial
//! signature evaluated at the propagation direction `−u`; see
//! [`arrival_signature`].

mod tensor;

pub use tensor::{tapped_cfr, ChannelTensor, FrequencyGrid, TensorFormat};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::linalg::{CMatrix, CVector};
use crate::scenario::{ArrayGeometry, Polarisation, UePlacement};
use crate::{Complex64, Error, Result};

const UNIT_TOL: f64 = 1e-9;

/// Phase-only per-element response of an array to a plane wave.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSignature {
    pub coefficients: CVector,
    pub direction: Vector3<f64>,
}

impl SpatialSignature {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Signature for a plane wave travelling along unit vector `direction`:
/// element at `p` gets `exp(j·2π/λ·(p·direction))`.
pub fn spatial_signature(geom: &ArrayGeometry, direction: Vector3<f64>, wavelength: f64) -> Result<SpatialSignature> {
    let norm = direction.norm();
    if !((norm - 1.0).abs() <= UNIT_TOL) {
        return Err(Error::invalid(format!("direction must be a unit vector (|d| = {norm})")));
    }
    if !(wavelength > 0.0) {
        return Err(Error::invalid("wavelength must be > 0"));
    }
    let k = 2.0 * PI / wavelength;
    let coefficients = CVector::from_iterator(
        geom.len(),
        geom.elements.iter().map(|e| Complex64::cis(k * e.position.dot(&direction))),
    );
    Ok(SpatialSignature { coefficients, direction })
}

/// Signature seen by the array for a far source in unit direction
/// `toward_source` (from the array to the source).
pub fn arrival_signature(
    geom: &ArrayGeometry,
    toward_source: Vector3<f64>,
    wavelength: f64,
) -> Result<SpatialSignature> {
    spatial_signature(geom, -toward_source, wavelength)
}

/// Unit vector for azimuth (from boresight +y towards +x) and elevation
/// (towards +z), both in radians.
pub fn direction_from_angles(azimuth: f64, elevation: f64) -> Vector3<f64> {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    Vector3::new(ce * sa, ce * ca, se)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModelTag {
    Planar,
    Spherical,
    Iid,
    Tapped,
}

/// Narrowband channel, stored users × antennas (K×M). Raw: no
/// normalisation is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: CMatrix,
    pub model: ChannelModelTag,
    pub wavelength: f64,
}

impl ChannelMatrix {
    pub fn new(entries: CMatrix, model: ChannelModelTag, wavelength: f64) -> Result<Self> {
        if entries.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("channel entries must be finite"));
        }
        Ok(Self { entries, model, wavelength })
    }

    pub fn n_users(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_antennas(&self) -> usize {
        self.entries.ncols()
    }

    /// The M×K antennas × users orientation used for detection.
    pub fn receive_major(&self) -> CMatrix {
        self.entries.transpose()
    }

    /// Channel vector of user `k` across the array.
    pub fn user(&self, k: usize) -> CVector {
        self.entries.row(k).transpose()
    }

    /// Same channel with every entry multiplied by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self { entries: self.entries.map(|z| z * c), ..self.clone() }
    }

    /// Scales row `k` by `gains[k]` (amplitude, not power).
    pub fn with_user_gains(&self, gains: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, g) in gains.iter().enumerate() {
            out.entries.row_mut(k).scale_mut(*g);
        }
        out
    }
}

/// Outer-product channel of the plane-wave model. Returned in storage
/// orientation: `K = a_t.len()` rows, `M = a_r.len()` columns, so that
/// [`ChannelMatrix::receive_major`] equals `a_r · a_tᵀ`.
pub fn planar_channel(a_r: &SpatialSignature, a_t: &SpatialSignature, wavelength: f64) -> ChannelMatrix {
    let entries = CMatrix::from_fn(a_t.len(), a_r.len(), |k, m| a_r.coefficients[m] * a_t.coefficients[k]);
    ChannelMatrix { entries, model: ChannelModelTag::Planar, wavelength }
}

/// Spherical-wavefront channel: entry for transmitter `k`, receiver `m` is
/// `exp(j·2π/λ·r)` with `r` the exact distance between them.
pub fn spherical_channel(tx: &[Vector3<f64>], rx: &[Vector3<f64>], wavelength: f64) -> Result<ChannelMatrix> {
    spherical_channel_with(tx, rx, wavelength, false)
}

/// As [`spherical_channel`]; with `amplitude_decay` each entry is further
/// scaled by `1/r`.
pub fn spherical_channel_with(
    tx: &[Vector3<f64>],
    rx: &[Vector3<f64>],
    wavelength: f64,
    amplitude_decay: bool,
) -> Result<ChannelMatrix> {
    if !(wavelength > 0.0) {
        return Err(Error::invalid("wavelength must be > 0"));
    }
    let k = 2.0 * PI / wavelength;
    let mut entries = CMatrix::zeros(tx.len(), rx.len());
    for (i, t) in tx.iter().enumerate() {
        for (j, r) in rx.iter().enumerate() {
            let d = (t - r).norm();
            if d == 0.0 {
                return Err(Error::invalid(format!(
                    "transmitter {i} and receiver {j} coincide (degenerate spherical phase)"
                )));
            }
            let amp = if amplitude_decay { 1.0 / d } else { 1.0 };
            entries[(i, j)] = Complex64::from_polar(amp, k * d);
        }
    }
    ChannelMatrix::new(entries, ChannelModelTag::Spherical, wavelength)
}

/// K×M matrix of i.i.d. CN(0, 1) entries, reproducible from `seed`.
pub fn iid_rayleigh(m: usize, k: usize, seed: u64) -> ChannelMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelMatrix {
        entries: CMatrix::from_fn(k, m, |_, _| complex_gaussian(&mut rng)),
        model: ChannelModelTag::Iid,
        wavelength: f64::NAN,
    }
}

/// One CN(0, 1) draw.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Delay tap of a multipath profile. Taps with a `source_point` carry a
/// spherical phase across the array relative to the array centroid;
/// otherwise the tap is flat across the array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tap {
    pub delay: f64,
    pub gain: Complex64,
    pub source_point: Option<Vector3<f64>>,
}

impl Tap {
    pub fn flat(delay: f64, gain: Complex64) -> Self {
        Self { delay, gain, source_point: None }
    }
}

/// Non-empty set of taps sorted by ascending delay.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSet {
    taps: Vec<Tap>,
}

impl TapSet {
    pub fn new(mut taps: Vec<Tap>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::invalid("tap set must contain at least one tap"));
        }
        if let Some(t) = taps.iter().find(|t| !(t.delay >= 0.0 && t.delay.is_finite())) {
            return Err(Error::invalid(format!("tap delay must be finite and >= 0 (got {})", t.delay)));
        }
        taps.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    /// Union of two tap sets.
    pub fn union(&self, other: &TapSet) -> TapSet {
        let mut all = self.taps.clone();
        all.extend(other.taps.iter().cloned());
        TapSet::new(all).expect("union of valid tap sets")
    }
}

/// How a scenario's terminals couple to the array's polarised elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarisationCoupling {
    pub ue_polarisation: Polarisation,
    /// Amplitude coupling between orthogonal polarisations (0 = none).
    pub xpd: f64,
}

impl Default for PolarisationCoupling {
    fn default() -> Self {
        Self { ue_polarisation: Polarisation::V, xpd: 0.0 }
    }
}

impl PolarisationCoupling {
    fn factor(&self, element: Polarisation) -> f64 {
        if element == self.ue_polarisation {
            1.0
        } else {
            self.xpd
        }
    }
}

/// Channel model selection for scenario-level synthesis.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// Per-user far-field plane wave from each terminal's direction.
    Planar {
        amplitude_decay: bool,
    },
    Spherical {
        amplitude_decay: bool,
    },
    Iid,
    /// Narrowband response of a tap set at the band centre.
    Tapped(TapSet),
}

/// Narrowband K×M channel between a user placement and an array.
pub fn synthesize(
    geom: &ArrayGeometry,
    ue: &UePlacement,
    model: &ChannelModel,
    coupling: PolarisationCoupling,
    seed: u64,
) -> Result<ChannelMatrix> {
    let lambda = geom.wavelength;
    let mut h = match model {
        ChannelModel::Spherical { amplitude_decay } => {
            spherical_channel_with(&ue.terminals, &geom.positions(), lambda, *amplitude_decay)?
        }
        ChannelModel::Planar { amplitude_decay } => {
            let c = geom.centroid();
            let mut entries = CMatrix::zeros(ue.len(), geom.len());
            for (k, t) in ue.terminals.iter().enumerate() {
                let d = (t - c).norm();
                if d == 0.0 {
                    return Err(Error::invalid(format!("terminal {k} sits at the array centroid")));
                }
                let sig = arrival_signature(geom, (t - c) / d, lambda)?;
                let amp = if *amplitude_decay { 1.0 / d } else { 1.0 };
                let common = Complex64::from_polar(amp, 2.0 * PI / lambda * d);
                for m in 0..geom.len() {
                    entries[(k, m)] = common * sig.coefficients[m];
                }
            }
            ChannelMatrix::new(entries, ChannelModelTag::Planar, lambda)?
        }
        ChannelModel::Iid => {
            let mut h = iid_rayleigh(geom.len(), ue.len(), seed);
            h.wavelength = lambda;
            h
        }
        ChannelModel::Tapped(taps) => {
            let grid = FrequencyGrid::Full { n_occupied: 1 };
            let t = tapped_cfr(taps, geom, ue, &grid, 15e3)?;
            let entries = CMatrix::from_fn(ue.len(), geom.len(), |k, m| t.get(0, m, k));
            ChannelMatrix::new(entries, ChannelModelTag::Tapped, lambda)?
        }
    };
    for (m, e) in geom.elements.iter().enumerate() {
        let f = coupling.factor(e.polarisation);
        if f != 1.0 {
            h.entries.column_mut(m).scale_mut(f);
        }
    }
    Ok(h)
}

/// Phase-aligned relative Frobenius distance `min_φ ‖a − e^{jφ}b‖ / ‖b‖`.
pub fn phase_aligned_distance(a: &CVector, b: &CVector) -> f64 {
    let inner = b.dotc(a);
    let align = if inner.norm() > 0.0 { inner / inner.norm() } else { Complex64::new(1.0, 0.0) };
    (a - b * align).norm() / b.norm()
}
