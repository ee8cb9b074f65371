//! Localisation primitives: array snapshots and their covariance, MUSIC
//! angle estimation, subarray partitioning and TDOA multilateration.

mod music;
mod tdoa;

pub use music::{
    aoa_estimate, half_power_width, music_spectrum, music_spectrum_2d, steering_vector, AoaEstimate, PseudoSpectrum,
    PseudoSpectrum2d,
};
pub use tdoa::{tdoa_measure, tdoa_solve, SolveDimension, TdoaProblem, TdoaSolution};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::complex_gaussian;
use crate::linalg::CMatrix;
use crate::scenario::ArrayGeometry;
use crate::{db_to_lin, Complex64, Error, Result};

/// Array observations, one snapshot per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    /// `n_snapshots × n_elements`.
    pub data: CMatrix,
}

impl SnapshotSet {
    pub fn new(data: CMatrix, geom: &ArrayGeometry) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::invalid("snapshot set needs at least one snapshot"));
        }
        if data.ncols() != geom.len() {
            return Err(Error::invalid(format!("{} columns for a {}-element array", data.ncols(), geom.len())));
        }
        Ok(Self { data })
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.nrows()
    }

    /// Far-field sources at the given azimuths (degrees, elevation 0), each
    /// with CN(0, 1) symbols, plus CN(0, σ²) element noise with σ² set by
    /// `snr_db` per source.
    pub fn simulate(geom: &ArrayGeometry, azimuths_deg: &[f64], snr_db: f64, n: usize, seed: u64) -> Result<Self> {
        let steer: Vec<_> =
            azimuths_deg.iter().map(|&az| steering_vector(geom, az, 0.0)).collect::<Result<Vec<_>>>()?;
        let sigma = db_to_lin(-snr_db).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = CMatrix::zeros(n, geom.len());
        for t in 0..n {
            for a in &steer {
                let s = complex_gaussian(&mut rng);
                for m in 0..geom.len() {
                    data[(t, m)] += s * a[m];
                }
            }
            for m in 0..geom.len() {
                data[(t, m)] += complex_gaussian(&mut rng) * sigma;
            }
        }
        Self::new(data, geom)
    }
}

/// `R = (1/N) Σ x xᴴ`, Hermitian by construction.
pub fn sample_covariance(s: &SnapshotSet) -> CMatrix {
    let x = &s.data;
    let r = x.transpose() * x.conjugate() / Complex64::new(s.n_snapshots() as f64, 0.0);
    (&r + r.adjoint()).unscale(2.0)
}

/// Splits the elements, in order, into `k` contiguous equal subarrays.
pub fn subarray_split(geom: &ArrayGeometry, k: usize) -> Result<Vec<ArrayGeometry>> {
    if k == 0 || !geom.len().is_multiple_of(k) {
        return Err(Error::invalid(format!("{k} subarrays do not divide {} elements", geom.len())));
    }
    geom.elements.chunks(geom.len() / k).map(|c| ArrayGeometry::new(c.to_vec(), geom.wavelength)).collect()
}

/// Reference point of each subarray (its centroid), suitable as a TDOA
/// anchor.
pub fn subarray_anchors(parts: &[ArrayGeometry]) -> Vec<nalgebra::Vector3<f64>> {
    parts.iter().map(|g| g.centroid()).collect()
}
