//! MUSIC pseudo-spectra and peak picking.

use rayon::prelude::*;

use crate::channel::{arrival_signature, direction_from_angles};
use crate::linalg::{hermitian_eigen, is_hermitian, CMatrix, CVector};
use crate::scenario::ArrayGeometry;
use crate::{Error, Result};

/// Array response to a far-field source at (azimuth, elevation) in degrees.
pub fn steering_vector(geom: &ArrayGeometry, azimuth_deg: f64, elevation_deg: f64) -> Result<CVector> {
    let dir = direction_from_angles(azimuth_deg.to_radians(), elevation_deg.to_radians());
    Ok(arrival_signature(geom, dir, geom.wavelength)?.coefficients)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSpectrum {
    /// Strictly increasing azimuths, degrees.
    pub angles_deg: Vec<f64>,
    /// Positive pseudo-spectrum values.
    pub values: Vec<f64>,
    pub n_sources: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSpectrum2d {
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
    /// Row-major over (elevation, azimuth).
    pub values: Vec<f64>,
    pub n_sources: usize,
}

impl PseudoSpectrum2d {
    pub fn get(&self, el: usize, az: usize) -> f64 {
        self.values[el * self.azimuths_deg.len() + az]
    }

    /// (azimuth, elevation) of the global maximum.
    pub fn peak(&self) -> (f64, f64) {
        let i = argmax(&self.values);
        let n_az = self.azimuths_deg.len();
        (self.azimuths_deg[i % n_az], self.elevations_deg[i / n_az])
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b }).0
}

/// Signal subspace of `R`: eigenvectors of its `n_sources` largest
/// eigenvalues.
fn signal_subspace(r: &CMatrix, geom: &ArrayGeometry, n_sources: usize) -> Result<CMatrix> {
    let m = geom.len();
    if r.nrows() != m || r.ncols() != m {
        return Err(Error::invalid(format!("covariance is {}x{}, array has {m} elements", r.nrows(), r.ncols())));
    }
    if n_sources == 0 || n_sources >= m {
        return Err(Error::invalid(format!("n_sources must be in 1..{m} (got {n_sources})")));
    }
    if !is_hermitian(r, 1e-9 * r.norm().max(1.0)) {
        return Err(Error::invalid("covariance must be Hermitian"));
    }
    let (_, vecs) = hermitian_eigen(r);
    Ok(vecs.columns(m - n_sources, n_sources).into_owned())
}

/// `1/‖E_nᴴa‖²`, evaluated as `1/(‖a‖² − ‖E_sᴴa‖²)` since the noise and
/// signal subspaces are complementary.
fn music_value(es: &CMatrix, a: &CVector) -> f64 {
    let a2 = a.norm_squared();
    let proj = (es.adjoint() * a).norm_squared();
    1.0 / (a2 - proj).max(a2 * f64::EPSILON)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("angle grid must be non-empty and strictly increasing"));
    }
    Ok(())
}

/// Azimuth-only MUSIC (elevation 0).
pub fn music_spectrum(r: &CMatrix, geom: &ArrayGeometry, n_sources: usize, grid_deg: &[f64]) -> Result<PseudoSpectrum> {
    check_grid(grid_deg)?;
    let es = signal_subspace(r, geom, n_sources)?;
    let values = grid_deg
        .par_iter()
        .map(|&az| steering_vector(geom, az, 0.0).map(|a| music_value(&es, &a)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PseudoSpectrum { angles_deg: grid_deg.to_vec(), values, n_sources })
}

/// MUSIC over an azimuth × elevation grid, for planar arrays.
pub fn music_spectrum_2d(
    r: &CMatrix,
    geom: &ArrayGeometry,
    n_sources: usize,
    azimuths_deg: &[f64],
    elevations_deg: &[f64],
) -> Result<PseudoSpectrum2d> {
    check_grid(azimuths_deg)?;
    check_grid(elevations_deg)?;
    let es = signal_subspace(r, geom, n_sources)?;
    let n_az = azimuths_deg.len();
    let values = (0..n_az * elevations_deg.len())
        .into_par_iter()
        .map(|i| steering_vector(geom, azimuths_deg[i % n_az], elevations_deg[i / n_az]).map(|a| music_value(&es, &a)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PseudoSpectrum2d {
        azimuths_deg: azimuths_deg.to_vec(),
        elevations_deg: elevations_deg.to_vec(),
        values,
        n_sources,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoaEstimate {
    /// Refined peak angles, strongest first; equal peaks by ascending angle.
    pub angles_deg: Vec<f64>,
    /// Set when fewer local maxima exist than were requested.
    pub fewer_peaks_than_requested: bool,
}

/// The `n_peaks` largest interior local maxima, each refined by a
/// three-point parabola through its neighbours.
pub fn aoa_estimate(p: &PseudoSpectrum, n_peaks: usize) -> Result<AoaEstimate> {
    if n_peaks == 0 {
        return Err(Error::invalid("n_peaks must be >= 1"));
    }
    let v = &p.values;
    let n = v.len();
    let mut peaks: Vec<usize> = if n == 1 {
        vec![0]
    } else {
        (0..n)
            .filter(|&i| {
                let left = i == 0 || v[i] > v[i - 1];
                let right = i + 1 == n || v[i] >= v[i + 1];
                left && right
            })
            .collect()
    };
    peaks.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let fewer = peaks.len() < n_peaks;
    peaks.truncate(n_peaks);
    let angles_deg = peaks
        .into_iter()
        .map(|i| {
            if i == 0 || i + 1 == n {
                return p.angles_deg[i];
            }
            let (y0, y1, y2) = (v[i - 1], v[i], v[i + 1]);
            let den = y0 - 2.0 * y1 + y2;
            if den >= 0.0 {
                return p.angles_deg[i];
            }
            let delta = 0.5 * (y0 - y2) / den;
            let step = if delta >= 0.0 {
                p.angles_deg[i + 1] - p.angles_deg[i]
            } else {
                p.angles_deg[i] - p.angles_deg[i - 1]
            };
            p.angles_deg[i] + delta * step
        })
        .collect();
    Ok(AoaEstimate { angles_deg, fewer_peaks_than_requested: fewer })
}

/// Full width of the global peak at half its height, degrees, with linear
/// interpolation between grid points. Returns the grid span if the peak
/// does not fall to half height on both sides.
pub fn half_power_width(p: &PseudoSpectrum) -> f64 {
    let v = &p.values;
    let a = &p.angles_deg;
    let i = argmax(v);
    let half = v[i] / 2.0;
    let cross = |j: usize, k: usize| a[j] + (half - v[j]) / (v[k] - v[j]) * (a[k] - a[j]);
    let left = (1..=i).rev().find(|&j| v[j - 1] < half).map(|j| cross(j - 1, j));
    let right = (i..v.len() - 1).find(|&j| v[j + 1] < half).map(|j| cross(j, j + 1));
    match (left, right) {
        (Some(l), Some(r)) => r - l,
        _ => a[a.len() - 1] - a[0],
    }
}
