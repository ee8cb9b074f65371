//! Wideband channel frequency responses and their on-disk format.
//!
//! A tensor on disk is a TOML header plus a data file next to it. The data
//! file holds one record per entry of `(freq_index, antenna_index,
//! user_index, re, im)`, either as CSV or as little-endian binary records
//! of three `u32` followed by two `f64` (28 bytes each).

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TapSet;
use crate::scenario::{ArrayGeometry, UePlacement};
use crate::{Complex64, Error, Result};

/// Which occupied subcarriers the first tensor axis samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrequencyGrid {
    /// Every occupied subcarrier.
    Full { n_occupied: usize },
    /// Every `stride`-th subcarrier starting at a per-user offset.
    RbDecimated { n_occupied: usize, stride: usize, offsets: Vec<usize> },
}

impl FrequencyGrid {
    /// The comb used by frequency-orthogonal pilots: stride 12, user k
    /// (0-based) starting at subcarrier k.
    pub fn rb_comb(n_occupied: usize, n_users: usize) -> Self {
        FrequencyGrid::RbDecimated { n_occupied, stride: 12, offsets: (0..n_users).collect() }
    }

    pub fn n_occupied(&self) -> usize {
        match self {
            FrequencyGrid::Full { n_occupied } | FrequencyGrid::RbDecimated { n_occupied, .. } => *n_occupied,
        }
    }

    pub fn n_points(&self) -> usize {
        match self {
            FrequencyGrid::Full { n_occupied } => *n_occupied,
            FrequencyGrid::RbDecimated { n_occupied, stride, .. } => n_occupied / stride,
        }
    }

    /// Occupied-subcarrier index of frequency point `p` for `user`.
    pub fn subcarrier(&self, p: usize, user: usize) -> usize {
        match self {
            FrequencyGrid::Full { .. } => p,
            FrequencyGrid::RbDecimated { stride, offsets, .. } => p * stride + offsets[user],
        }
    }

    /// Baseband frequency (Hz) of occupied subcarrier `sc`, with the band
    /// centred on subcarrier `n_occupied / 2`.
    pub fn subcarrier_freq(&self, sc: usize, spacing: f64) -> f64 {
        (sc as f64 - (self.n_occupied() / 2) as f64) * spacing
    }

    pub fn freq(&self, p: usize, user: usize, spacing: f64) -> f64 {
        self.subcarrier_freq(self.subcarrier(p, user), spacing)
    }

    fn violations(&self, n_users: usize) -> Vec<String> {
        let mut v = Vec::new();
        match self {
            FrequencyGrid::Full { n_occupied } if *n_occupied == 0 => v.push("grid has no subcarriers".into()),
            FrequencyGrid::RbDecimated { n_occupied, stride, offsets } => {
                if *stride == 0 || n_occupied % stride != 0 {
                    v.push(format!("stride {stride} must divide n_occupied {n_occupied}"));
                }
                if offsets.len() != n_users {
                    v.push(format!("{} offsets for {n_users} users", offsets.len()));
                }
                if offsets.iter().any(|o| o >= stride) {
                    v.push("comb offsets must be below the stride".into());
                }
            }
            _ => {}
        }
        v
    }
}

/// Channel frequency response indexed (frequency point, BS antenna, user).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    data: Vec<Complex64>,
    n_antennas: usize,
    n_users: usize,
    pub grid: FrequencyGrid,
    pub subcarrier_spacing: f64,
}

impl ChannelTensor {
    pub fn zeros(grid: FrequencyGrid, subcarrier_spacing: f64, n_antennas: usize, n_users: usize) -> Result<Self> {
        let v = grid.violations(n_users);
        if !v.is_empty() {
            return Err(Error::Config(v));
        }
        if n_antennas == 0 || n_users == 0 {
            return Err(Error::invalid("tensor needs at least one antenna and one user"));
        }
        if !(subcarrier_spacing > 0.0) {
            return Err(Error::invalid("subcarrier spacing must be > 0"));
        }
        let n = grid.n_points() * n_antennas * n_users;
        Ok(Self { data: vec![Complex64::new(0.0, 0.0); n], n_antennas, n_users, grid, subcarrier_spacing })
    }

    /// Builds a tensor by evaluating `f(point, antenna, user)`.
    pub fn from_fn(
        grid: FrequencyGrid,
        subcarrier_spacing: f64,
        n_antennas: usize,
        n_users: usize,
        f: impl Fn(usize, usize, usize) -> Complex64 + Sync,
    ) -> Result<Self> {
        let mut t = Self::zeros(grid, subcarrier_spacing, n_antennas, n_users)?;
        let per_point = n_antennas * n_users;
        t.data.par_chunks_mut(per_point).enumerate().for_each(|(p, chunk)| {
            for m in 0..n_antennas {
                for k in 0..n_users {
                    chunk[m * n_users + k] = f(p, m, k);
                }
            }
        });
        if t.data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("channel tensor entries must be finite"));
        }
        Ok(t)
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    fn idx(&self, p: usize, m: usize, k: usize) -> usize {
        (p * self.n_antennas + m) * self.n_users + k
    }

    pub fn get(&self, p: usize, m: usize, k: usize) -> Complex64 {
        self.data[self.idx(p, m, k)]
    }

    pub fn set(&mut self, p: usize, m: usize, k: usize, v: Complex64) {
        let i = self.idx(p, m, k);
        self.data[i] = v;
    }

    /// Frequency series for one antenna/user pair.
    pub fn series(&self, m: usize, k: usize) -> Vec<Complex64> {
        (0..self.n_points()).map(|p| self.get(p, m, k)).collect()
    }

    /// Baseband frequency of point `p` for user `k`.
    pub fn freq(&self, p: usize, k: usize) -> f64 {
        self.grid.freq(p, k, self.subcarrier_spacing)
    }

    /// Samples a full-grid tensor on the pilot comb of `stride` with user
    /// k starting at subcarrier `k mod stride`.
    pub fn decimate(&self, stride: usize) -> Result<Self> {
        let FrequencyGrid::Full { n_occupied } = self.grid else {
            return Err(Error::invalid("only full-grid tensors can be decimated"));
        };
        let grid =
            FrequencyGrid::RbDecimated { n_occupied, stride, offsets: (0..self.n_users).map(|k| k % stride).collect() };
        let g = grid.clone();
        Self::from_fn(grid, self.subcarrier_spacing, self.n_antennas, self.n_users, |p, m, k| {
            self.get(g.subcarrier(p, k), m, k)
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Writes the header to `path` and the data file beside it.
    pub fn write(&self, path: &Path, format: TensorFormat) -> Result<()> {
        let data_path = data_path(path, format);
        let header = TensorHeader {
            format,
            n_points: self.n_points(),
            n_antennas: self.n_antennas,
            n_users: self.n_users,
            subcarrier_spacing: self.subcarrier_spacing,
            data_file: data_path.file_name().unwrap().to_string_lossy().into_owned(),
            grid: self.grid.clone(),
        };
        fs::write(path, toml::to_string(&header).map_err(|e| Error::Format(e.to_string()))?)?;
        let mut w = BufWriter::new(fs::File::create(&data_path)?);
        match format {
            TensorFormat::Csv => writeln!(w, "freq_index,antenna_index,user_index,re,im")?,
            TensorFormat::Binary => {}
        }
        for p in 0..self.n_points() {
            for m in 0..self.n_antennas {
                for k in 0..self.n_users {
                    let z = self.get(p, m, k);
                    match format {
                        TensorFormat::Csv => writeln!(w, "{p},{m},{k},{},{}", z.re, z.im)?,
                        TensorFormat::Binary => {
                            for i in [p, m, k] {
                                w.write_all(&(i as u32).to_le_bytes())?;
                            }
                            w.write_all(&z.re.to_le_bytes())?;
                            w.write_all(&z.im.to_le_bytes())?;
                        }
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a tensor written by [`ChannelTensor::write`]. Every index
    /// must appear exactly once.
    pub fn read(path: &Path) -> Result<Self> {
        let header: TensorHeader =
            toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(e.to_string()))?;
        if header.grid.n_points() != header.n_points {
            return Err(Error::Format(format!(
                "header n_points {} disagrees with grid ({})",
                header.n_points,
                header.grid.n_points()
            )));
        }
        let mut t = Self::zeros(header.grid, header.subcarrier_spacing, header.n_antennas, header.n_users)?;
        let mut seen = vec![false; t.data.len()];
        let data_path = path.with_file_name(&header.data_file);
        let mut put = |p: usize, m: usize, k: usize, z: Complex64| -> Result<()> {
            if p >= t.n_points() || m >= t.n_antennas || k >= t.n_users {
                return Err(Error::Format(format!("index ({p}, {m}, {k}) out of range")));
            }
            let i = t.idx(p, m, k);
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Format(format!("duplicate record ({p}, {m}, {k})")));
            }
            t.data[i] = z;
            Ok(())
        };
        match header.format {
            TensorFormat::Csv => {
                let text = fs::read_to_string(&data_path)?;
                for (n, line) in text.lines().enumerate().skip(1) {
                    let f: Vec<&str> = line.split(',').collect();
                    if f.len() != 5 {
                        return Err(Error::Format(format!("line {}: expected 5 fields", n + 1)));
                    }
                    let bad = |_| Error::Format(format!("line {}: unparsable field", n + 1));
                    let p: usize = f[0].trim().parse().map_err(bad)?;
                    let m: usize = f[1].trim().parse().map_err(bad)?;
                    let k: usize = f[2].trim().parse().map_err(bad)?;
                    let bad = |_| Error::Format(format!("line {}: unparsable value", n + 1));
                    let re: f64 = f[3].trim().parse().map_err(bad)?;
                    let im: f64 = f[4].trim().parse().map_err(bad)?;
                    put(p, m, k, Complex64::new(re, im))?;
                }
            }
            TensorFormat::Binary => {
                let bytes = fs::read(&data_path)?;
                if bytes.len() % RECORD_BYTES != 0 {
                    return Err(Error::Format(format!("binary length {} is not a multiple of 28", bytes.len())));
                }
                for rec in bytes.chunks_exact(RECORD_BYTES) {
                    let u = |o: usize| u32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as usize;
                    let f = |o: usize| f64::from_le_bytes(rec[o..o + 8].try_into().unwrap());
                    put(u(0), u(4), u(8), Complex64::new(f(12), f(20)))?;
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!(
                "{} records missing (first at flat index {missing})",
                seen.iter().filter(|s| !**s).count()
            )));
        }
        Ok(t)
    }
}

const RECORD_BYTES: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorFormat {
    Csv,
    Binary,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorHeader {
    format: TensorFormat,
    n_points: usize,
    n_antennas: usize,
    n_users: usize,
    subcarrier_spacing: f64,
    data_file: String,
    grid: FrequencyGrid,
}

fn data_path(header: &Path, format: TensorFormat) -> PathBuf {
    let stem = header.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "tensor".into());
    let ext = match format {
        TensorFormat::Csv => "csv",
        TensorFormat::Binary => "bin",
    };
    header.with_file_name(format!("{stem}.data.{ext}"))
}

/// Frequency response of a tap set across `grid`:
/// `H(f, m) = Σ gain · exp(−j2πf·delay) · s_m` where `s_m` is the
/// spherical phase `exp(j2π/λ·(|src − p_m| − |src − c|))` for taps with a
/// source point (c the array centroid) and 1 otherwise. Every user of `ue`
/// sees the same taps.
pub fn tapped_cfr(
    taps: &TapSet,
    geom: &ArrayGeometry,
    ue: &UePlacement,
    grid: &FrequencyGrid,
    subcarrier_spacing: f64,
) -> Result<ChannelTensor> {
    let k0 = 2.0 * PI / geom.wavelength;
    let centroid = geom.centroid();
    // spatial[l][m]
    let spatial: Vec<Vec<Complex64>> = taps
        .taps()
        .iter()
        .map(|t| match t.source_point {
            Some(src) => {
                let r0 = (src - centroid).norm();
                geom.elements.iter().map(|e| Complex64::cis(k0 * ((src - e.position).norm() - r0))).collect()
            }
            None => vec![Complex64::new(1.0, 0.0); geom.len()],
        })
        .collect();
    ChannelTensor::from_fn(grid.clone(), subcarrier_spacing, geom.len(), ue.len(), |p, m, k| {
        let f = grid.freq(p, k, subcarrier_spacing);
        taps.taps().iter().zip(&spatial).map(|(t, s)| t.gain * Complex64::cis(-2.0 * PI * f * t.delay) * s[m]).sum()
    })
}
