//! System numerology, base-station array geometry and user placement.
//!
//! Coordinate frame: linear arrays lie on the x-axis, planar arrays in the
//! x–z plane, both centred on the origin with boresight along +y. Users
//! are placed in the y > 0 half-space.

mod file;

pub use file::{
    AnalysisSection, ArrayKind, ArraySection, ChannelSection, FadingKind, HardeningSection, LinkSection, LocateSection,
    PcAlgorithmChoice, PowerControlSection, ScenarioFile, TapEntry, UsersSection,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{wavelength, Error, Result};

/// Carrier/OFDM/frame numerology of the uplink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub sampling_rate: f64,
    pub subcarrier_spacing: f64,
    pub n_fft: usize,
    pub n_occupied: usize,
    pub frame_duration: f64,
    pub subframe_duration: f64,
    pub slot_duration: f64,
    pub tdd_period_slots: usize,
    pub n_bs_antennas: usize,
    pub n_users: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        default_config()
    }
}

/// The testbed numerology: 128 antennas, 12 users, 3.51 GHz, 20 MHz,
/// 2048-point FFT at 15 kHz with 1200 occupied tones, LTE frame timing.
pub fn default_config() -> SystemConfig {
    SystemConfig {
        carrier_freq: 3.51e9,
        bandwidth: 20e6,
        sampling_rate: 30.72e6,
        subcarrier_spacing: 15e3,
        n_fft: 2048,
        n_occupied: 1200,
        frame_duration: 10e-3,
        subframe_duration: 1e-3,
        slot_duration: 0.5e-3,
        tdd_period_slots: 1,
        n_bs_antennas: 128,
        n_users: 12,
    }
}

const REL_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

impl SystemConfig {
    /// Every violated invariant, in a stable order. Empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let reals = [
            ("carrier_freq", self.carrier_freq),
            ("bandwidth", self.bandwidth),
            ("sampling_rate", self.sampling_rate),
            ("subcarrier_spacing", self.subcarrier_spacing),
            ("frame_duration", self.frame_duration),
            ("subframe_duration", self.subframe_duration),
            ("slot_duration", self.slot_duration),
        ];
        for (name, x) in reals {
            if !(x.is_finite() && x > 0.0) {
                v.push(format!("system.{name} must be finite and > 0 (got {x})"));
            }
        }
        let counts = [
            ("n_fft", self.n_fft),
            ("n_occupied", self.n_occupied),
            ("tdd_period_slots", self.tdd_period_slots),
            ("n_bs_antennas", self.n_bs_antennas),
            ("n_users", self.n_users),
        ];
        for (name, n) in counts {
            if n == 0 {
                v.push(format!("system.{name} must be > 0"));
            }
        }
        if self.n_occupied > self.n_fft {
            v.push(format!("system.n_occupied ({}) exceeds n_fft ({})", self.n_occupied, self.n_fft));
        }
        if !close(self.sampling_rate, self.n_fft as f64 * self.subcarrier_spacing) {
            v.push(format!(
                "system.sampling_rate ({}) != n_fft x subcarrier_spacing ({})",
                self.sampling_rate,
                self.n_fft as f64 * self.subcarrier_spacing
            ));
        }
        if !close(self.frame_duration, 10.0 * self.subframe_duration) {
            v.push("system.frame_duration must equal 10 x subframe_duration".into());
        }
        if !close(self.frame_duration, 20.0 * self.slot_duration) {
            v.push("system.frame_duration must equal 20 x slot_duration".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.carrier_freq)
    }

    pub fn slots_per_frame(&self) -> usize {
        (self.frame_duration / self.slot_duration).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarisation {
    H,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub position: Vector3<f64>,
    pub polarisation: Polarisation,
}

/// Base-station antenna positions (metres) with polarisation tags.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub elements: Vec<Element>,
    pub wavelength: f64,
}

impl ArrayGeometry {
    /// Builds a geometry from raw parts, checking positions are unique.
    pub fn new(elements: Vec<Element>, wavelength: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("array geometry needs at least one element"));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::invalid(format!("wavelength must be > 0 (got {wavelength})")));
        }
        check_unique(elements.iter().map(|e| &e.position), "array element")?;
        Ok(Self { elements, wavelength })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.elements.iter().map(|e| e.position).collect()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.elements.iter().map(|e| e.position).sum::<Vector3<f64>>() / self.len() as f64
    }

    /// Largest distance between any two elements.
    pub fn aperture(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.elements.iter().enumerate() {
            for b in &self.elements[i + 1..] {
                best = best.max((a.position - b.position).norm());
            }
        }
        best
    }

    /// Far-field (Fraunhofer) distance 2D²/λ.
    pub fn fraunhofer_distance(&self) -> f64 {
        let d = self.aperture();
        2.0 * d * d / self.wavelength
    }

    pub fn count_polarisation(&self, pol: Polarisation) -> usize {
        self.elements.iter().filter(|e| e.polarisation == pol).count()
    }
}

fn check_unique<'a>(points: impl Iterator<Item = &'a Vector3<f64>>, what: &str) -> Result<()> {
    let pts: Vec<&Vector3<f64>> = points.collect();
    for (i, a) in pts.iter().enumerate() {
        if let Some(j) = pts[i + 1..].iter().position(|b| *a == *b) {
            return Err(Error::invalid(format!("{what} positions {i} and {} coincide", i + 1 + j)));
        }
    }
    Ok(())
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be > 0 (got {x})")))
    }
}

/// Uniform linear array on the x-axis at half-wavelength spacing, centred
/// on the origin, all elements vertically polarised.
pub fn make_ula(n_elements: usize, carrier_freq: f64) -> Result<ArrayGeometry> {
    if n_elements == 0 {
        return Err(Error::invalid("ULA needs at least one element"));
    }
    positive("carrier_freq", carrier_freq)?;
    let lambda = wavelength(carrier_freq);
    let spacing = lambda / 2.0;
    let mid = (n_elements as f64 - 1.0) / 2.0;
    let elements = (0..n_elements)
        .map(|i| Element {
            position: Vector3::new((i as f64 - mid) * spacing, 0.0, 0.0),
            polarisation: Polarisation::V,
        })
        .collect();
    ArrayGeometry::new(elements, lambda)
}

/// Uniform rectangular array in the x–z plane. Rows run along z, columns
/// along x; polarisation alternates H, V, H, … in row-major order.
pub fn make_ura(rows: usize, cols: usize, spacing_lambda: f64, carrier_freq: f64) -> Result<ArrayGeometry> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!("URA dimensions must be >= 1 (got {rows}x{cols})")));
    }
    positive("spacing_lambda", spacing_lambda)?;
    positive("carrier_freq", carrier_freq)?;
    let lambda = wavelength(carrier_freq);
    let pitch = spacing_lambda * lambda;
    let (rmid, cmid) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
    let mut elements = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let idx = r * cols + c;
            elements.push(Element {
                position: Vector3::new((c as f64 - cmid) * pitch, 0.0, (r as f64 - rmid) * pitch),
                polarisation: if idx.is_multiple_of(2) { Polarisation::H } else { Polarisation::V },
            });
        }
    }
    ArrayGeometry::new(elements, lambda)
}

/// Single-antenna terminal positions (metres).
#[derive(Debug, Clone, PartialEq)]
pub struct UePlacement {
    pub terminals: Vec<Vector3<f64>>,
}

impl UePlacement {
    pub fn new(terminals: Vec<Vector3<f64>>) -> Result<Self> {
        if terminals.is_empty() {
            return Err(Error::invalid("user placement needs at least one terminal"));
        }
        check_unique(terminals.iter(), "terminal")?;
        Ok(Self { terminals })
    }

    pub fn len(&self) -> usize {
        self.terminals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminals.is_empty()
    }

    /// Smallest distance from any terminal to the origin's broadside plane
    /// point, i.e. the nearest-client distance to the array centre.
    pub fn nearest_distance(&self) -> f64 {
        self.terminals.iter().map(|t| t.norm()).fold(f64::INFINITY, f64::min)
    }
}

/// Users on a straight line at perpendicular distance `distance` from the
/// array, spaced `spacing_lambda` wavelengths apart and centred on
/// boresight. Equivalent to [`place_ue_line_rotated`] with zero rotation.
pub fn place_ue_line(n_users: usize, spacing_lambda: f64, distance: f64, carrier_freq: f64) -> Result<UePlacement> {
    place_ue_line_rotated(n_users, spacing_lambda, distance, carrier_freq, 0.0)
}

/// As [`place_ue_line`], with the line rotated by `rotation_deg` about its
/// centre in the horizontal plane (a slanted group of users).
pub fn place_ue_line_rotated(
    n_users: usize,
    spacing_lambda: f64,
    distance: f64,
    carrier_freq: f64,
    rotation_deg: f64,
) -> Result<UePlacement> {
    if n_users == 0 {
        return Err(Error::invalid("need at least one user"));
    }
    positive("distance", distance)?;
    positive("carrier_freq", carrier_freq)?;
    if n_users > 1 {
        positive("spacing_lambda", spacing_lambda)?;
    }
    if !rotation_deg.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let step = spacing_lambda * wavelength(carrier_freq);
    let mid = (n_users as f64 - 1.0) / 2.0;
    let (s, c) = rotation_deg.to_radians().sin_cos();
    let terminals: Vec<_> = (0..n_users)
        .map(|i| {
            let along = (i as f64 - mid) * step;
            Vector3::new(along * c, distance + along * s, 0.0)
        })
        .collect();
    if terminals.iter().any(|t| t.y <= 0.0) {
        return Err(Error::invalid("rotated user line crosses the array plane"));
    }
    UePlacement::new(terminals)
}

/// Preset geometries for the two atrium trials.
pub mod presets {
    use super::*;

    /// 128-element λ/2 dipole ULA designed at 3.5 GHz.
    pub fn linear_dipole_array() -> ArrayGeometry {
        make_ula(128, 3.5e9).expect("static preset")
    }

    /// Twelve users in a line with 2.5λ spacing at the given nearest
    /// distance (3.3, 12.5 or 18.1 m in the first trial).
    pub fn linear_trial_users(distance: f64) -> Result<UePlacement> {
        place_ue_line(12, 2.5, distance, 3.5e9)
    }

    /// 4×32 dual-polarised patch panel at the licensed carrier.
    pub fn patch_panel_array() -> ArrayGeometry {
        make_ura(4, 32, 0.5, 3.51e9).expect("static preset")
    }

    /// `n_users` in a line with 2.5λ spacing on the far balcony, 24.8 m away.
    pub fn balcony_users(n_users: usize) -> Result<UePlacement> {
        place_ue_line(n_users, 2.5, 24.8, 3.51e9)
    }
}
