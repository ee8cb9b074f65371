//! TOML scenario files.
//!
//! Every section is optional and falls back to the testbed defaults.
//! Unknown keys are rejected by the parser; semantic checks are collected
//! by [`ScenarioFile::violations`] so a user sees every problem at once.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{make_ula, make_ura, place_ue_line_rotated, ArrayGeometry, Polarisation, SystemConfig, UePlacement};
use crate::analysis::Window;
use crate::channel::{synthesize, ChannelMatrix, ChannelModel, ChannelModelTag, PolarisationCoupling, Tap, TapSet};
use crate::detect::{DetectorKind, QamOrder};
use crate::frame::FrameSchedule;
use crate::hardening::RatioMetric;
use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub seed: u64,
    pub system: SystemConfig,
    pub array: ArraySection,
    pub users: UsersSection,
    pub schedule: FrameSchedule,
    pub channel: ChannelSection,
    pub link: LinkSection,
    pub hardening: HardeningSection,
    pub power_control: PowerControlSection,
    pub analysis: AnalysisSection,
    pub locate: LocateSection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            seed: 1,
            system: SystemConfig::default(),
            array: ArraySection::default(),
            users: UsersSection::default(),
            schedule: FrameSchedule::default(),
            channel: ChannelSection::default(),
            link: LinkSection::default(),
            hardening: HardeningSection::default(),
            power_control: PowerControlSection::default(),
            analysis: AnalysisSection::default(),
            locate: LocateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayKind {
    Ula,
    Ura,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySection {
    pub kind: ArrayKind,
    /// ULA only.
    pub n_elements: usize,
    /// URA only.
    pub rows: usize,
    pub cols: usize,
    pub spacing_lambda: f64,
    /// Design frequency of the element spacing; defaults to the system carrier.
    pub carrier_freq: Option<f64>,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self { kind: ArrayKind::Ula, n_elements: 128, rows: 4, cols: 32, spacing_lambda: 0.5, carrier_freq: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsersSection {
    pub n_users: usize,
    pub spacing_lambda: f64,
    pub distance: f64,
    pub rotation_deg: f64,
    /// Explicit positions override the line placement when non-empty.
    pub positions: Vec<[f64; 3]>,
}

impl Default for UsersSection {
    fn default() -> Self {
        Self { n_users: 12, spacing_lambda: 2.5, distance: 3.3, rotation_deg: 0.0, positions: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapEntry {
    pub delay_s: f64,
    pub gain_re: f64,
    #[serde(default)]
    pub gain_im: f64,
    #[serde(default)]
    pub source: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub model: ChannelModelTag,
    /// Adds 1/r amplitude decay to the spherical model.
    pub amplitude_decay: bool,
    /// Cross-polar coupling amplitude between H and V (0 = none).
    pub xpd: f64,
    pub ue_polarisation: Polarisation,
    pub taps: Vec<TapEntry>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            model: ChannelModelTag::Spherical,
            amplitude_decay: false,
            xpd: 0.0,
            ue_polarisation: Polarisation::V,
            taps: vec![TapEntry { delay_s: 0.0, gain_re: 1.0, gain_im: 0.0, source: None }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub detector: DetectorKind,
    pub order: QamOrder,
    /// Per-antenna receive SNR for a unit-gain link at unit transmit power.
    pub snr_db: f64,
    pub n_symbols: usize,
    /// Equalised samples kept per user for constellation dumps.
    pub constellation_samples: usize,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            detector: DetectorKind::Mmse,
            order: QamOrder::Qam256,
            snr_db: 30.0,
            n_symbols: 10_000,
            constellation_samples: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardeningSection {
    pub antenna_counts: Vec<usize>,
    pub n_users: usize,
    pub n_seeds: usize,
    pub metric: RatioMetric,
}

impl Default for HardeningSection {
    fn default() -> Self {
        Self { antenna_counts: vec![32, 112], n_users: 12, n_seeds: 200, metric: RatioMetric::MeanEigenvalue }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingKind {
    Static,
    BlockRayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcAlgorithmChoice {
    All,
    FixedSnr,
    FixedSinr,
    Hardening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerControlSection {
    pub algorithm: PcAlgorithmChoice,
    pub iterations: usize,
    pub n_antennas: usize,
    pub path_gains_db: Vec<f64>,
    pub noise_dbm: f64,
    pub initial_dbm: f64,
    pub target_db: f64,
    pub max_step_db: f64,
    pub min_dbm: f64,
    pub max_dbm: f64,
    pub update_interval: usize,
    pub interference_margin_db: f64,
    pub fading: FadingKind,
}

impl Default for PowerControlSection {
    fn default() -> Self {
        Self {
            algorithm: PcAlgorithmChoice::All,
            iterations: 100,
            n_antennas: 64,
            path_gains_db: vec![-75.0, -95.0],
            noise_dbm: -90.0,
            initial_dbm: 0.0,
            target_db: 10.0,
            max_step_db: 1.0,
            min_dbm: -40.0,
            max_dbm: 23.0,
            update_interval: 10,
            interference_margin_db: 0.5,
            fading: FadingKind::Static,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// 1-based user id.
    pub user: usize,
    pub thresholds: Vec<f64>,
    pub window: Window,
    pub noise_floor_db: f64,
    /// Run the comb-pilot estimate → interpolation path instead of using
    /// the full-grid channel directly.
    pub via_pilots: bool,
    pub pilot_snr_db: Option<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            user: 1,
            thresholds: vec![0.9, 0.5],
            window: Window::Rectangular,
            noise_floor_db: 25.0,
            via_pilots: false,
            pilot_snr_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocateSection {
    pub source_angles_deg: Vec<f64>,
    pub music_snr_db: f64,
    pub n_snapshots: usize,
    pub grid_step_deg: f64,
    pub subarrays: usize,
    pub anchors: Vec<[f64; 3]>,
    pub source: [f64; 3],
    pub initial_guess: Option<[f64; 3]>,
    pub tdoa_noise_std_s: f64,
    pub trials: usize,
    /// Ground-truth line-of-sight flag carried through to the outputs.
    pub los: bool,
}

impl Default for LocateSection {
    fn default() -> Self {
        Self {
            source_angles_deg: vec![20.0],
            music_snr_db: 10.0,
            n_snapshots: 200,
            grid_step_deg: 0.05,
            subarrays: 4,
            anchors: vec![[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [0.0, 100.0, 0.0], [100.0, 100.0, 0.0]],
            source: [37.0, 61.0, 0.0],
            initial_guess: None,
            tdoa_noise_std_s: 1e-9,
            trials: 100,
            los: true,
        }
    }
}

impl ScenarioFile {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let parsed: ScenarioFile = toml::from_str(s)
            .map_err(|e| Error::Config(vec![e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")]))?;
        let v = parsed.violations();
        if v.is_empty() {
            Ok(parsed)
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always serialisable")
    }

    /// Every semantic problem in the file.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.system.violations();
        let a = &self.array;
        match a.kind {
            ArrayKind::Ula if a.n_elements == 0 => v.push("array.n_elements must be >= 1".into()),
            ArrayKind::Ura if a.rows == 0 || a.cols == 0 => v.push("array.rows and array.cols must be >= 1".into()),
            _ => {}
        }
        if !(a.spacing_lambda > 0.0) {
            v.push("array.spacing_lambda must be > 0".into());
        }
        if let Some(f) = a.carrier_freq {
            if !(f > 0.0) {
                v.push("array.carrier_freq must be > 0".into());
            }
        }
        let u = &self.users;
        if u.positions.is_empty() {
            if u.n_users == 0 {
                v.push("users.n_users must be >= 1".into());
            }
            if !(u.distance > 0.0) {
                v.push(format!("users.distance must be > 0 (got {})", u.distance));
            }
        }
        v.extend(self.schedule.violations(&self.system));
        if !(self.channel.xpd >= 0.0 && self.channel.xpd <= 1.0) {
            v.push("channel.xpd must lie in [0, 1]".into());
        }
        if self.channel.model == ChannelModelTag::Tapped && self.channel.taps.is_empty() {
            v.push("channel.taps must not be empty for the tapped model".into());
        }
        for (i, t) in self.channel.taps.iter().enumerate() {
            if !(t.delay_s >= 0.0) {
                v.push(format!("channel.taps[{i}].delay_s must be >= 0"));
            }
        }
        if self.link.n_symbols == 0 {
            v.push("link.n_symbols must be >= 1".into());
        }
        if !self.link.snr_db.is_finite() {
            v.push("link.snr_db must be finite".into());
        }
        let h = &self.hardening;
        if h.n_users < 2 {
            v.push("hardening.n_users must be >= 2".into());
        }
        if h.n_seeds == 0 {
            v.push("hardening.n_seeds must be >= 1".into());
        }
        if h.antenna_counts.contains(&0) || h.antenna_counts.is_empty() {
            v.push("hardening.antenna_counts must be non-empty and positive".into());
        }
        let p = &self.power_control;
        if p.path_gains_db.is_empty() {
            v.push("power_control.path_gains_db must list at least one user".into());
        }
        if p.n_antennas == 0 {
            v.push("power_control.n_antennas must be >= 1".into());
        }
        if !(p.min_dbm < p.max_dbm) {
            v.push("power_control.min_dbm must be below max_dbm".into());
        }
        if !(p.max_step_db > 0.0) {
            v.push("power_control.max_step_db must be > 0".into());
        }
        if p.update_interval < 2 {
            v.push("power_control.update_interval must be >= 2 slots".into());
        }
        let an = &self.analysis;
        if an.user == 0 {
            v.push("analysis.user is 1-based and must be >= 1".into());
        }
        if an.thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            v.push("analysis.thresholds must lie in (0, 1)".into());
        }
        let l = &self.locate;
        if l.n_snapshots == 0 {
            v.push("locate.n_snapshots must be >= 1".into());
        }
        if !(l.grid_step_deg > 0.0) {
            v.push("locate.grid_step_deg must be > 0".into());
        }
        if l.anchors.len() < 3 {
            v.push(format!("locate.anchors needs at least 3 entries (got {})", l.anchors.len()));
        }
        if !(l.tdoa_noise_std_s >= 0.0) {
            v.push("locate.tdoa_noise_std_s must be >= 0".into());
        }
        v
    }

    pub fn array_carrier(&self) -> f64 {
        self.array.carrier_freq.unwrap_or(self.system.carrier_freq)
    }

    pub fn build_array(&self) -> Result<ArrayGeometry> {
        let f = self.array_carrier();
        match self.array.kind {
            ArrayKind::Ula => make_ula(self.array.n_elements, f),
            ArrayKind::Ura => make_ura(self.array.rows, self.array.cols, self.array.spacing_lambda, f),
        }
    }

    pub fn build_users(&self) -> Result<UePlacement> {
        let u = &self.users;
        if !u.positions.is_empty() {
            return UePlacement::new(u.positions.iter().map(|p| Vector3::from(*p)).collect());
        }
        place_ue_line_rotated(u.n_users, u.spacing_lambda, u.distance, self.system.carrier_freq, u.rotation_deg)
    }

    pub fn channel_model(&self) -> Result<ChannelModel> {
        let decay = self.channel.amplitude_decay;
        Ok(match self.channel.model {
            ChannelModelTag::Planar => ChannelModel::Planar { amplitude_decay: decay },
            ChannelModelTag::Spherical => ChannelModel::Spherical { amplitude_decay: decay },
            ChannelModelTag::Iid => ChannelModel::Iid,
            ChannelModelTag::Tapped => ChannelModel::Tapped(self.build_taps()?),
        })
    }

    pub fn coupling(&self) -> PolarisationCoupling {
        PolarisationCoupling { ue_polarisation: self.channel.ue_polarisation, xpd: self.channel.xpd }
    }

    /// Narrowband K×M channel for the scenario's array, users and model.
    pub fn build_channel(&self) -> Result<ChannelMatrix> {
        synthesize(&self.build_array()?, &self.build_users()?, &self.channel_model()?, self.coupling(), self.seed)
    }

    pub fn build_taps(&self) -> Result<TapSet> {
        TapSet::new(
            self.channel
                .taps
                .iter()
                .map(|t| Tap {
                    delay: t.delay_s,
                    gain: Complex64::new(t.gain_re, t.gain_im),
                    source_point: t.source.map(Vector3::from),
                })
                .collect(),
        )
    }
}
