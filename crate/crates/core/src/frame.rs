//! Frame schedule, frequency-orthogonal pilots, least-squares channel
//! estimation and uncoded spectral-efficiency accounting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, ChannelTensor, FrequencyGrid};
use crate::linalg::CMatrix;
use crate::scenario::SystemConfig;
use crate::{Complex64, Error, Result};

/// Pilot comb stride in subcarriers (one resource block).
pub const PILOT_STRIDE: usize = 12;

/// Comb allocation: user `k` (1-based) owns occupied subcarriers
/// `k−1, k−1+12, k−1+24, …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotMap {
    n_occupied: usize,
    assignments: Vec<Vec<usize>>,
}

pub fn pilot_map(n_users: usize, n_occupied: usize) -> Result<PilotMap> {
    if n_users == 0 || n_users > PILOT_STRIDE {
        return Err(Error::invalid(format!(
            "a stride-{PILOT_STRIDE} comb supports 1..={PILOT_STRIDE} users (got {n_users})"
        )));
    }
    if n_occupied == 0 || !n_occupied.is_multiple_of(PILOT_STRIDE) {
        return Err(Error::invalid(format!("n_occupied ({n_occupied}) must be a positive multiple of {PILOT_STRIDE}")));
    }
    let assignments = (0..n_users).map(|k| (k..n_occupied).step_by(PILOT_STRIDE).collect()).collect();
    Ok(PilotMap { n_occupied, assignments })
}

impl PilotMap {
    pub fn n_users(&self) -> usize {
        self.assignments.len()
    }

    pub fn n_occupied(&self) -> usize {
        self.n_occupied
    }

    /// Subcarriers of 1-based `user_id`.
    pub fn tones(&self, user_id: usize) -> &[usize] {
        &self.assignments[user_id - 1]
    }

    /// 0-based user owning subcarrier `sc`, if any.
    pub fn owner(&self, sc: usize) -> Option<usize> {
        let k = sc % PILOT_STRIDE;
        (sc < self.n_occupied && k < self.n_users()).then_some(k)
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid::rb_comb(self.n_occupied, self.n_users())
    }
}

/// OFDM symbol budget of one radio frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSchedule {
    pub symbols_per_slot: usize,
    pub slots_per_frame: usize,
    pub ul_pilot_symbols_per_frame: usize,
    pub ul_data_symbols_per_frame: usize,
    pub dl_symbols_per_frame: usize,
}

impl Default for FrameSchedule {
    /// Normal-CP numerology (7 symbols per 0.5 ms slot, 140 per frame),
    /// every slot uplink, with 138 data and 2 pilot symbols. 138 is the
    /// output of [`solve_data_symbols`] for 12 users at 256-QAM against a
    /// 79.4 bits/s/Hz target on the default configuration.
    fn default() -> Self {
        Self {
            symbols_per_slot: 7,
            slots_per_frame: 20,
            ul_pilot_symbols_per_frame: 2,
            ul_data_symbols_per_frame: 138,
            dl_symbols_per_frame: 0,
        }
    }
}

impl FrameSchedule {
    pub fn symbols_per_frame(&self) -> usize {
        self.symbols_per_slot * self.slots_per_frame
    }

    pub fn violations(&self, cfg: &SystemConfig) -> Vec<String> {
        let mut v = Vec::new();
        let used = self.ul_pilot_symbols_per_frame + self.ul_data_symbols_per_frame + self.dl_symbols_per_frame;
        if used > self.symbols_per_frame() {
            v.push(format!("schedule uses {used} symbols but a frame holds {}", self.symbols_per_frame()));
        }
        if self.slots_per_frame != cfg.slots_per_frame() {
            v.push(format!(
                "schedule.slots_per_frame ({}) disagrees with the system timing ({})",
                self.slots_per_frame,
                cfg.slots_per_frame()
            ));
        }
        v
    }
}

/// Raw uplink sum spectral efficiency in bits/s/Hz: all users' modulated
/// bits per frame over frame duration × bandwidth.
pub fn uncoded_sum_se(n_users: usize, bits_per_symbol: usize, sched: &FrameSchedule, cfg: &SystemConfig) -> f64 {
    let bits = n_users as f64 * bits_per_symbol as f64 * cfg.n_occupied as f64 * sched.ul_data_symbols_per_frame as f64;
    bits / (cfg.frame_duration * cfg.bandwidth)
}

/// Sum rate in bits/s for a spectral efficiency.
pub fn throughput(se: f64, cfg: &SystemConfig) -> f64 {
    se * cfg.bandwidth
}

/// Number of uplink data symbols per frame (0..=symbols_per_frame) whose
/// uncoded SE lies closest to `target_se`. Ties go to the smaller count.
pub fn solve_data_symbols(
    target_se: f64,
    n_users: usize,
    bits_per_symbol: usize,
    base: &FrameSchedule,
    cfg: &SystemConfig,
) -> usize {
    (0..=base.symbols_per_frame())
        .map(|n| {
            let s = FrameSchedule { ul_data_symbols_per_frame: n, ..base.clone() };
            (n, (uncoded_sum_se(n_users, bits_per_symbol, &s, cfg) - target_se).abs())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, _)| n)
        .unwrap_or(0)
}

/// Least-squares estimate at resource-block resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedCfr {
    /// Comb-grid tensor: `n_occupied / 12` points per user per antenna.
    pub cfr: ChannelTensor,
    /// Receiver noise variance, available when at least two pilot symbols
    /// were averaged.
    pub noise_variance: Option<f64>,
}

impl EstimatedCfr {
    /// Zero-order hold: every subcarrier of a resource block takes that
    /// block's comb estimate.
    pub fn hold_to_full(&self) -> Result<ChannelTensor> {
        let n_occupied = self.cfr.grid.n_occupied();
        ChannelTensor::from_fn(
            FrequencyGrid::Full { n_occupied },
            self.cfr.subcarrier_spacing,
            self.cfr.n_antennas(),
            self.cfr.n_users(),
            |sc, m, k| self.cfr.get(sc / PILOT_STRIDE, m, k),
        )
    }
}

/// Per-tone LS estimate `rx / known` on each user's comb, averaged over
/// the supplied pilot symbols. `rx_symbols[s]` is `n_occupied × M`.
pub fn ls_estimate(
    rx_symbols: &[CMatrix],
    known: &[Complex64],
    map: &PilotMap,
    subcarrier_spacing: f64,
) -> Result<EstimatedCfr> {
    let n_occ = map.n_occupied();
    if rx_symbols.is_empty() {
        return Err(Error::invalid("need at least one received pilot symbol"));
    }
    if known.len() != n_occ {
        return Err(Error::invalid(format!("{} known pilots for {n_occ} subcarriers", known.len())));
    }
    if let Some(i) = known.iter().position(|x| x.norm_sqr() == 0.0) {
        return Err(Error::invalid(format!("pilot symbol on subcarrier {i} is zero")));
    }
    let m = rx_symbols[0].ncols();
    if rx_symbols.iter().any(|r| r.nrows() != n_occ || r.ncols() != m) {
        return Err(Error::invalid("received pilot symbols must all be n_occupied x M"));
    }
    let grid = map.grid();
    let ns = rx_symbols.len() as f64;
    let g = grid.clone();
    let cfr = ChannelTensor::from_fn(grid, subcarrier_spacing, m, map.n_users(), |p, a, k| {
        let sc = g.subcarrier(p, k);
        rx_symbols.iter().map(|r| r[(sc, a)] / known[sc]).sum::<Complex64>() / ns
    })?;
    let noise_variance = (rx_symbols.len() >= 2).then(|| {
        // Spread of per-symbol estimates around their mean, scaled back to
        // the received-sample domain.
        let mut acc = 0.0;
        let mut count = 0usize;
        for k in 0..map.n_users() {
            for &sc in map.tones(k + 1) {
                let p = sc / PILOT_STRIDE;
                for a in 0..m {
                    let mean = cfr.get(p, a, k);
                    for r in rx_symbols {
                        acc += (r[(sc, a)] / known[sc] - mean).norm_sqr() * known[sc].norm_sqr();
                    }
                    count += 1;
                }
            }
        }
        acc / (count as f64 * (ns - 1.0))
    });
    Ok(EstimatedCfr { cfr, noise_variance })
}

/// Received comb pilots for a full-grid channel: on each subcarrier the
/// owning user's pilot passes through its channel, plus CN(0, σ²) noise.
/// Subcarriers without an owner carry noise only.
pub fn simulate_pilot_rx<R: Rng + ?Sized>(
    channel: &ChannelTensor,
    known: &[Complex64],
    map: &PilotMap,
    noise_variance: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    if !matches!(channel.grid, FrequencyGrid::Full { .. }) || channel.n_points() != map.n_occupied() {
        return Err(Error::invalid("pilot simulation needs a full-grid channel matching the pilot map"));
    }
    let sigma = noise_variance.max(0.0).sqrt();
    let m = channel.n_antennas();
    let mut rx = CMatrix::zeros(map.n_occupied(), m);
    for sc in 0..map.n_occupied() {
        for a in 0..m {
            let clean = match map.owner(sc) {
                Some(k) => channel.get(sc, a, k) * known[sc],
                None => Complex64::new(0.0, 0.0),
            };
            rx[(sc, a)] = clean + complex_gaussian(rng) * sigma;
        }
    }
    Ok(rx)
}

/// Unit-modulus QPSK pilot sequence.
pub fn qpsk_pilots<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n).map(|_| Complex64::new(if rng.random() { s } else { -s }, if rng.random() { s } else { -s })).collect()
}
