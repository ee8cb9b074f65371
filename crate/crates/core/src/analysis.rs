//! Wideband channel statistics: per-antenna power, comb interpolation,
//! power-delay profiles, delay spread and coherence bandwidth.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelTensor, FrequencyGrid};
use crate::{lin_to_db, Complex64, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    /// Per-antenna power in dB, normalised so the strongest is 0 dB.
    pub db: Vec<f64>,
    pub user: usize,
    pub snapshot: usize,
}

/// Mean `|H(f, m, user)|²` over frequency for every antenna, in dB relative
/// to the strongest antenna. `user` is 0-based.
pub fn antenna_power_profile(tensor: &ChannelTensor, user: usize) -> Result<PowerProfile> {
    if user >= tensor.n_users() {
        return Err(Error::invalid(format!("user {user} not in tensor with {} users", tensor.n_users())));
    }
    let n = tensor.n_points() as f64;
    let power: Vec<f64> = (0..tensor.n_antennas())
        .map(|m| tensor.series(m, user).iter().map(|z| z.norm_sqr()).sum::<f64>() / n)
        .collect();
    let max = power.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::invalid(format!("user {user} has an all-zero channel")));
    }
    Ok(PowerProfile { db: power.iter().map(|p| lin_to_db(p / max)).collect(), user, snapshot: 0 })
}

/// Band-limited interpolation of a comb-sampled tensor onto every occupied
/// subcarrier. With `N_c` comb points per user at stride `S`, the comb is
/// treated as `N_c` delay taps spaced `1/(N_c·S·Δf)` apart, which is exact
/// for channels whose delays lie on that grid below `1/(S·Δf)`.
pub fn interpolate_cfr(decimated: &ChannelTensor) -> Result<ChannelTensor> {
    let FrequencyGrid::RbDecimated { n_occupied, stride, ref offsets } = decimated.grid else {
        return Err(Error::invalid("interpolation needs a comb-sampled (rb_decimated) tensor"));
    };
    let nc = decimated.n_points();
    if nc * stride != n_occupied {
        return Err(Error::invalid(format!("comb of {nc} points at stride {stride} does not span {n_occupied} tones")));
    }
    let (m_ant, k_users) = (decimated.n_antennas(), decimated.n_users());
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(nc);
    let fft = planner.plan_fft_forward(n_occupied);
    // series[k * M + m] holds the full-band response of (m, k).
    let series: Vec<Vec<Complex64>> = (0..k_users * m_ant)
        .into_par_iter()
        .map(|idx| {
            let (k, m) = (idx / m_ant, idx % m_ant);
            let mut c = decimated.series(m, k);
            ifft.process(&mut c);
            let mut taps = vec![Complex64::new(0.0, 0.0); n_occupied];
            let off = offsets[k] as f64;
            for (l, v) in c.iter().enumerate() {
                taps[l] = v / nc as f64 * Complex64::cis(2.0 * PI * l as f64 * off / n_occupied as f64);
            }
            fft.process(&mut taps);
            taps
        })
        .collect();
    ChannelTensor::from_fn(
        FrequencyGrid::Full { n_occupied },
        decimated.subcarrier_spacing,
        m_ant,
        k_users,
        |p, m, k| series[k * m_ant + m][p],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rectangular,
    /// Periodic Hann, `0.5(1 − cos(2πi/N))`.
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdpResult {
    /// Delay of each bin, seconds.
    pub delays: Vec<f64>,
    /// Linear power per bin. Sums to the mean of `|w·H|²` over the band.
    pub power: Vec<f64>,
    /// `1/(N·Δf)`.
    pub bin_spacing: f64,
    /// Longest delay free of aliasing. Comb-derived data supports only
    /// `1/(S·Δf)`; see [`PdpResult::with_comb_stride`].
    pub max_unambiguous_delay: f64,
    pub window: Window,
}

impl PdpResult {
    pub fn with_comb_stride(mut self, stride: usize) -> Self {
        self.max_unambiguous_delay /= stride as f64;
        self
    }

    /// True when `delay` lies inside the unambiguous range.
    pub fn is_unambiguous(&self, delay: f64) -> bool {
        delay < self.max_unambiguous_delay
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn peak_bin(&self) -> usize {
        self.power.iter().enumerate().fold((0, f64::MIN), |best, (i, &p)| if p > best.1 { (i, p) } else { best }).0
    }
}

/// `|IFFT_N(w·H)|²` with the `1/N` IFFT normalisation, so bin powers sum to
/// the mean windowed CFR power.
pub fn pdp(cfr: &[Complex64], subcarrier_spacing: f64, window: Window) -> Result<PdpResult> {
    let n = cfr.len();
    if n == 0 || !(subcarrier_spacing > 0.0) {
        return Err(Error::invalid("PDP needs a non-empty CFR and spacing > 0"));
    }
    let w = window.coefficients(n);
    let mut x: Vec<Complex64> = cfr.iter().zip(&w).map(|(h, w)| h * *w).collect();
    FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut x);
    let bin_spacing = 1.0 / (n as f64 * subcarrier_spacing);
    let n2 = (n * n) as f64;
    Ok(PdpResult {
        delays: (0..n).map(|i| i as f64 * bin_spacing).collect(),
        power: x.iter().map(|z| z.norm_sqr() / n2).collect(),
        bin_spacing,
        max_unambiguous_delay: 1.0 / subcarrier_spacing,
        window,
    })
}

/// Second central moment of the PDP in delay. Bins more than
/// `noise_floor_db` below the peak are discarded first. Bins in the upper
/// half of the span count as negative delays: window leakage and
/// pre-cursors wrap there.
pub fn rms_delay_spread(p: &PdpResult, noise_floor_db: Option<f64>) -> Result<f64> {
    let peak = p.power.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::invalid("delay spread of a zero-power profile"));
    }
    let floor = noise_floor_db.map_or(0.0, |db| peak * 10f64.powf(-db / 10.0));
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let n = p.power.len();
    for (i, &pw) in p.power.iter().enumerate() {
        let t = if 2 * i < n { p.delays[i] } else { p.delays[i] - n as f64 * p.bin_spacing };
        if pw >= floor {
            s0 += pw;
            s1 += pw * t;
            s2 += pw * t * t;
        }
    }
    let mean = s1 / s0;
    Ok((s2 / s0 - mean * mean).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoherenceBw {
    Hz(f64),
    /// The correlation never drops below the threshold inside the band.
    ExceedsBand,
}

impl CoherenceBw {
    pub fn hz(self) -> Option<f64> {
        match self {
            CoherenceBw::Hz(h) => Some(h),
            CoherenceBw::ExceedsBand => None,
        }
    }
}

/// How the frequency autocorrelation of a single snapshot is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Autocorrelation {
    /// `R(Δ) = mean_n H[(n+Δ) mod N]·H*[n]`, lags up to `N/2`. Equal to the
    /// transform of the PDP, so it has no edge bias.
    #[default]
    Circular,
    /// `R(Δ) = mean_{n<N−Δ} H[n+Δ]·H*[n]`, lags up to `N−1`.
    Linear,
}

/// Normalised `|R(Δ)|/R(0)` for lags `0..` as defined by `kind`.
pub fn frequency_autocorrelation(cfr: &[Complex64], kind: Autocorrelation) -> Result<Vec<f64>> {
    let n = cfr.len();
    let r0: f64 = cfr.iter().map(|z| z.norm_sqr()).sum::<f64>() / n.max(1) as f64;
    if n < 2 || !(r0 > 0.0) {
        return Err(Error::invalid("autocorrelation needs at least two tones and non-zero power"));
    }
    let max_lag = match kind {
        Autocorrelation::Circular => n / 2,
        Autocorrelation::Linear => n - 1,
    };
    Ok((0..=max_lag)
        .map(|lag| {
            let r = match kind {
                Autocorrelation::Circular => {
                    (0..n).map(|i| cfr[(i + lag) % n] * cfr[i].conj()).sum::<Complex64>() / n as f64
                }
                Autocorrelation::Linear => {
                    (0..n - lag).map(|i| cfr[i + lag] * cfr[i].conj()).sum::<Complex64>() / (n - lag) as f64
                }
            };
            r.norm() / r0
        })
        .collect())
}

/// Smallest frequency offset at which the normalised autocorrelation
/// magnitude falls below `threshold`.
pub fn coherence_bw(
    cfr: &[Complex64],
    subcarrier_spacing: f64,
    threshold: f64,
    kind: Autocorrelation,
) -> Result<CoherenceBw> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} outside (0, 1)")));
    }
    let rho = frequency_autocorrelation(cfr, kind)?;
    Ok(rho
        .iter()
        .position(|&r| r < threshold)
        .map_or(CoherenceBw::ExceedsBand, |lag| CoherenceBw::Hz(lag as f64 * subcarrier_spacing)))
}

/// [`coherence_bw`] of `user` evaluated separately at every antenna.
pub fn across_array_coherence(
    tensor: &ChannelTensor,
    user: usize,
    threshold: f64,
    kind: Autocorrelation,
) -> Result<Vec<CoherenceBw>> {
    if user >= tensor.n_users() {
        return Err(Error::invalid(format!("user {user} not in tensor with {} users", tensor.n_users())));
    }
    if !matches!(tensor.grid, FrequencyGrid::Full { .. }) {
        return Err(Error::invalid("coherence analysis needs a full-grid tensor"));
    }
    (0..tensor.n_antennas())
        .into_par_iter()
        .map(|m| coherence_bw(&tensor.series(m, user), tensor.subcarrier_spacing, threshold, kind))
        .collect()
}
