//! Linear uplink detection and symbol-level link simulation.
//!
//! With `H_c` the M×K receive-major channel and `P` the diagonal of user
//! transmit powers:
//!
//! - MRC: `W = diag(1/‖h_k‖²) H_cᴴ`
//! - ZF: `W = (H_cᴴ H_c)⁻¹ H_cᴴ`
//! - MMSE: `W = (H_cᴴ H_c + σ² P⁻¹)⁻¹ H_cᴴ`
//!
//! Row `k` of `W` produces the estimate of user `k`'s symbol.

mod qam;

pub use qam::{qam_demod, qam_mod, QamOrder};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, ChannelMatrix};
use crate::linalg::{hermitian_eigenvalues, hpd_solve, CMatrix};
use crate::{lin_to_db, Complex64, Error, Result};

/// Smallest gram eigenvalue ratio accepted before ZF declares the channel
/// rank-deficient.
pub const ZF_RANK_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Mrc,
    Zf,
    Mmse,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Mrc => "mrc",
            DetectorKind::Zf => "zf",
            DetectorKind::Mmse => "mmse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorWeights {
    /// K×M combining matrix.
    pub matrix: CMatrix,
    pub kind: DetectorKind,
    pub noise_variance: f64,
}

pub fn mrc_weights(h: &ChannelMatrix) -> DetectorWeights {
    let mut w = h.entries.conjugate();
    for k in 0..w.nrows() {
        let n2 = w.row(k).norm_squared();
        if n2 > 0.0 {
            w.row_mut(k).unscale_mut(n2);
        }
    }
    DetectorWeights { matrix: w, kind: DetectorKind::Mrc, noise_variance: 0.0 }
}

pub fn zf_weights(h: &ChannelMatrix) -> Result<DetectorWeights> {
    let hc = h.receive_major();
    let hh = hc.adjoint();
    let gram = &hh * &hc;
    let eig = hermitian_eigenvalues(&gram);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if h.n_users() > h.n_antennas() || !(ratio > ZF_RANK_THRESHOLD) {
        return Err(Error::RankDeficient { ratio: ratio.max(0.0), threshold: ZF_RANK_THRESHOLD });
    }
    let w = hpd_solve(&gram, &hh).ok_or(Error::RankDeficient { ratio, threshold: ZF_RANK_THRESHOLD })?;
    Ok(DetectorWeights { matrix: w, kind: DetectorKind::Zf, noise_variance: 0.0 })
}

pub fn mmse_weights(h: &ChannelMatrix, noise_variance: f64, tx_powers: &[f64]) -> Result<DetectorWeights> {
    check_powers(h, tx_powers)?;
    if !(noise_variance > 0.0) {
        return Err(Error::invalid("MMSE needs a positive noise variance"));
    }
    let hc = h.receive_major();
    let hh = hc.adjoint();
    let mut a = &hh * &hc;
    for (k, p) in tx_powers.iter().enumerate() {
        a[(k, k)] += Complex64::new(noise_variance / p, 0.0);
    }
    let w = hpd_solve(&a, &hh).ok_or_else(|| Error::invalid("MMSE system is not positive definite"))?;
    Ok(DetectorWeights { matrix: w, kind: DetectorKind::Mmse, noise_variance })
}

pub fn detector_weights(
    kind: DetectorKind,
    h: &ChannelMatrix,
    noise_variance: f64,
    tx_powers: &[f64],
) -> Result<DetectorWeights> {
    match kind {
        DetectorKind::Mrc => Ok(DetectorWeights { noise_variance, ..mrc_weights(h) }),
        DetectorKind::Zf => zf_weights(h).map(|w| DetectorWeights { noise_variance, ..w }),
        DetectorKind::Mmse => mmse_weights(h, noise_variance, tx_powers),
    }
}

fn check_powers(h: &ChannelMatrix, tx_powers: &[f64]) -> Result<()> {
    if tx_powers.len() != h.n_users() {
        return Err(Error::invalid(format!("{} powers for {} users", tx_powers.len(), h.n_users())));
    }
    if tx_powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::invalid("transmit powers must be finite and > 0"));
    }
    Ok(())
}

/// Per-user post-detection SINR (linear):
/// `p_k|w_kᴴh_k|² / (Σ_{i≠k} p_i|w_kᴴh_i|² + σ²‖w_k‖²)`.
pub fn post_sinr_linear(w: &DetectorWeights, h: &ChannelMatrix, noise_variance: f64, tx_powers: &[f64]) -> Vec<f64> {
    let g = &w.matrix * h.receive_major();
    (0..h.n_users())
        .map(|k| {
            let signal = tx_powers[k] * g[(k, k)].norm_sqr();
            let interference: f64 =
                (0..h.n_users()).filter(|&i| i != k).map(|i| tx_powers[i] * g[(k, i)].norm_sqr()).sum();
            let noise = noise_variance * w.matrix.row(k).norm_squared();
            signal / (interference + noise)
        })
        .collect()
}

/// [`post_sinr_linear`] in dB.
pub fn post_sinr(w: &DetectorWeights, h: &ChannelMatrix, noise_variance: f64, tx_powers: &[f64]) -> Vec<f64> {
    post_sinr_linear(w, h, noise_variance, tx_powers).into_iter().map(lin_to_db).collect()
}

/// Per-user SNR after matched-filter combining, ignoring interference:
/// `p_k‖h_k‖²/σ²` (linear).
pub fn mrc_snr_linear(h: &ChannelMatrix, noise_variance: f64, tx_powers: &[f64]) -> Vec<f64> {
    (0..h.n_users()).map(|k| tx_powers[k] * h.entries.row(k).norm_squared() / noise_variance).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkConfig {
    pub detector: DetectorKind,
    pub order: QamOrder,
    pub noise_variance: f64,
    /// Linear transmit power per user; empty means unit power for all.
    pub tx_powers: Vec<f64>,
    /// Symbols transmitted per user.
    pub n_symbols: usize,
    pub seed: u64,
    /// Equalised samples retained per user.
    pub constellation_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub detector: DetectorKind,
    /// Analytic post-detection SINR per user, dB.
    pub sinr_db: Vec<f64>,
    /// SINR measured from the simulated symbols, dB.
    pub measured_sinr_db: Vec<f64>,
    /// RMS error vector magnitude against the nearest point, percent.
    pub evm_pct: Vec<f64>,
    pub ser: Vec<f64>,
    pub n_symbols: usize,
    /// Gain-equalised detector outputs, per user.
    pub constellation: Vec<Vec<Complex64>>,
}

const BLOCK: usize = 1024;

#[derive(Default, Clone)]
struct UserStats {
    errors: usize,
    evm_num: f64,
    evm_den: f64,
    distortion: f64,
    kept: Vec<Complex64>,
}

/// Sends random QAM symbols from every user through `h`, detects them with
/// the configured linear detector and reports per-user statistics. The
/// result depends only on the inputs and `seed`: symbols are generated in
/// fixed blocks, each with its own RNG streams per user and for noise.
pub fn uplink_sim(h: &ChannelMatrix, cfg: &UplinkConfig) -> Result<LinkReport> {
    let k_users = h.n_users();
    let m = h.n_antennas();
    let powers = if cfg.tx_powers.is_empty() { vec![1.0; k_users] } else { cfg.tx_powers.clone() };
    check_powers(h, &powers)?;
    if !(cfg.noise_variance >= 0.0) {
        return Err(Error::invalid("noise variance must be >= 0"));
    }
    let det_noise =
        if cfg.detector == DetectorKind::Mmse { cfg.noise_variance.max(f64::MIN_POSITIVE) } else { cfg.noise_variance };
    let w = detector_weights(cfg.detector, h, det_noise, &powers)?;
    let hc = h.receive_major();
    let gain = &w.matrix * &hc;
    let amp: Vec<f64> = powers.iter().map(|p| p.sqrt()).collect();
    let eff: Vec<Complex64> = (0..k_users).map(|k| gain[(k, k)] * amp[k]).collect();
    let order = cfg.order;
    let points = order.constellation();
    let sigma = cfg.noise_variance.sqrt();
    let n_blocks = cfg.n_symbols.div_ceil(BLOCK);
    let streams = k_users as u64 + 1;

    let per_block: Vec<Vec<UserStats>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK.min(cfg.n_symbols - b * BLOCK);
            let mut labels = vec![vec![0usize; len]; k_users];
            let mut x = CMatrix::zeros(k_users, len);
            for k in 0..k_users {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(b as u64 * streams + k as u64);
                for n in 0..len {
                    let l = rng.random_range(0..order.order());
                    labels[k][n] = l;
                    x[(k, n)] = points[l] * amp[k];
                }
            }
            let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            noise_rng.set_stream(b as u64 * streams + k_users as u64);
            let noise = CMatrix::from_fn(m, len, |_, _| complex_gaussian(&mut noise_rng) * sigma);
            let y = &hc * &x + noise;
            let est = &w.matrix * y;
            (0..k_users)
                .map(|k| {
                    let mut s = UserStats::default();
                    for n in 0..len {
                        let raw = est[(k, n)];
                        s.distortion += (raw - eff[k] * points[labels[k][n]]).norm_sqr();
                        let z = raw / eff[k];
                        let decided = order.slice(z);
                        if decided != labels[k][n] {
                            s.errors += 1;
                        }
                        let nearest = points[decided];
                        s.evm_num += (z - nearest).norm_sqr();
                        s.evm_den += nearest.norm_sqr();
                        if b * BLOCK + n < cfg.constellation_samples {
                            s.kept.push(z);
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();

    let mut totals = vec![UserStats::default(); k_users];
    for block in per_block {
        for (t, s) in totals.iter_mut().zip(block) {
            t.errors += s.errors;
            t.evm_num += s.evm_num;
            t.evm_den += s.evm_den;
            t.distortion += s.distortion;
            t.kept.extend(s.kept);
        }
    }
    let n = cfg.n_symbols as f64;
    Ok(LinkReport {
        detector: cfg.detector,
        sinr_db: post_sinr(&w, h, cfg.noise_variance, &powers),
        measured_sinr_db: (0..k_users).map(|k| lin_to_db(eff[k].norm_sqr() / (totals[k].distortion / n))).collect(),
        evm_pct: totals.iter().map(|t| 100.0 * (t.evm_num / t.evm_den).sqrt()).collect(),
        ser: totals.iter().map(|t| t.errors as f64 / n).collect(),
        n_symbols: cfg.n_symbols,
        constellation: totals.into_iter().map(|t| t.kept).collect(),
    })
}

/// Deterministic random instance helper for tests and benches.
pub fn random_powers<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(0.2..2.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{iid_rayleigh, ChannelModelTag};

    fn matrix(entries: CMatrix) -> ChannelMatrix {
        ChannelMatrix::new(entries, ChannelModelTag::Iid, 0.1).unwrap()
    }

    #[test]
    fn orthogonal_limit_all_detectors_agree() {
        // K=2 users on orthogonal columns of a 4-antenna DFT basis.
        let n = 4;
        let dft = CMatrix::from_fn(2, n, |k, m| Complex64::cis(2.0 * std::f64::consts::PI * (k * m) as f64 / n as f64));
        let h = matrix(dft);
        let p = [1.0, 1.0];
        let mrc = mrc_weights(&h);
        let zf = zf_weights(&h).unwrap();
        let mmse = mmse_weights(&h, 1e-10, &p).unwrap();
        let rel = |a: &CMatrix, b: &CMatrix| (a - b).norm() / b.norm();
        assert!(rel(&zf.matrix, &mrc.matrix) < 1e-6);
        assert!(rel(&mmse.matrix, &zf.matrix) < 1e-6);
    }

    #[test]
    fn single_user_detectors_have_equal_sinr() {
        let h = iid_rayleigh(8, 1, 3);
        let p = [0.7];
        let nv = 0.3;
        let s: Vec<f64> = [DetectorKind::Mrc, DetectorKind::Zf, DetectorKind::Mmse]
            .iter()
            .map(|&d| post_sinr(&detector_weights(d, &h, nv, &p).unwrap(), &h, nv, &p)[0])
            .collect();
        assert!((s[0] - s[1]).abs() < 1e-9 && (s[0] - s[2]).abs() < 1e-9, "{s:?}");
        let mf = lin_to_db(p[0] * h.entries.row(0).norm_squared() / nv);
        assert!((s[0] - mf).abs() < 1e-9);
    }

    #[test]
    fn identity_channel_mrc_is_zero_db() {
        let h = matrix(CMatrix::identity(3, 3));
        let s = post_sinr(&mrc_weights(&h), &h, 1.0, &[1.0; 3]);
        assert!(s.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn mmse_dominates_on_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..100 {
            let h = iid_rayleigh(8, 2, seed);
            let p = random_powers(2, &mut rng);
            let nv = rng.random_range(0.01..2.0);
            let sm = post_sinr(&mmse_weights(&h, nv, &p).unwrap(), &h, nv, &p);
            let sz = post_sinr(&zf_weights(&h).unwrap(), &h, nv, &p);
            let sr = post_sinr(&mrc_weights(&h), &h, nv, &p);
            for k in 0..2 {
                assert!(sm[k] >= sz[k] - 1e-9 && sm[k] >= sr[k] - 1e-9, "seed {seed}: {sm:?} {sz:?} {sr:?}");
            }
        }
    }

    #[test]
    fn zf_rejects_rank_deficiency() {
        let row = iid_rayleigh(6, 1, 4).entries;
        let h = matrix(CMatrix::from_fn(2, 6, |_, m| row[(0, m)]));
        assert!(matches!(zf_weights(&h), Err(Error::RankDeficient { .. })));
        let wide = iid_rayleigh(2, 3, 1);
        assert!(matches!(zf_weights(&wide), Err(Error::RankDeficient { .. })));
        assert!(mmse_weights(&h, 0.1, &[1.0, 1.0]).is_ok());
    }

    #[test]
    fn analytic_sinr_matches_simulation() {
        let h = iid_rayleigh(8, 3, 21);
        let cfg = UplinkConfig {
            detector: DetectorKind::Mmse,
            order: QamOrder::Qam16,
            noise_variance: 0.5,
            tx_powers: vec![1.0, 0.5, 2.0],
            n_symbols: 100_000,
            seed: 8,
            constellation_samples: 0,
        };
        let r = uplink_sim(&h, &cfg).unwrap();
        for k in 0..3 {
            assert!((r.sinr_db[k] - r.measured_sinr_db[k]).abs() < 0.2, "{:?} vs {:?}", r.sinr_db, r.measured_sinr_db);
        }
    }

    #[test]
    fn noiseless_zf_is_exact() {
        let h = iid_rayleigh(16, 4, 2);
        let cfg = UplinkConfig {
            detector: DetectorKind::Zf,
            order: QamOrder::Qam256,
            noise_variance: 0.0,
            tx_powers: vec![],
            n_symbols: 2000,
            seed: 1,
            constellation_samples: 2000,
        };
        let r = uplink_sim(&h, &cfg).unwrap();
        assert!(r.ser.iter().all(|s| *s == 0.0));
        assert!(r.evm_pct.iter().all(|e| *e < 1e-6), "{:?}", r.evm_pct);
        let mmse = uplink_sim(&h, &UplinkConfig { detector: DetectorKind::Mmse, ..cfg }).unwrap();
        assert!(mmse.evm_pct.iter().all(|e| *e < 1e-6), "{:?}", mmse.evm_pct);
    }

    #[test]
    fn huge_noise_gives_random_guessing() {
        let h = iid_rayleigh(4, 2, 6);
        let cfg = UplinkConfig {
            detector: DetectorKind::Mmse,
            order: QamOrder::Qam16,
            noise_variance: 1e8,
            tx_powers: vec![],
            n_symbols: 50_000,
            seed: 3,
            constellation_samples: 0,
        };
        let r = uplink_sim(&h, &cfg).unwrap();
        for s in r.ser {
            assert!((s - 15.0 / 16.0).abs() < 0.02, "ser {s}");
        }
    }

    #[test]
    fn fully_correlated_users() {
        let row = iid_rayleigh(8, 1, 9).entries;
        let h = matrix(CMatrix::from_fn(2, 8, |_, m| row[(0, m)]));
        let cfg = UplinkConfig {
            detector: DetectorKind::Zf,
            order: QamOrder::Qam4,
            noise_variance: 1e-3,
            tx_powers: vec![],
            n_symbols: 20_000,
            seed: 2,
            constellation_samples: 0,
        };
        assert!(matches!(uplink_sim(&h, &cfg), Err(Error::RankDeficient { .. })));
        let r = uplink_sim(&h, &UplinkConfig { detector: DetectorKind::Mrc, ..cfg }).unwrap();
        // The other user's symbol lands on top: each axis is wrong with
        // probability 1/4 when the two symbols cancel, so SER = 7/16.
        for s in &r.ser {
            assert!((s - 7.0 / 16.0).abs() < 0.03, "ser {s}");
        }
        assert!(r.sinr_db.iter().all(|s| *s < 0.1));
    }

    #[test]
    fn deterministic_per_seed() {
        let h = iid_rayleigh(8, 2, 1);
        let cfg = UplinkConfig {
            detector: DetectorKind::Mmse,
            order: QamOrder::Qam64,
            noise_variance: 0.05,
            tx_powers: vec![],
            n_symbols: 5000,
            seed: 77,
            constellation_samples: 10,
        };
        let a = uplink_sim(&h, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| uplink_sim(&h, &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn evm_and_ser_fall_with_snr() {
        let h = iid_rayleigh(8, 2, 12);
        let mut prev: Option<LinkReport> = None;
        let mut violations = 0;
        for snr_db in [0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0] {
            let cfg = UplinkConfig {
                detector: DetectorKind::Mmse,
                order: QamOrder::Qam16,
                noise_variance: 10f64.powf(-snr_db / 10.0),
                tx_powers: vec![],
                n_symbols: 100_000,
                seed: 4,
                constellation_samples: 0,
            };
            let r = uplink_sim(&h, &cfg).unwrap();
            if let Some(p) = &prev {
                for k in 0..2 {
                    if r.ser[k] > p.ser[k] || r.evm_pct[k] > p.evm_pct[k] {
                        violations += 1;
                    }
                }
            }
            prev = Some(r);
        }
        assert!(violations <= 1, "{violations} monotonicity violations");
    }
}
