//! Uplink power control: per-slot SNR and SINR loops, the interval-based
//! hardening loop, and a closed-loop simulator driving any of them.
//!
//! Powers are in dBm, noise in dBm, channel entries are amplitude gains, so
//! the received SNR after matched filtering is `p_k‖h_k‖²/σ²` in mW units.

use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::channel::{iid_rayleigh, ChannelMatrix};
use crate::detect::{mmse_weights, mrc_snr_linear, post_sinr};
use crate::scenario::{FadingKind, PowerControlSection};
use crate::{db_to_lin, lin_to_db, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerControlAlgorithm {
    FixedSnr,
    FixedSinr,
    Hardening,
}

impl PowerControlAlgorithm {
    pub const ALL: [PowerControlAlgorithm; 3] =
        [PowerControlAlgorithm::FixedSnr, PowerControlAlgorithm::FixedSinr, PowerControlAlgorithm::Hardening];

    pub fn name(self) -> &'static str {
        match self {
            PowerControlAlgorithm::FixedSnr => "fixed_snr",
            PowerControlAlgorithm::FixedSinr => "fixed_sinr",
            PowerControlAlgorithm::Hardening => "hardening",
        }
    }
}

/// One call of an update rule: powers before the call and the measurement
/// it was given (SNR or SINR in dB, or the long-term gain in dB).
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub powers_dbm: Vec<f64>,
    pub measured_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerControlState {
    /// Always within `[min_dbm, max_dbm]`.
    pub powers_dbm: Vec<f64>,
    pub target_db: f64,
    pub max_step_db: f64,
    pub min_dbm: f64,
    pub max_dbm: f64,
    pub update_interval: usize,
    pub margin_db: f64,
    pub noise_dbm: f64,
    slot: usize,
    updates: usize,
    history: Vec<HistoryEntry>,
}

impl PowerControlState {
    pub fn new(n_users: usize, cfg: &PowerControlSection) -> Result<Self> {
        if !(cfg.min_dbm <= cfg.max_dbm) || cfg.update_interval == 0 || !(cfg.max_step_db > 0.0) {
            return Err(Error::invalid("power control needs min <= max, update_interval >= 1 and max_step > 0"));
        }
        Ok(Self {
            powers_dbm: vec![cfg.initial_dbm.clamp(cfg.min_dbm, cfg.max_dbm); n_users],
            target_db: cfg.target_db,
            max_step_db: cfg.max_step_db,
            min_dbm: cfg.min_dbm,
            max_dbm: cfg.max_dbm,
            update_interval: cfg.update_interval,
            margin_db: cfg.interference_margin_db,
            noise_dbm: cfg.noise_dbm,
            slot: 0,
            updates: 0,
            history: Vec::new(),
        })
    }

    /// Number of power updates issued so far.
    pub fn n_updates(&self) -> usize {
        self.updates
    }

    /// Number of slots the state has been stepped through.
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn powers_mw(&self) -> Vec<f64> {
        self.powers_dbm.iter().map(|p| db_to_lin(*p)).collect()
    }

    fn record(&mut self, measured_db: Vec<f64>) {
        self.history.push(HistoryEntry { powers_dbm: self.powers_dbm.clone(), measured_db });
    }

    fn step_towards_target(&mut self, measured_db: &[f64]) {
        self.record(measured_db.to_vec());
        for (p, m) in self.powers_dbm.iter_mut().zip(measured_db) {
            let step = if m.is_nan() { 0.0 } else { (self.target_db - m).clamp(-self.max_step_db, self.max_step_db) };
            *p = (*p + step).clamp(self.min_dbm, self.max_dbm);
        }
        self.slot += 1;
        self.updates += 1;
    }
}

/// Per-slot step toward the SNR target.
pub fn pc_fixed_snr(state: &mut PowerControlState, measured_snr_db: &[f64]) {
    state.step_towards_target(measured_snr_db);
}

/// Per-slot step toward the SINR target.
pub fn pc_fixed_sinr(state: &mut PowerControlState, measured_sinr_db: &[f64]) {
    state.step_towards_target(measured_sinr_db);
}

/// Sets powers from the long-term gains `‖h_k‖²` (linear) so the matched
/// filter SNR lands at target plus margin. Only acts on slots that are a
/// multiple of `update_interval`; powers are held otherwise.
pub fn pc_hardening(state: &mut PowerControlState, long_term_gains: &[f64]) {
    if state.slot.is_multiple_of(state.update_interval) {
        state.record(long_term_gains.iter().map(|g| lin_to_db(*g)).collect());
        for (p, g) in state.powers_dbm.iter_mut().zip(long_term_gains) {
            if *g > 0.0 && g.is_finite() {
                *p = (state.target_db + state.noise_dbm - lin_to_db(*g) + state.margin_db)
                    .clamp(state.min_dbm, state.max_dbm);
            }
        }
        state.updates += 1;
    }
    state.slot += 1;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub iteration: usize,
    pub user: usize,
    pub tx_power_dbm: f64,
    pub sinr_db: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub algorithm: PowerControlAlgorithm,
    /// Measurements taken with the powers in force at each iteration,
    /// before that iteration's update.
    pub rows: Vec<TrajectoryRow>,
    /// Mean of the per-user SINR in dB over all users and iterations.
    pub aggregate_sinr_db: f64,
    pub final_state: PowerControlState,
}

impl Trajectory {
    pub fn n_updates(&self) -> usize {
        self.final_state.n_updates()
    }

    /// SINR of every user at the last iteration.
    pub fn final_sinr_db(&self) -> Vec<f64> {
        let k = self.final_state.powers_dbm.len();
        self.rows[self.rows.len().saturating_sub(k)..].iter().map(|r| r.sinr_db).collect()
    }

    /// First iteration from which every user's SINR stays within `tol` dB
    /// of the target.
    pub fn converged_at(&self, tol: f64) -> Option<usize> {
        let target = self.final_state.target_db;
        let n_iter = self.rows.last().map_or(0, |r| r.iteration + 1);
        let ok = |it: usize| self.rows.iter().filter(|r| r.iteration == it).all(|r| (r.sinr_db - target).abs() <= tol);
        let mut first = None;
        for it in (0..n_iter).rev() {
            if ok(it) {
                first = Some(it);
            } else {
                break;
            }
        }
        first
    }
}

/// Alias: the scenario's power-control section is the simulator's config.
pub type ClosedLoopConfig = PowerControlSection;

/// Runs `cfg.iterations` slots of channel draw, MMSE detection,
/// measurement and power update.
pub fn closed_loop_sim(cfg: &ClosedLoopConfig, algorithm: PowerControlAlgorithm, seed: u64) -> Result<Trajectory> {
    let k = cfg.path_gains_db.len();
    if k == 0 || cfg.n_antennas == 0 {
        return Err(Error::invalid("closed loop needs at least one user and one antenna"));
    }
    let mut state = PowerControlState::new(k, cfg)?;
    let noise = db_to_lin(cfg.noise_dbm);
    let amplitudes: Vec<f64> = cfg.path_gains_db.iter().map(|g| db_to_lin(*g).sqrt()).collect();
    let draw = |t: usize| -> ChannelMatrix {
        let s = match cfg.fading {
            FadingKind::Static => derive_seed(seed, 0xC10, 0),
            FadingKind::BlockRayleigh => derive_seed(seed, 0xC10, t as u64),
        };
        iid_rayleigh(cfg.n_antennas, k, s).with_user_gains(&amplitudes)
    };
    let mut rows = Vec::with_capacity(cfg.iterations * k);
    let mut gain_acc = vec![0.0; k];
    let mut gain_n = 0usize;
    for t in 0..cfg.iterations {
        let h = draw(t);
        let p = state.powers_mw();
        let snr_db: Vec<f64> = mrc_snr_linear(&h, noise, &p).into_iter().map(lin_to_db).collect();
        let sinr_db = post_sinr(&mmse_weights(&h, noise, &p)?, &h, noise, &p);
        for u in 0..k {
            rows.push(TrajectoryRow {
                iteration: t,
                user: u,
                tx_power_dbm: state.powers_dbm[u],
                sinr_db: sinr_db[u],
                snr_db: snr_db[u],
            });
        }
        match algorithm {
            PowerControlAlgorithm::FixedSnr => pc_fixed_snr(&mut state, &snr_db),
            PowerControlAlgorithm::FixedSinr => pc_fixed_sinr(&mut state, &sinr_db),
            PowerControlAlgorithm::Hardening => {
                for (acc, u) in gain_acc.iter_mut().zip(0..k) {
                    *acc += h.entries.row(u).norm_squared();
                }
                gain_n += 1;
                let avg: Vec<f64> = gain_acc.iter().map(|g| g / gain_n as f64).collect();
                let before = state.n_updates();
                pc_hardening(&mut state, &avg);
                if state.n_updates() > before {
                    gain_acc.iter_mut().for_each(|g| *g = 0.0);
                    gain_n = 0;
                }
            }
        }
    }
    let aggregate_sinr_db =
        if rows.is_empty() { f64::NAN } else { rows.iter().map(|r| r.sinr_db).sum::<f64>() / rows.len() as f64 };
    Ok(Trajectory { algorithm, rows, aggregate_sinr_db, final_state: state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> PowerControlSection {
        PowerControlSection::default()
    }

    #[test]
    fn step_rules() {
        let mut s = PowerControlState::new(2, &cfg()).unwrap();
        pc_fixed_snr(&mut s, &[10.0, 7.0]);
        assert_eq!(s.powers_dbm, vec![0.0, 1.0]);
        pc_fixed_sinr(&mut s, &[10.5, 9.8]);
        assert!((s.powers_dbm[0] + 0.5).abs() < 1e-12 && (s.powers_dbm[1] - 1.2).abs() < 1e-12);
        assert_eq!(s.history().len(), 2);
        assert_eq!(s.history()[0].powers_dbm, vec![0.0, 0.0]);
    }

    #[test]
    fn single_user_awgn_converges_from_ten_db_low() {
        // AWGN link whose SNR is the power in dBm minus 10 dB.
        let mut s = PowerControlState::new(1, &PowerControlSection { target_db: 0.0, ..cfg() }).unwrap();
        let snr = |s: &PowerControlState| s.powers_dbm[0] - 10.0;
        let mut n = 0;
        while (snr(&s) - 0.0).abs() >= 0.1 {
            let m = snr(&s);
            pc_fixed_snr(&mut s, &[m]);
            n += 1;
        }
        assert!(n <= 12, "{n} iterations");
    }

    #[test]
    fn near_far_sinr_loop_balances() {
        let t = closed_loop_sim(&PowerControlSection { iterations: 60, ..cfg() }, PowerControlAlgorithm::FixedSinr, 1)
            .unwrap();
        let f = t.final_sinr_db();
        assert!((f[0] - f[1]).abs() < 0.5, "{f:?}");
        assert!(t.converged_at(0.1).unwrap() <= 30, "{:?}", t.converged_at(0.1));
    }

    #[test]
    fn hardening_schedule_counts_and_holds() {
        for n in [1, 9, 10, 11, 95, 100] {
            let t =
                closed_loop_sim(&PowerControlSection { iterations: n, ..cfg() }, PowerControlAlgorithm::Hardening, 2)
                    .unwrap();
            assert_eq!(t.n_updates(), n.div_ceil(10), "n={n}");
            let per_slot =
                closed_loop_sim(&PowerControlSection { iterations: n, ..cfg() }, PowerControlAlgorithm::FixedSnr, 2)
                    .unwrap();
            assert_eq!(per_slot.n_updates(), n);
        }
        let t = closed_loop_sim(&PowerControlSection { iterations: 40, ..cfg() }, PowerControlAlgorithm::Hardening, 2)
            .unwrap();
        let h = t.final_state.history();
        for w in h.windows(2).skip(1) {
            for (a, b) in w[0].powers_dbm.iter().zip(&w[1].powers_dbm) {
                assert!((a - b).abs() < 0.01);
            }
        }
        // Held between updates.
        let p = |it: usize| t.rows.iter().find(|r| r.iteration == it && r.user == 0).unwrap().tx_power_dbm;
        assert_eq!(p(1), p(9));
    }

    #[test]
    fn zero_iterations_returns_initial_state() {
        let t = closed_loop_sim(&PowerControlSection { iterations: 0, ..cfg() }, PowerControlAlgorithm::FixedSinr, 1)
            .unwrap();
        assert_eq!(t.final_state, PowerControlState::new(2, &cfg()).unwrap());
        assert!(t.rows.is_empty());
    }

    #[test]
    fn static_channel_loops_settle() {
        for alg in PowerControlAlgorithm::ALL {
            let t = closed_loop_sim(&PowerControlSection { iterations: 80, ..cfg() }, alg, 4).unwrap();
            for u in 0..2 {
                let tail: Vec<f64> =
                    t.rows.iter().filter(|r| r.user == u && r.iteration >= 50).map(|r| r.tx_power_dbm).collect();
                let spread =
                    tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
                assert!(spread <= 1.0 + 1e-9, "{alg:?} user {u}: {spread}");
            }
        }
    }

    #[test]
    fn block_fading_is_seeded() {
        let c = PowerControlSection { iterations: 20, fading: FadingKind::BlockRayleigh, ..cfg() };
        let a = closed_loop_sim(&c, PowerControlAlgorithm::FixedSnr, 5).unwrap();
        assert_eq!(a, closed_loop_sim(&c, PowerControlAlgorithm::FixedSnr, 5).unwrap());
        assert_ne!(a, closed_loop_sim(&c, PowerControlAlgorithm::FixedSnr, 6).unwrap());
    }

    proptest! {
        #[test]
        fn powers_stay_in_bounds(
            meas in proptest::collection::vec(prop_oneof![-1e6f64..1e6, Just(f64::INFINITY), Just(f64::NEG_INFINITY), Just(f64::NAN)], 3),
            gains in proptest::collection::vec(prop_oneof![0.0f64..1e3, Just(1e-300), Just(f64::INFINITY)], 3),
            steps in 1usize..30,
        ) {
            let mut s = PowerControlState::new(3, &cfg()).unwrap();
            for i in 0..steps {
                match i % 3 {
                    0 => pc_fixed_snr(&mut s, &meas),
                    1 => pc_fixed_sinr(&mut s, &meas),
                    _ => pc_hardening(&mut s, &gains),
                }
                for p in &s.powers_dbm {
                    prop_assert!(*p >= s.min_dbm && *p <= s.max_dbm);
                }
            }
        }
    }
}
