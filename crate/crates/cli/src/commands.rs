//! One function per subcommand. Each turns a validated scenario into
//! result tables plus a few human-readable summary lines.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmimo_core::analysis::{
    across_array_coherence, antenna_power_profile, interpolate_cfr, pdp, rms_delay_spread, Autocorrelation,
};
use mmimo_core::channel::tapped_cfr;
use mmimo_core::detect::{uplink_sim, UplinkConfig};
use mmimo_core::frame::{
    ls_estimate, pilot_map, qpsk_pilots, simulate_pilot_rx, throughput, uncoded_sum_se, PILOT_STRIDE,
};
use mmimo_core::hardening::{closed_loop_sim, gram, hardening_monte_carlo, PowerControlAlgorithm};
use mmimo_core::locate::{
    aoa_estimate, half_power_width, music_spectrum, sample_covariance, subarray_anchors, subarray_split, tdoa_measure,
    tdoa_solve, SnapshotSet,
};
use mmimo_core::scenario::{PcAlgorithmChoice, ScenarioFile};
use mmimo_core::{channel::iid_rayleigh, db_to_lin, CoherenceBw, Error, FrequencyGrid, Result};

use crate::output::{Cell, Table};

pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
}

fn f(v: f64) -> String {
    Cell::Float(v).render()
}

pub fn se_check(s: &ScenarioFile) -> Result<Outcome> {
    let bits = s.link.order.bits_per_symbol();
    let mut t = Table::new(
        "se",
        &["n_users", "bits_per_symbol", "ul_data_symbols_per_frame", "se_bits_per_s_per_hz", "throughput_bps"],
    );
    let mut summary = Vec::new();
    let mut counts = vec![12, 22];
    if !counts.contains(&s.users.n_users) {
        counts.push(s.users.n_users);
    }
    let mut values = Vec::new();
    for k in counts {
        let se = uncoded_sum_se(k, bits, &s.schedule, &s.system);
        let tp = throughput(se, &s.system);
        t.push(vec![k.into(), bits.into(), s.schedule.ul_data_symbols_per_frame.into(), se.into(), tp.into()]);
        summary.push(format!(
            "se n_users={k} bits_per_symbol={bits} se_bits_per_s_per_hz={} throughput_bps={}",
            f(se),
            f(tp)
        ));
        values.push(se);
    }
    summary.push(format!("se ratio_22_over_12={}", f(values[1] / values[0])));
    Ok(Outcome { tables: vec![t], summary })
}

pub fn simulate(s: &ScenarioFile) -> Result<Outcome> {
    let h = s.build_channel()?;
    let cfg = UplinkConfig {
        detector: s.link.detector,
        order: s.link.order,
        noise_variance: db_to_lin(-s.link.snr_db),
        tx_powers: vec![],
        n_symbols: s.link.n_symbols,
        seed: s.seed,
        constellation_samples: s.link.constellation_samples,
    };
    let r = uplink_sim(&h, &cfg)?;
    let mut link = Table::new(
        "link",
        &["user", "detector", "qam_order", "sinr_db", "measured_sinr_db", "evm_pct", "ser", "n_symbols"],
    );
    for k in 0..h.n_users() {
        link.push(vec![
            (k + 1).into(),
            r.detector.name().into(),
            s.link.order.order().into(),
            r.sinr_db[k].into(),
            r.measured_sinr_db[k].into(),
            r.evm_pct[k].into(),
            r.ser[k].into(),
            r.n_symbols.into(),
        ]);
    }
    let mut cons = Table::new("constellation", &["user", "sample", "re", "im"]);
    for (k, pts) in r.constellation.iter().enumerate() {
        for (i, z) in pts.iter().enumerate() {
            cons.push(vec![(k + 1).into(), i.into(), z.re.into(), z.im.into()]);
        }
    }
    let worst_ser = r.ser.iter().cloned().fold(0.0, f64::max);
    let min_sinr = r.sinr_db.iter().cloned().fold(f64::INFINITY, f64::min);
    let summary = vec![format!(
        "simulate users={} antennas={} detector={} max_ser={} min_sinr_db={}",
        h.n_users(),
        h.n_antennas(),
        r.detector.name(),
        f(worst_ser),
        f(min_sinr)
    )];
    Ok(Outcome { tables: vec![link, cons], summary })
}

pub fn hardening(s: &ScenarioFile) -> Result<Outcome> {
    let hs = &s.hardening;
    let mut t = Table::new("hardening", &["n_antennas", "n_users", "metric", "n_seeds", "mean_ratio", "std_ratio"]);
    let mut g = Table::new("gram", &["n_antennas", "row", "col", "magnitude"]);
    let mut means = Vec::new();
    for &m in &hs.antenna_counts {
        let st = hardening_monte_carlo(m, hs.n_users, hs.n_seeds, hs.metric, s.seed)?;
        t.push(vec![
            m.into(),
            hs.n_users.into(),
            hs.metric.name().into(),
            hs.n_seeds.into(),
            st.mean.into(),
            st.std.into(),
        ]);
        means.push(st.mean);
        let gm = gram(&iid_rayleigh(m, hs.n_users, s.seed));
        for i in 0..hs.n_users {
            for j in 0..hs.n_users {
                g.push(vec![m.into(), (i + 1).into(), (j + 1).into(), gm.matrix[(i, j)].norm().into()]);
            }
        }
    }
    let mut summary: Vec<String> = hs
        .antenna_counts
        .iter()
        .zip(&means)
        .map(|(m, r)| format!("hardening n_antennas={m} metric={} mean_ratio={}", hs.metric.name(), f(*r)))
        .collect();
    if means.len() >= 2 {
        let (a, b) = (hs.antenna_counts[0] as f64, hs.antenna_counts[means.len() - 1] as f64);
        summary.push(format!(
            "hardening ratio_of_ratios={} inverse_sqrt_law={}",
            f(means[means.len() - 1] / means[0]),
            f((a / b).sqrt())
        ));
    }
    Ok(Outcome { tables: vec![t, g], summary })
}

pub fn powercontrol(s: &ScenarioFile) -> Result<Outcome> {
    let pc = &s.power_control;
    let algorithms: Vec<PowerControlAlgorithm> = match pc.algorithm {
        PcAlgorithmChoice::All => PowerControlAlgorithm::ALL.to_vec(),
        PcAlgorithmChoice::FixedSnr => vec![PowerControlAlgorithm::FixedSnr],
        PcAlgorithmChoice::FixedSinr => vec![PowerControlAlgorithm::FixedSinr],
        PcAlgorithmChoice::Hardening => vec![PowerControlAlgorithm::Hardening],
    };
    let mut traj = Table::new("trajectory", &["algorithm", "iteration", "user", "tx_power_dbm", "sinr_db", "snr_db"]);
    let mut sum = Table::new(
        "powercontrol",
        &["algorithm", "iterations", "n_updates", "aggregate_sinr_db", "aggregate_over", "converged_iteration"],
    );
    let mut summary = Vec::new();
    for alg in algorithms {
        let t = closed_loop_sim(pc, alg, s.seed)?;
        for r in &t.rows {
            traj.push(vec![
                alg.name().into(),
                r.iteration.into(),
                (r.user + 1).into(),
                r.tx_power_dbm.into(),
                r.sinr_db.into(),
                r.snr_db.into(),
            ]);
        }
        let conv = t.converged_at(0.1).map_or(Cell::from("none"), Cell::from);
        sum.push(vec![
            alg.name().into(),
            pc.iterations.into(),
            t.n_updates().into(),
            t.aggregate_sinr_db.into(),
            "users_and_iterations".into(),
            conv.clone(),
        ]);
        summary.push(format!(
            "powercontrol algorithm={} n_updates={} aggregate_sinr_db={} converged_iteration={}",
            alg.name(),
            t.n_updates(),
            f(t.aggregate_sinr_db),
            conv.render()
        ));
    }
    Ok(Outcome { tables: vec![traj, sum], summary })
}

fn bc_cell(b: CoherenceBw) -> Cell {
    match b {
        CoherenceBw::Hz(h) => Cell::Float(h),
        CoherenceBw::ExceedsBand => Cell::from("exceeds_band"),
    }
}

pub fn analyze(s: &ScenarioFile) -> Result<Outcome> {
    let an = &s.analysis;
    let geom = s.build_array()?;
    let users = s.build_users()?;
    let user = an.user - 1;
    if user >= users.len() {
        return Err(Error::Config(vec![format!("analysis.user {} exceeds the {} users", an.user, users.len())]));
    }
    let spacing = s.system.subcarrier_spacing;
    let n_occ = s.system.n_occupied;
    let truth = tapped_cfr(&s.build_taps()?, &geom, &users, &FrequencyGrid::Full { n_occupied: n_occ }, spacing)?;
    let cfr = if an.via_pilots {
        let map = pilot_map(users.len(), n_occ)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let known = qpsk_pilots(n_occ, &mut rng);
        let nv = an.pilot_snr_db.map_or(0.0, |snr| db_to_lin(-snr));
        let rx = (0..s.schedule.ul_pilot_symbols_per_frame.max(1))
            .map(|_| simulate_pilot_rx(&truth, &known, &map, nv, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        interpolate_cfr(&ls_estimate(&rx, &known, &map, spacing)?.cfr)?
    } else {
        truth
    };

    let prof = antenna_power_profile(&cfr, user)?;
    let mut power = Table::new("power_profile", &["antenna", "power_db"]);
    for (m, p) in prof.db.iter().enumerate() {
        power.push(vec![(m + 1).into(), (*p).into()]);
    }

    let mut p = pdp(&cfr.series(0, user), spacing, an.window)?;
    if an.via_pilots {
        p = p.with_comb_stride(PILOT_STRIDE);
    }
    let mut pdp_t = Table::new("pdp", &["bin", "delay_s", "power", "unambiguous"]);
    for (i, (d, pw)) in p.delays.iter().zip(&p.power).enumerate() {
        pdp_t.push(vec![i.into(), (*d).into(), (*pw).into(), p.is_unambiguous(*d).into()]);
    }
    let spread = rms_delay_spread(&p, Some(an.noise_floor_db))?;

    let mut cols = vec!["antenna".to_string()];
    let mut curves = Vec::new();
    for &th in &an.thresholds {
        cols.push(format!("bc_hz_{:03}", (th * 100.0).round() as i64));
        curves.push(across_array_coherence(&cfr, user, th, Autocorrelation::Circular)?);
    }
    let mut coh = Table { name: "coherence".into(), columns: cols, rows: Vec::new() };
    for m in 0..cfr.n_antennas() {
        let mut row = vec![Cell::from(m + 1)];
        row.extend(curves.iter().map(|c| bc_cell(c[m])));
        coh.push(row);
    }

    let mut stats = Table::new("delay_stats", &["user", "antenna", "rms_delay_spread_s", "noise_floor_db", "window"]);
    stats.push(vec![
        an.user.into(),
        1usize.into(),
        spread.into(),
        an.noise_floor_db.into(),
        format!("{:?}", an.window).to_lowercase().into(),
    ]);
    let mut summary = vec![format!("analyze user={} rms_delay_spread_s={}", an.user, f(spread))];
    for (th, c) in an.thresholds.iter().zip(&curves) {
        summary.push(format!(
            "analyze user={} antenna=1 threshold={th} coherence_bw={}",
            an.user,
            bc_cell(c[0]).render()
        ));
    }
    Ok(Outcome { tables: vec![power, pdp_t, coh, stats], summary })
}

pub fn locate(s: &ScenarioFile) -> Result<Outcome> {
    let l = &s.locate;
    let geom = s.build_array()?;
    let snaps = SnapshotSet::simulate(&geom, &l.source_angles_deg, l.music_snr_db, l.n_snapshots, s.seed)?;
    let r = sample_covariance(&snaps);
    let n_grid = (180.0 / l.grid_step_deg).round() as usize;
    let grid: Vec<f64> = (0..=n_grid).map(|i| -90.0 + i as f64 * l.grid_step_deg).collect();
    let pseudo = music_spectrum(&r, &geom, l.source_angles_deg.len(), &grid)?;
    let est = aoa_estimate(&pseudo, l.source_angles_deg.len())?;

    let mut pas = Table::new("pas", &["angle_deg", "value"]);
    for (a, v) in pseudo.angles_deg.iter().zip(&pseudo.values) {
        pas.push(vec![(*a).into(), (*v).into()]);
    }
    let mut truth = l.source_angles_deg.clone();
    truth.sort_by(f64::total_cmp);
    let mut found = est.angles_deg.clone();
    found.sort_by(f64::total_cmp);
    let mut aoa = Table::new("aoa", &["source", "truth_deg", "estimate_deg", "error_deg"]);
    for (i, (t, e)) in truth.iter().zip(&found).enumerate() {
        aoa.push(vec![(i + 1).into(), (*t).into(), (*e).into(), (e - t).into()]);
    }
    let width = half_power_width(&pseudo);
    let mut music =
        Table::new("music", &["n_elements", "n_sources", "half_power_width_deg", "fewer_peaks_than_requested"]);
    music.push(vec![
        geom.len().into(),
        l.source_angles_deg.len().into(),
        width.into(),
        est.fewer_peaks_than_requested.into(),
    ]);

    let mut subs = Table::new("subarrays", &["subarray", "n_elements", "x", "y", "z"]);
    if l.subarrays > 0 {
        let parts = subarray_split(&geom, l.subarrays)?;
        for (i, (p, c)) in parts.iter().zip(subarray_anchors(&parts)).enumerate() {
            subs.push(vec![(i + 1).into(), p.len().into(), c.x.into(), c.y.into(), c.z.into()]);
        }
    }

    let anchors: Vec<Vector3<f64>> = l.anchors.iter().map(|a| Vector3::from(*a)).collect();
    let source = Vector3::from(l.source);
    let guess = l.initial_guess.map(Vector3::from);
    let mut tdoa = Table::new("tdoa", &["trial", "x", "y", "z", "error_m", "residual_s2", "status"]);
    let mut errors = Vec::new();
    for trial in 0..l.trials {
        let p = tdoa_measure(&anchors, source, l.tdoa_noise_std_s, s.seed.wrapping_add(trial as u64))?;
        let (pos, res, status) = match tdoa_solve(&p, guess) {
            Ok(sol) => (sol.position, sol.residual, "converged"),
            Err(Error::NonConvergence { residual, last, .. }) => (Vector3::from(last), residual, "non_convergence"),
            Err(e) => return Err(e),
        };
        let err = (pos - source).norm();
        errors.push(err);
        tdoa.push(vec![
            (trial + 1).into(),
            pos.x.into(),
            pos.y.into(),
            pos.z.into(),
            err.into(),
            res.into(),
            status.into(),
        ]);
    }
    errors.sort_by(f64::total_cmp);
    let median = if errors.is_empty() { f64::NAN } else { errors[errors.len() / 2] };

    let mut summary: Vec<String> = truth
        .iter()
        .zip(&found)
        .map(|(t, e)| format!("locate music truth_deg={} estimate_deg={}", f(*t), f(*e)))
        .collect();
    summary.push(format!("locate music half_power_width_deg={}", f(width)));
    summary.push(format!("locate tdoa trials={} median_error_m={} los={}", l.trials, f(median), l.los));
    Ok(Outcome { tables: vec![pas, aoa, music, subs, tdoa], summary })
}
