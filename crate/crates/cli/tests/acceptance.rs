//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_INFEASIBLE` are run unchanged and reported as
//! FAIL; they do not fail the process. Any other failure does.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mmimo_core::analysis::{coherence_bw, pdp};
use mmimo_core::channel::{phase_aligned_distance, synthesize, tapped_cfr, ChannelModel, PolarisationCoupling};
use mmimo_core::detect::{detector_weights, post_sinr, random_powers, uplink_sim, UplinkConfig};
use mmimo_core::frame::{throughput, uncoded_sum_se};
use mmimo_core::hardening::{closed_loop_sim, gram, hardening_monte_carlo, ClosedLoopConfig, PowerControlAlgorithm};
use mmimo_core::locate::{aoa_estimate, half_power_width, music_spectrum, sample_covariance, tdoa_measure, tdoa_solve};
use mmimo_core::scenario::{make_ula, place_ue_line, presets};
use mmimo_core::{
    channel::iid_rayleigh, db_to_lin, Autocorrelation, Complex64, DetectorKind, FrameSchedule, FrequencyGrid, QamOrder,
    RatioMetric, SnapshotSet, SystemConfig, Tap, TapSet, UePlacement, Window,
};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot be met by a faithful implementation; see the
/// informational lines printed beside them.
const KNOWN_INFEASIBLE: &[usize] = &[6];

struct Verdict {
    pass: bool,
    detail: String,
    info: Vec<String>,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail, info: Vec::new() }
}

type Check = fn() -> Verdict;

fn c1_se_record() -> Verdict {
    let cfg = SystemConfig::default();
    let se = uncoded_sum_se(12, 8, &FrameSchedule::default(), &cfg);
    let tp = throughput(se, &cfg);
    verdict(
        (se - 79.4).abs() <= 0.2 && (tp / 1.59e9 - 1.0).abs() <= 0.01,
        format!("se={se:.4} bits/s/Hz throughput={:.4} Gbps", tp / 1e9),
    )
}

fn c2_scaling() -> Verdict {
    let cfg = SystemConfig::default();
    let s = FrameSchedule::default();
    let (se12, se22) = (uncoded_sum_se(12, 8, &s, &cfg), uncoded_sum_se(22, 8, &s, &cfg));
    // Linear in K; the two divisions round independently.
    let ratio_ok = (se22 / se12 - 22.0 / 12.0).abs() <= 4.0 * f64::EPSILON;
    verdict(ratio_ok && (se22 - 145.6).abs() <= 0.4, format!("se22={se22:.4} ratio={:.17}", se22 / se12))
}

fn c3_aperture() -> Verdict {
    let a = make_ula(128, 3.5e9).unwrap().aperture();
    verdict((a - 5.44).abs() <= 0.01, format!("aperture={a:.5} m"))
}

fn c4_hardening() -> Verdict {
    let run = |metric| {
        let m32 = hardening_monte_carlo(32, 12, 500, metric, 4).unwrap().mean;
        let m112 = hardening_monte_carlo(112, 12, 500, metric, 4).unwrap().mean;
        (m32, m112, m112 / m32)
    };
    let law = (32.0f64 / 112.0).sqrt();
    let (m32, m112, r) = run(RatioMetric::MeanEigenvalue);
    let mut v = verdict(
        m112 < m32 && (r - law).abs() <= 0.1,
        format!("metric=mean_eigenvalue ratio32={m32:.4} ratio112={m112:.4} ratio_of_ratios={r:.4} law={law:.4}"),
    );
    let (n32, n112, rn) = run(RatioMetric::MinEigenvalue);
    v.info.push(format!("metric=min_eigenvalue ratio32={n32:.4} ratio112={n112:.4} ratio_of_ratios={rn:.4}"));
    v
}

fn c5_dominance() -> Verdict {
    let mut worst = f64::INFINITY;
    for seed in 0..100u64 {
        let h = iid_rayleigh(128, 12, 1000 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_powers(12, &mut rng);
        let nv = 0.1;
        let sinr = |kind| post_sinr(&detector_weights(kind, &h, nv, &p).unwrap(), &h, nv, &p);
        let (mmse, zf, mrc) = (sinr(DetectorKind::Mmse), sinr(DetectorKind::Zf), sinr(DetectorKind::Mrc));
        for k in 0..12 {
            worst = worst.min(mmse[k] - zf[k].max(mrc[k]));
        }
    }
    verdict(worst >= -1e-9, format!("min(mmse - max(zf, mrc))={worst:.3e} dB over 100x12 users"))
}

fn linear_ser(h: &mmimo_core::ChannelMatrix, snr_db: f64, n: usize) -> (f64, f64) {
    let cfg = UplinkConfig {
        detector: DetectorKind::Mmse,
        order: QamOrder::Qam256,
        noise_variance: db_to_lin(-snr_db),
        tx_powers: vec![],
        n_symbols: n,
        seed: 6,
        constellation_samples: 0,
    };
    let r = uplink_sim(h, &cfg).unwrap();
    let max_ser = r.ser.iter().cloned().fold(0.0, f64::max);
    let min_sinr = r.sinr_db.iter().cloned().fold(f64::INFINITY, f64::min);
    (max_ser, min_sinr)
}

fn c6_trial_two() -> Verdict {
    let spherical = ChannelModel::Spherical { amplitude_decay: false };
    let coupling = PolarisationCoupling::default();
    let geom = presets::patch_panel_array();
    let h = synthesize(&geom, &presets::balcony_users(12).unwrap(), &spherical, coupling, 0).unwrap();
    let (ser, sinr) = linear_ser(&h, 40.0, 100_000);
    let mut v = verdict(ser == 0.0, format!("4x32 at 24.8 m, snr=40 dB: max_ser={ser:.4e} min_mmse_sinr={sinr:.2} dB"));
    let eig = gram(&h).eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    v.info.push(format!("gram lambda_min/lambda_max={:.3e} (numerically rank deficient)", lo / hi));
    for snr in [60.0, 80.0, 100.0, 120.0] {
        let (s, q) = linear_ser(&h, snr, 20_000);
        v.info.push(format!("snr={snr} dB max_ser={s:.4e} min_mmse_sinr={q:.2} dB"));
    }
    let h1 = synthesize(
        &presets::linear_dipole_array(),
        &presets::linear_trial_users(3.3).unwrap(),
        &spherical,
        coupling,
        0,
    )
    .unwrap();
    let (s1, q1) = linear_ser(&h1, 40.0, 100_000);
    v.info.push(format!("128-ULA at 3.3 m, snr=40 dB: max_ser={s1:.4e} min_mmse_sinr={q1:.2} dB"));
    v
}

const DF: f64 = 15e3;
const N_SC: usize = 1200;

fn single_antenna_cfr(taps: &[(f64, Complex64)]) -> Vec<Complex64> {
    let t = TapSet::new(taps.iter().map(|&(d, g)| Tap::flat(d, g)).collect()).unwrap();
    let g = make_ula(1, 3.5e9).unwrap();
    let u = place_ue_line(1, 2.5, 5.0, 3.5e9).unwrap();
    tapped_cfr(&t, &g, &u, &FrequencyGrid::Full { n_occupied: N_SC }, DF).unwrap().series(0, 0)
}

fn c7_pdp_oracle() -> Verdict {
    let bin = 1.0 / (N_SC as f64 * DF);
    let layout = [(0usize, 1.0), (7, 0.6), (23, 0.3), (40, 0.1)];
    let taps: Vec<(f64, Complex64)> =
        layout.iter().map(|&(b, a)| (b as f64 * bin, Complex64::from_polar(a, 0.3 * b as f64))).collect();
    let cfr = single_antenna_cfr(&taps);
    let p = pdp(&cfr, DF, Window::Rectangular).unwrap();
    let mut worst_db = 0.0f64;
    for &(b, a) in &layout {
        worst_db = worst_db.max((10.0 * (p.power[b] / (a * a)).log10()).abs());
    }
    let off_grid: f64 = (0..N_SC).filter(|i| !layout.iter().any(|s| s.0 == *i)).map(|i| p.power[i]).sum();
    let mean_sq = cfr.iter().map(|z| z.norm_sqr()).sum::<f64>() / N_SC as f64;
    let parseval = (p.total_power() - mean_sq).abs() / mean_sq;
    verdict(
        worst_db <= 0.1 && off_grid < 1e-12 && parseval <= 1e-9,
        format!("max_tap_error={worst_db:.3e} dB leakage={off_grid:.3e} parseval_rel={parseval:.3e}"),
    )
}

fn c8_coherence() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for tau in [0.5e-6, 1e-6, 2e-6] {
        let one = Complex64::new(1.0, 0.0);
        let cfr = single_antenna_cfr(&[(0.0, one), (tau, one)]);
        let bc = coherence_bw(&cfr, DF, 0.5, Autocorrelation::Circular).unwrap().hz();
        let want = 1.0 / (3.0 * tau);
        ok &= bc.is_some_and(|b| (b - want).abs() <= DF);
        parts.push(format!("tau={:.1}us bc={:.0} want={want:.0}", tau * 1e6, bc.unwrap_or(f64::NAN)));
    }
    verdict(ok, parts.join(" "))
}

fn c9_far_field() -> Verdict {
    let g = make_ula(128, 3.5e9).unwrap();
    let df = g.fraunhofer_distance();
    let c = PolarisationCoupling::default();
    let dir = Vector3::new(0.3f64.sin(), 0.3f64.cos(), 0.0);
    let err = |mult: f64| {
        let ue = UePlacement::new(vec![g.centroid() + dir * (mult * df)]).unwrap();
        let s = synthesize(&g, &ue, &ChannelModel::Spherical { amplitude_decay: false }, c, 0).unwrap();
        let p = synthesize(&g, &ue, &ChannelModel::Planar { amplitude_decay: false }, c, 0).unwrap();
        phase_aligned_distance(&s.user(0), &p.user(0))
    };
    let mults = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0];
    let errs: Vec<f64> = mults.iter().map(|&m| err(m)).collect();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let at100 = errs[6];
    let curve = errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(",");
    verdict(
        at100 < 1e-2 && monotone,
        format!("fraunhofer={df:.1} m error@100x={at100:.3e} monotone={monotone} curve=[{}]", curve),
    )
}

fn c10_music() -> Verdict {
    let covariance = |m: usize, snr_db: f64| {
        let geom = make_ula(m, 3.5e9).unwrap();
        (sample_covariance(&SnapshotSet::simulate(&geom, &[20.0], snr_db, 200, 10).unwrap()), geom)
    };
    let coarse: Vec<f64> = (0..=3600).map(|i| -90.0 + 0.05 * i as f64).collect();
    let (r, g) = covariance(128, f64::INFINITY);
    let est = aoa_estimate(&music_spectrum(&r, &g, 1, &coarse).unwrap(), 1).unwrap().angles_deg[0];
    // A noiseless peak is unbounded, so widths are compared at 10 dB.
    let fine: Vec<f64> = (0..=8000).map(|i| 0.005 * i as f64).collect();
    let width = |m: usize| {
        let (r, g) = covariance(m, 10.0);
        half_power_width(&music_spectrum(&r, &g, 1, &fine).unwrap())
    };
    let (w128, w32) = (width(128), width(32));
    verdict(
        (est - 20.0).abs() <= 0.1 && w128 < w32,
        format!("estimate={est:.5} deg width128={w128:.4e} width32={w32:.4e} deg at 10 dB"),
    )
}

fn c11_tdoa() -> Verdict {
    let v = Vector3::new;
    let tri = vec![v(0.0, 0.0, 0.0), v(100.0, 0.0, 0.0), v(30.0, 90.0, 0.0)];
    let src = v(41.0, 33.0, 0.0);
    let exact = tdoa_solve(&tdoa_measure(&tri, src, 0.0, 1).unwrap(), None).map(|s| (s.position - src).norm());
    let square = vec![v(0.0, 0.0, 0.0), v(100.0, 0.0, 0.0), v(100.0, 100.0, 0.0), v(0.0, 100.0, 0.0)];
    let src2 = v(37.0, 61.0, 0.0);
    let mut errs: Vec<f64> = (0..1000u64)
        .map(|t| {
            let p = tdoa_measure(&square, src2, 1e-9, 50_000 + t).unwrap();
            tdoa_solve(&p, None).map_or(f64::INFINITY, |s| (s.position - src2).norm())
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    let median = errs[errs.len() / 2];
    let exact_ok = exact.as_ref().is_ok_and(|e| *e <= 1e-6);
    verdict(exact_ok && median < 1.0, format!("noiseless_error={exact:?} m median_1ns={median:.4} m over 1000"))
}

fn c12_power_control() -> Verdict {
    let cfg = ClosedLoopConfig::default();
    let gains = &cfg.path_gains_db;
    let spread = gains[0] - gains[1];
    let sinr = closed_loop_sim(&cfg, PowerControlAlgorithm::FixedSinr, 1).unwrap();
    let hard = closed_loop_sim(&cfg, PowerControlAlgorithm::Hardening, 1).unwrap();
    let conv = sinr.converged_at(0.1);
    let iterations = conv.map(|i| i + 1);
    let overhead_ok = 10 * hard.n_updates() <= sinr.n_updates();
    verdict(
        (spread - 20.0).abs() < 1e-12 && iterations.is_some_and(|n| n <= 30) && overhead_ok,
        format!(
            "near_far={spread} dB converged_in={iterations:?} iterations updates fixed_sinr={} hardening={}",
            sinr.n_updates(),
            hard.n_updates()
        ),
    )
}

fn mmimo(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_mmimo")).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

/// Every file except the manifest, by name.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.toml")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn c13_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut bad = Vec::new();
    for sub in ["se-check", "simulate", "hardening", "powercontrol", "analyze", "locate"] {
        let a = tmp.path().join(format!("{sub}-1"));
        let b = tmp.path().join(format!("{sub}-4"));
        let (a_s, b_s) = (a.to_str().unwrap(), b.to_str().unwrap());
        let manifest = a.join("manifest.toml");
        let ran = mmimo(&[sub, "--threads", "1", "--out", a_s])
            && mmimo(&["rerun", manifest.to_str().unwrap(), "--threads", "4", "--out", b_s]);
        if !ran || outputs(&a).is_empty() || outputs(&a) != outputs(&b) {
            bad.push(sub);
        }
    }
    verdict(bad.is_empty(), format!("subcommands differing or failing: {bad:?}"))
}

fn main() {
    let checks: [(&str, Check); 13] = [
        ("SE record reproduction", c1_se_record),
        ("22-user scaling", c2_scaling),
        ("aperture check", c3_aperture),
        ("hardening direction and law", c4_hardening),
        ("detector dominance", c5_dominance),
        ("trial-two qualitative detection", c6_trial_two),
        ("PDP oracle", c7_pdp_oracle),
        ("coherence bandwidth analytic", c8_coherence),
        ("spherical to planar convergence", c9_far_field),
        ("MUSIC accuracy", c10_music),
        ("TDOA exactness", c11_tdoa),
        ("power-control convergence", c12_power_control),
        ("determinism", c13_determinism),
    ];
    let mut unexpected = 0;
    let mut passed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let n = i + 1;
        let t0 = Instant::now();
        let v = check();
        let secs = t0.elapsed().as_secs_f64();
        let status = if v.pass { "PASS" } else { "FAIL" };
        let known = !v.pass && KNOWN_INFEASIBLE.contains(&n);
        let tag = if known { " [documented infeasible]" } else { "" };
        println!("{status} {n:>2} {name}: {} ({secs:.1}s){tag}", v.detail);
        for line in &v.info {
            println!("       info: {line}");
        }
        if v.pass {
            passed += 1;
            if KNOWN_INFEASIBLE.contains(&n) {
                println!("       note: criterion {n} is listed as infeasible but passed");
            }
        } else if !known {
            unexpected += 1;
        }
    }
    println!(
        "acceptance: {passed}/13 passed, {} documented infeasible, {unexpected} unexpected failures",
        13 - passed - unexpected
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}
