use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mmimo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmimo")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn se_check_reports_record_and_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mmimo(tmp.path(), &["se-check", "--out", "se"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("n_users=12 bits_per_symbol=8 se_bits_per_s_per_hz=7.94880000e1"), "{out}");
    assert!(out.contains("ratio_22_over_12=1.83333333e0"), "{out}");
    let csv = fs::read_to_string(tmp.path().join("se/se.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,n_users,bits_per_symbol,ul_data_symbols_per_frame,se_bits_per_s_per_hz,throughput_bps"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0].len(), 16);
    assert_eq!(&first[1..], ["12", "8", "138", "7.94880000e1", "1.58976000e9"]);
}

#[test]
fn default_output_directory_is_per_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(mmimo(tmp.path(), &["se-check"]).status.success());
    assert!(tmp.path().join("mmimo-out/se-check/manifest.toml").is_file());
}

#[test]
fn more_users_than_antennas_with_zf_is_numerical() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("s.toml"), "[array]\nn_elements = 8\n[link]\ndetector = \"zf\"\n").unwrap();
    let o = mmimo(tmp.path(), &["simulate", "s.toml"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=numerical exit=3"), "{err}");
    assert!(err.contains("rank-deficient"), "{err}");
}

#[test]
fn every_config_violation_is_listed() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("bad.toml"),
        "[array]\nspacing_lambda = -1.0\n[users]\nn_users = 0\n[link]\nn_symbols = 0\n",
    )
    .unwrap();
    let o = mmimo(tmp.path(), &["simulate", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["array.spacing_lambda", "users.n_users", "link.n_symbols"] {
        assert!(err.contains(needle), "missing {needle}: {err}");
    }
    assert!(!tmp.path().join("mmimo-out").exists());
}

#[test]
fn unknown_keys_and_bad_types_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("a.toml"), "[link]\ndetektor = \"zf\"\n").unwrap();
    fs::write(tmp.path().join("b.toml"), "seed = \"x\"\n").unwrap();
    for f in ["a.toml", "b.toml"] {
        let o = mmimo(tmp.path(), &["simulate", f]);
        assert_eq!(o.status.code(), Some(2), "{f}: {}", stderr(&o));
        assert_eq!(stderr(&o).lines().count(), 1);
    }
}

#[test]
fn missing_scenario_is_io() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mmimo(tmp.path(), &["analyze", "absent.toml"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("absent.toml"));
}

#[test]
fn zero_threads_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(mmimo(tmp.path(), &["se-check", "--threads", "0"]).status.code(), Some(2));
}

#[test]
fn structured_text_rows_carry_table_and_run_id() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mmimo(tmp.path(), &["hardening", "--format", "structured-text", "--out", "h"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("h/hardening.txt")).unwrap();
    assert!(text.lines().all(|l| l.starts_with("table=hardening run_id=")));
    let manifest = fs::read_to_string(tmp.path().join("h/manifest.toml")).unwrap();
    assert!(manifest.contains("format = \"structured-text\""));
    assert!(manifest.contains("\"hardening.txt\""));
}

#[test]
fn seed_changes_run_id_and_rerun_keeps_it() {
    let tmp = tempfile::tempdir().unwrap();
    let run_id = |dir: &str| {
        let m = fs::read_to_string(tmp.path().join(dir).join("manifest.toml")).unwrap();
        m.lines().find(|l| l.starts_with("run_id")).unwrap().to_string()
    };
    assert!(mmimo(tmp.path(), &["simulate", "--seed", "5", "--out", "a"]).status.success());
    assert!(mmimo(tmp.path(), &["simulate", "--seed", "6", "--out", "b"]).status.success());
    assert!(mmimo(tmp.path(), &["rerun", "a/manifest.toml", "--out", "c", "--threads", "3"]).status.success());
    assert_ne!(run_id("a"), run_id("b"));
    assert_eq!(run_id("a"), run_id("c"));
    for f in ["link.csv", "constellation.csv"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("c").join(f)).unwrap());
    }
}

#[test]
fn scenario_file_drives_via_pilot_analysis() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("s.toml"),
        "[channel]\nmodel = \"tapped\"\n[[channel.taps]]\ndelay_s = 0.0\ngain_re = 1.0\n\
         [[channel.taps]]\ndelay_s = 1e-6\ngain_re = 0.5\n[analysis]\nvia_pilots = true\npilot_snr_db = 30.0\n",
    )
    .unwrap();
    let o = mmimo(tmp.path(), &["analyze", "s.toml", "--out", "an"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["power_profile.csv", "pdp.csv", "coherence.csv", "delay_stats.csv"] {
        assert!(tmp.path().join("an").join(f).is_file(), "{f}");
    }
}
