use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use mipulse::fidelity::{thermal_limit_exact, thermal_limit_leading};
use mipulse::pulse;

fn mipulse(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mipulse"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = mipulse(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value_after(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|rest| rest.trim().parse().ok())
        .unwrap_or_else(|| panic!("no '{key}' in {text}"))
}

#[test]
fn table1_prints_fifteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["table1", "--out", "t.csv"], dir.path());
    assert_eq!(stdout.lines().count(), 16);
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 15);
    let row = rows.iter().find(|r| r[0] == 90.0 && r[1] == 5.0).unwrap();
    assert!((row[5] - 0.6077).abs() < 2e-4);
    assert!(rows.iter().all(|r| r[6] < 1e-10));
}

#[test]
fn limit_reports_both_formulas() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["limit", "--p0", "0.98", "--eta", "0.2156", "--theta", "180"], dir.path());
    let exact = value_after(&stdout, "exact");
    let leading = value_after(&stdout, "leading");
    assert!((exact - thermal_limit_exact(0.98, 0.2156, PI)).abs() < 1e-9 * exact);
    assert!((leading - thermal_limit_leading(0.98, 0.2156, PI)).abs() < 1e-9 * leading);
}

#[test]
fn temperature_input_is_converted() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["limit", "--temperature-uk", "1"], dir.path());
    let p0 = value_after(&stdout, "p0");
    assert!((0.988..=0.992).contains(&p0));
}

#[test]
fn p0_and_temperature_are_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = mipulse(&["limit", "--p0", "0.9", "--temperature-uk", "1"], dir.path());
    assert!(!out.status.success());
    let out = mipulse(&["limit"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn design_torf_writes_time_optimal_pulse() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["design-torf", "--lambda", "5", "--theta", "90", "-o", "p.json"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("p.json")).unwrap();
    let (p, meta) = pulse::parse_with_metadata(&text).unwrap();
    assert!((p.area() / PI - 0.6077).abs() < 2e-4);
    let meta = meta.expect("configuration embedded");
    assert_eq!(meta["command"], "design-torf");
    assert_eq!(meta["args"]["lambda"], 5.0);
}

#[test]
fn identical_configuration_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "design-tod", "--lambda", "5", "--theta", "90", "--duration-us", "50", "--restarts", "2", "-o", "tod.json",
    ];
    ok(&args, dir.path());
    let first = std::fs::read(dir.path().join("tod.json")).unwrap();
    let mut with_jobs = args.to_vec();
    with_jobs.extend(["--jobs", "1"]);
    ok(&with_jobs, dir.path());
    let second = std::fs::read(dir.path().join("tod.json")).unwrap();
    let strip = |b: &[u8]| {
        let v: serde_json::Value = serde_json::from_slice(b).unwrap();
        (v["segments"].clone(), v["metadata"]["args"].clone())
    };
    assert_eq!(strip(&first), strip(&second));
    ok(&args, dir.path());
    assert_eq!(first, std::fs::read(dir.path().join("tod.json")).unwrap());
    let meta: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(meta["metadata"]["args"]["seed"], 0);
}

#[test]
fn infeasible_duration_exits_nonzero_with_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = mipulse(
        &["design-tod", "--lambda", "5", "--theta", "90", "--duration-us", "17", "--restarts", "2", "-o", "x.json"],
        dir.path(),
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no converged design") && err.contains("ent="), "{err}");
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn simulate_and_scans_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["design-torf2", "--lambda", "5", "--theta", "90", "-o", "p.json"], d);
    let stdout = ok(
        &["simulate", "--pulse", "p.json", "--model", "second-order", "--p0", "1", "-o", "r.json"],
        d,
    );
    assert!(stdout.contains("1 − F"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert!(report["infidelity"].as_f64().unwrap() < 5e-6);

    ok(
        &["scan-map", "--pulse", "p.json", "--p0", "0.95", "--points", "3", "--span", "0.1", "--truncation", "10", "-o", "m.csv"],
        d,
    );
    let map = std::fs::read_to_string(d.join("m.csv")).unwrap();
    assert_eq!(map.lines().next(), Some("ddelta_over_omega,domega_over_omega,infidelity,status"));
    assert_eq!(map.lines().count(), 10);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("m.csv.json")).unwrap()).unwrap();
    assert_eq!(side["pulse_sha256"][0].as_str().unwrap().len(), 64);
    assert_eq!(side["config"]["command"], "scan-map");

    ok(&["scan-p0", "--pulse", "p.json", "--p0-grid", "0.9,1", "-o", "q.csv"], d);
    let q = std::fs::read_to_string(d.join("q.csv")).unwrap();
    assert!(q.starts_with("pulse,p0,infidelity,thermal_limit,status"));

    ok(
        &["scan-ratio", "--source", "corrected", "--theta", "180", "--model", "second-order", "--p0", "1", "--from", "3", "--to", "4", "--step", "0.5", "-o", "s.csv"],
        d,
    );
    let s = std::fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(s.lines().count(), 4);
}
