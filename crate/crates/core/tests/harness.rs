use std::fs;
use std::path::Path;

use voigt_core::config::SimConfig;
use voigt_core::harness::{export_plots, run_cell, run_experiment, run_stability, run_sweep};
use voigt_core::output::{read_snapshot, read_table};
use voigt_core::Error;

const BASE: &str = r#"
[grid]
dim = 2
points = 32

[time]
horizon = 0.5
dt = 0.05

[galerkin]
modes = 8

[fluid]
mu = 0.1
kappa = 1.0

[initial]
n = 4
velocity = { preset = "taylor_green" }
density = { shape = "vacuum_disk", radius = 1.0, ramp = 0.5 }

[output]
snapshot_stride = 5
"#;

fn cfg(src: &str) -> SimConfig {
    SimConfig::from_toml(src).unwrap()
}

fn run(c: &SimConfig, out: &Path) -> voigt_core::harness::RunReport {
    run_experiment(c, Path::new("."), out).unwrap()
}

#[test]
fn one_step_run_writes_two_ledger_records() {
    let c = cfg(&BASE.replace("horizon = 0.5", "horizon = 0.05"));
    let dir = tempfile::tempdir().unwrap();
    run(&c, dir.path());
    let t = read_table(&dir.path().join("ledger.txt")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.kind, "ledger");
    assert_eq!(t.columns.len(), 12);
}

#[test]
fn single_mode_summary_reports_closed_form_decay() {
    let src = BASE
        .replace("preset = \"taylor_green\"", "preset = \"single_mode\"")
        .replace("density = { shape = \"vacuum_disk\", radius = 1.0, ramp = 0.5 }", "regularize = false")
        .replace("dt = 0.05", "dt = 0.005");
    let dir = tempfile::tempdir().unwrap();
    run(&cfg(&src), dir.path());
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    let ratio: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("amplitude_ratio = "))
        .unwrap()
        .parse()
        .unwrap();
    let expected = (-0.1f64 * 0.5 / 2.0).exp();
    assert!((ratio - expected).abs() / expected < 1e-6, "{ratio} vs {expected}");
}

#[test]
fn every_output_carries_the_config_hash() {
    let c = cfg(BASE);
    let dir = tempfile::tempdir().unwrap();
    run(&c, dir.path());
    let hash = c.hash();
    for name in ["ledger.txt", "summary.txt"] {
        let first = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(first.lines().next().unwrap().ends_with(&format!("config={hash}")));
    }
    let snaps: Vec<_> = fs::read_dir(dir.path().join("snapshots")).unwrap().collect();
    // steps 0, 5, 10
    assert_eq!(snaps.len(), 3);
    let s = read_snapshot(&dir.path().join("snapshots/snap_000005.bin")).unwrap();
    assert_eq!(s.hash, hash);
    assert_eq!(s.fields.len(), 3);
    assert!((s.time - 0.25).abs() < 1e-15);
}

#[test]
fn reruns_are_byte_identical() {
    let c = cfg(BASE);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&c, a.path());
    run(&c, b.path());
    for name in ["ledger.txt", "summary.txt", "snapshots/snap_000010.bin"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn truncated_ledger_still_parses() {
    let dir = tempfile::tempdir().unwrap();
    run(&cfg(BASE), dir.path());
    let path = dir.path().join("ledger.txt");
    let text = fs::read_to_string(&path).unwrap();
    let keep: Vec<&str> = text.lines().take(5).collect();
    fs::write(&path, keep.join("\n") + "\n").unwrap();
    assert_eq!(read_table(&path).unwrap().rows.len(), 3);
}

#[test]
fn one_by_one_sweep_passes() {
    let c = cfg(&format!("{BASE}\n[sweep]\nmodes = [8]\nmollification = [4]\n"));
    let dir = tempfile::tempdir().unwrap();
    let s = run_sweep(&c, Path::new("."), dir.path()).unwrap();
    assert_eq!(s.cells.len(), 1);
    assert!(s.pass());
    assert!(dir.path().join("cell_j8_n4/ledger.txt").exists());
}

#[test]
fn failing_cell_is_marked_and_sweep_continues() {
    // n = 8 puts the mollifier radius below the 32-point grid spacing
    let c = cfg(&format!("{BASE}\n[sweep]\nmodes = [4, 8]\nmollification = [4, 8]\n"));
    let dir = tempfile::tempdir().unwrap();
    let s = run_sweep(&c, Path::new("."), dir.path()).unwrap();
    assert!(!s.pass());
    assert!(s.cells[&(4, 4)].is_ok() && s.cells[&(8, 4)].is_ok());
    assert!(s.cells[&(8, 8)].as_ref().unwrap_err().contains("mollifier radius"));
    let matrix = fs::read_to_string(dir.path().join("sweep.txt")).unwrap();
    assert!(matrix.contains("cell j=8 n=8 status=failed"));
    assert!(matrix.contains("overall = fail"));
}

#[test]
fn stability_pairs_pass_and_scale() {
    let c = cfg(&format!("{BASE}\n[stability]\nepsilons = [1e-3, 1e-4]\nperturbed_mode = 2\n"));
    let dir = tempfile::tempdir().unwrap();
    let s = run_stability(&c, Path::new("."), dir.path()).unwrap();
    assert!(s.calibrated);
    assert!(s.pass(), "gaps {:?}", s.gaps);
    let t = read_table(&dir.path().join("stability_1.txt")).unwrap();
    assert_eq!(t.rows.len(), 11);
    assert!(t.rows.iter().all(|r| r[1] <= r[2]));
}

#[test]
fn configured_coefficient_too_small_fails_the_bound() {
    let c = cfg(&format!("{BASE}\n[stability]\nepsilons = [1e-3]\ncoefficient = 0.0\nperturbed_mode = 2\n"));
    let dir = tempfile::tempdir().unwrap();
    let s = run_stability(&c, Path::new("."), dir.path()).unwrap();
    assert!(!s.calibrated);
    // with C = 0 the bound is E(0); the vacuum region lets the difference grow
    let grew = s.series[0].1.energy.iter().any(|e| *e > s.series[0].1.energy[0]);
    assert_eq!(s.pass(), !grew);
}

#[test]
fn export_writes_csv_for_tables() {
    let c = cfg(BASE);
    let dir = tempfile::tempdir().unwrap();
    run_cell(&c, Path::new("."), 8, 4, &dir.path().join("cell")).unwrap();
    let written = export_plots(dir.path()).unwrap();
    assert_eq!(written, vec![dir.path().join("cell/ledger.csv")]);
    let csv = fs::read_to_string(&written[0]).unwrap();
    assert!(csv.starts_with("time,sqrt_rho_u_sq,"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn cfl_failure_reports_the_time() {
    let src = BASE.replace("dt = 0.05", "dt = 0.5").replace("preset = \"taylor_green\"", "preset = \"taylor_green\", amplitude = 2.0");
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&cfg(&src), Path::new("."), dir.path()).unwrap_err();
    assert!(matches!(err.root(), Error::Cfl { .. }), "{err}");
    assert!(err.to_string().contains("t = 0"));
}
