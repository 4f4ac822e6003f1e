use std::path::Path;
use std::process::{Command, Output};

use mkvlab::report::{Summary, Table};

fn mkvlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mkvlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("MKVLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL_EXAMPLE1: &str = "\
scenario.id = \"example1-quartic\"
sim.particles = 500
sim.horizon = 1.0
sim.steps_per_unit = 200
sim.checkpoint_interval = 0.25
";

#[test]
fn simulate_writes_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_EXAMPLE1);
    let out = mkvlab(&["simulate", "--config", &cfg, "--out", "res", "--seed", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/diagnostics.csv")).unwrap();
    let table = Table::from_csv(&csv).unwrap();
    for col in ["t", "m4", "v_mean", "M", "M_plus", "exit_frac_5", "exit_frac_10", "exit_frac_20", "exit_bound_5"] {
        assert!(table.column_index(col).is_some(), "missing {col}");
    }
    assert_eq!(table.rows.len(), 5);
    let summary = Summary::parse(&std::fs::read_to_string(dir.path().join("res/summary.txt")).unwrap()).unwrap();
    assert_eq!(summary.get("scenario"), Some("example1-quartic"));
    assert_eq!(summary.get("seed"), Some("3"));
    assert_eq!(summary.get("violations"), Some("0"));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &SMALL_EXAMPLE1.replace("500", "3000"));
    let a = mkvlab(&["simulate", "--config", &cfg, "--out", "one", "--threads", "1"], dir.path());
    let b = Command::new(env!("CARGO_BIN_EXE_mkvlab"))
        .args(["simulate", "--config", &cfg, "--out", "four"])
        .env("MKVLAB_THREADS", "4")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    for f in ["diagnostics.csv", "summary.txt"] {
        let x = std::fs::read(dir.path().join("one").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("four").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn malformed_config_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "sim.particles = 10\nsim.horizon = \"long\"\n");
    let out = mkvlab(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("horizon"), "{err}");

    let cfg = write(dir.path(), "bad2.toml", "sim.particles = 0\n");
    assert_eq!(mkvlab(&["simulate", "--config", &cfg], dir.path()).status.code(), Some(2));
    assert_eq!(mkvlab(&["simulate", "--config", "missing.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(mkvlab(&["simulate", "--bogus"], dir.path()).status.code(), Some(2));
}

#[test]
fn example2_without_positive_rate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ex2.toml",
        "scenario.id = \"example2-nonlinear\"\nscenario.alpha = -0.5\nscenario.sigma = 1.0\n",
    );
    let out = mkvlab(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn lions_check_on_registry() {
    let dir = tempfile::tempdir().unwrap();
    let out = mkvlab(&["lions-check", "--out", "l"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = Table::from_csv(&std::fs::read_to_string(dir.path().join("l/lions.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), mkvlab::lions::MeasureFunction::registry().len());
    assert!(table.column("passed").unwrap().iter().all(|&p| p == 1.0));
}

#[test]
fn lyapunov_check_passes_for_builtins() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["example1-quartic", "example2-nonlinear", "example3-cir"] {
        let cfg = write(dir.path(), "ly.toml", &format!("scenario.id = \"{id}\"\nlyapunov.probes = 10\nlyapunov.probe_size = 50\n"));
        let out = mkvlab(&["lyapunov-check", "--config", &cfg, "--out", id], dir.path());
        assert_eq!(out.status.code(), Some(0), "{id}: {}", String::from_utf8_lossy(&out.stderr));
        let table = Table::from_csv(&std::fs::read_to_string(dir.path().join(id).join("lyapunov.csv")).unwrap()).unwrap();
        assert_eq!(table.rows.len(), 30);
    }
}

#[test]
fn stability_equality_case() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "st.toml",
        "scenario.id = \"linear-meanfield\"\nsim.particles = 100\nsim.horizon = 1.0\nsim.steps_per_unit = 1000\n",
    );
    let out = mkvlab(&["stability", "--config", &cfg, "--out", "s", "--tolerance", "0"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = Table::from_csv(&std::fs::read_to_string(dir.path().join("s/stability.csv")).unwrap()).unwrap();
    let (t, m, b) = (table.column("t").unwrap(), table.column("measured").unwrap(), table.column("bound").unwrap());
    for i in 0..t.len() {
        assert!((b[i] - (-2.0 * t[i]).exp()).abs() < 1e-12);
        assert!(m[i] <= b[i] && (m[i] - b[i]).abs() < 2e-3 * b[i]);
    }
    // scenarios without a certificate need explicit rates
    let cfg = write(dir.path(), "st2.toml", "scenario.id = \"example1-quartic\"\n");
    assert_eq!(mkvlab(&["stability", "--config", &cfg], dir.path()).status.code(), Some(2));
}

#[test]
fn stationary_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sta.toml",
        "sim.particles = 100\nsim.steps_per_unit = 50\nsim.checkpoint_interval = 0.5\nstationary.horizons = [1.0, 2.0, 4.0]\n",
    );
    let out = mkvlab(&["stationary", "--config", &cfg, "--out", "o"], dir.path());
    assert!(matches!(out.status.code(), Some(0) | Some(4)));
    let table = Table::from_csv(&std::fs::read_to_string(dir.path().join("o/stationary.csv")).unwrap()).unwrap();
    assert_eq!(table.column("samples").unwrap(), vec![200.0, 400.0, 800.0]);
}

#[test]
fn wasserstein_of_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.txt", "0.5\n-1.0\n2.0\n");
    let b = write(dir.path(), "b.txt", "2.0\n0.5\n-1.0\n");
    let out = mkvlab(&["wasserstein", &a, &b], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0");
    let c = write(dir.path(), "c.txt", "1.5\n-0.0\n3.0\n");
    let out = mkvlab(&["wasserstein", &a, &c, "--p", "1"], dir.path());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");
    let out = mkvlab(&["wasserstein", &a, "nope.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
