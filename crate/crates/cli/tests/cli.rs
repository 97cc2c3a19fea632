use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_singular-eft")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("singular-eft-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn run(experiment: &str, sets: &[&str], out: &Path) -> Output {
    let mut cmd = Command::new(binary());
    cmd.arg(experiment).arg("--out").arg(out);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.output().expect("binary runs")
}

/// Parses a CSV into its header and rows of fields.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn identical_configs_give_identical_bytes() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    let sets = ["cutoffs = 100, 1000", "lambdas = 0.001, 0.003"];
    assert!(run("born-check", &sets, &a).status.success());
    assert!(run("born-check", &sets, &b).status.success());
    for file in ["born-check.csv", "born-check.meta"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap()
        );
    }
    let (header, rows) = read_csv(&a.join("born-check.csv"));
    assert_eq!(header[0], "config_hash");
    assert_eq!(rows.len(), 4);
    assert!(rows
        .iter()
        .all(|r| r.len() == header.len() && r[0] == rows[0][0]));
    let meta = fs::read_to_string(a.join("born-check.meta")).unwrap();
    assert!(meta.contains(&format!("# config_hash = {}", rows[0][0])));
    assert!(meta.contains("cutoffs = 100, 1000"));
    fs::remove_dir_all(&a).unwrap();
    fs::remove_dir_all(&b).unwrap();
}

#[test]
fn sidecar_reproduces_the_run() {
    let (a, b) = (scratch("meta-a"), scratch("meta-b"));
    assert!(run("born-check", &["lambdas = 0.002", "l = 1"], &a)
        .status
        .success());
    let status = Command::new(binary())
        .args(["born-check", "--config"])
        .arg(a.join("born-check.meta"))
        .arg("--out")
        .arg(&b)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(a.join("born-check.csv")).unwrap(),
        fs::read(b.join("born-check.csv")).unwrap()
    );
    fs::remove_dir_all(&a).unwrap();
    fs::remove_dir_all(&b).unwrap();
}

#[test]
fn invalid_configs_fail_without_outputs() {
    let dir = scratch("invalid");
    for sets in [
        vec!["momenta = "],
        vec!["momenta = 0.6"],
        vec!["cutoffs = "],
        vec!["data = 0.1:-1.05"],
        vec!["no_such_key = 1"],
        vec!["lambda = abc"],
    ] {
        let out = run("nlo-energy-scan", &sets, &dir);
        assert_eq!(out.status.code(), Some(2), "{sets:?}");
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
        assert!(!dir.join("nlo-energy-scan.csv").exists());
    }
    let out = run("not-an-experiment", &[], &dir);
    assert!(!out.status.success());
}

#[test]
fn numerical_failure_removes_stale_outputs() {
    let dir = scratch("failure");
    assert!(run("oscillation-fit", &[], &dir).status.success());
    assert!(dir.join("oscillation-fit.csv").exists());
    // A window this narrow holds fewer than three zero crossings.
    let out = run("oscillation-fit", &["x_min = 100", "x_max = 200"], &dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.join("oscillation-fit.csv").exists());
    assert!(!dir.join("oscillation-fit.meta").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn energy_scan_collapses_across_cutoffs() {
    let dir = scratch("energy");
    let out = run("nlo-energy-scan", &[], &dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&dir.join("nlo-energy-scan.csv"));
    let (ip, ilo, itot) = (
        column(&header, "p"),
        column(&header, "k_lo"),
        column(&header, "k_lo_plus_nlo"),
    );
    let mut momenta: Vec<String> = rows.iter().map(|r| r[ip].clone()).collect();
    momenta.dedup();
    momenta.sort();
    momenta.dedup();
    assert_eq!(momenta.len(), 19);
    for p in &momenta {
        for idx in [ilo, itot] {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| &r[ip] == p)
                .map(|r| r[idx].parse().unwrap())
                .collect();
            assert_eq!(v.len(), 4);
            let mean = v.iter().sum::<f64>() / 4.0;
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            assert!((max - min) / mean.abs() < 0.02, "p = {p}: {v:?}");
        }
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unrenormalized_curves_depend_on_the_cutoff() {
    let dir = scratch("fig2");
    let out = run(
        "lo-cutoff-scan",
        &["cutoffs = 5, 50, 500", "x_count = 60"],
        &dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&dir.join("lo-cutoff-scan.csv"));
    let (ic, ik) = (column(&header, "cutoff"), column(&header, "k"));
    let curve = |c: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r[ic] == c)
            .map(|r| r[ik].parse().unwrap())
            .collect()
    };
    let (a, b, c) = (curve("5"), curve("50"), curve("500"));
    assert_eq!(a.len(), 60);
    let scale = a.iter().chain(&b).map(|v| v.abs()).fold(0.0, f64::max);
    for other in [&b, &c] {
        let diff = a
            .iter()
            .zip(other)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff > 0.1 * scale);
    }
    fs::remove_dir_all(&dir).unwrap();
}
