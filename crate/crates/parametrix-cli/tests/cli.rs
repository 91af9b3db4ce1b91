use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_parametrix"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

const CAUCHY: &str = "model.alpha = 1\nmodel.gamma = 1\ndrift.kind = constant\nrun.t_list = 0.5, 1\n";

#[test]
fn balance_violation_exits_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["density"], "model.alpha = 0.6\nmodel.gamma = 0.3\n", dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("balance") && err.contains("0.6 + 0.3 = 0.9 <= 1"), "{err}");
}

#[test]
fn zero_drift_ck_test_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["ck-test"], "model.alpha = 1\nmodel.gamma = 1\ndrift.kind = constant\nck.tol = 1e-3\n", dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/ck.csv")).unwrap();
    assert!(text.trim_end().ends_with("true"));
}

#[test]
fn density_output_is_exact_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["density"], CAUCHY, dir.path()).status.success());
    let path = dir.path().join("out/t=0.5/density.csv");
    let first = fs::read(&path).unwrap();
    let text = String::from_utf8_lossy(&first);
    assert!(text.starts_with("# parametrix "));
    assert!(text.contains("# model.alpha=1\n"));
    assert!(text.contains("\ny,p,p0,residue,p_tilde,r_tilde\n"));
    for row in data_rows(&path) {
        if row[0].abs() <= 10.0 {
            let exact = 0.5 / (std::f64::consts::PI * (0.25 + row[0] * row[0]));
            assert!((row[1] / exact - 1.0).abs() < 1e-8);
            assert!(row[5].abs() < 1e-8 * exact);
        }
    }
    assert!(dir.path().join("out/diagnostics.csv").exists());
    assert!(run(&["density"], CAUCHY, dir.path()).status.success());
    assert_eq!(first, fs::read(&path).unwrap());
}

#[test]
fn derivative_of_cauchy_density() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["derivative"], CAUCHY, dir.path()).status.success());
    for row in data_rows(&dir.path().join("out/t=1/dtdensity.csv")) {
        let y = row[0];
        if y.abs() <= 10.0 {
            let exact = (y * y - 1.0) / (std::f64::consts::PI * (1.0 + y * y).powi(2));
            assert!((row[1] - exact).abs() < 1e-8 / (1.0 + y * y));
        }
    }
}

#[test]
fn validate_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["validate"], CAUCHY, dir.path());
    let text = fs::read_to_string(dir.path().join("out/validate.csv")).unwrap();
    assert!(out.status.success(), "{text}");
    for name in ["delta_positive", "mass[t=0.5]", "ratio_min[t=1]", "inverse_flow", "subconvolution_max[lambda=0]"] {
        assert!(text.contains(&format!("\n{name},")), "{name}");
    }
}

#[test]
fn simulate_writes_samples_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{CAUCHY}mc.n_paths = 20000\nmc.n_steps = 4\nmc.t = 0.5\nmc.bins = 20\n");
    assert!(run(&["simulate", "--seed", "5"], &cfg, dir.path()).status.success());
    assert_eq!(data_rows(&dir.path().join("out/samples.csv")).len(), 20000);
    let emp = data_rows(&dir.path().join("out/empirical.csv"));
    assert_eq!(emp.len(), 20);
    let report = data_rows(&dir.path().join("out/mc_report.csv"));
    assert_eq!(report[0].len(), 9);
    assert!(report[0][3] < 0.05, "L1 {}", report[0][3]);
    let again = tempfile::tempdir().unwrap();
    assert!(run(&["simulate", "--seed", "5"], &cfg, again.path()).status.success());
    assert_eq!(
        fs::read(dir.path().join("out/samples.csv")).unwrap(),
        fs::read(again.path().join("out/samples.csv")).unwrap()
    );
}

#[test]
fn kernel_table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["kernel-table"], "model.alpha = 1.5\nmodel.gamma = 0.2\ntable.points = 256\ntable.r_max = 50\n", dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = fs::File::open(dir.path().join("out/kernel_table.csv")).unwrap();
    let table = stable_parametrix::stable_kernel::RadialTable::read_csv(std::io::BufReader::new(file)).unwrap();
    assert_eq!(table.params().alpha, 1.5);
}
