use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use otafl::data::IdxFile;
use otafl::experiments::report;

fn otafl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otafl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let mut cfg = otafl::ScenarioConfig::regression();
    cfg.network.num_workers = 4;
    cfg.training.num_iterations = 30;
    let path = dir.join("scenario.toml");
    fs::write(&path, cfg.to_toml_string() + extra).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_then_bounds_reproduces_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("run");
    let out = otafl(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in ["metrics.csv", "summary.json", "bounds.csv", "loss.svg"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }

    let again = dir.path().join("again");
    let out = otafl(&[
        "bounds",
        "--run-dir",
        out_dir.to_str().unwrap(),
        "--out-dir",
        again.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read_to_string(out_dir.join("bounds.csv")).unwrap(),
        fs::read_to_string(again.join("bounds.csv")).unwrap()
    );
    let summary = report::read_summary(&out_dir.join("summary.json")).unwrap();
    assert_eq!(summary.iterations, 30);
}

#[test]
fn compare_writes_one_directory_per_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = otafl(&[
        "run",
        "--config",
        &cfg,
        "--compare",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for policy in ["perfect", "inflota", "random"] {
        assert!(dir.path().join(policy).join("metrics.csv").exists());
    }
    assert!(dir.path().join("comparison.svg").exists());
}

#[test]
fn same_seed_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let runs: Vec<String> = ["a", "b"]
        .iter()
        .map(|name| {
            let out_dir = dir.path().join(name);
            let out = otafl(&[
                "run",
                "--config",
                &cfg,
                "--out-dir",
                out_dir.to_str().unwrap(),
            ]);
            assert!(out.status.success());
            fs::read_to_string(out_dir.join("metrics.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn sweep_prints_each_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = otafl(&[
        "sweep",
        "--config",
        &cfg,
        "--axis",
        "workers",
        "--values",
        "2,4",
        "--seeds",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    for policy in ["perfect", "inflota", "random"] {
        assert!(stdout.contains(policy));
    }
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn oracle_check_reports_counts() {
    let out = otafl(&["oracle-check", "--instances", "50", "--max-workers", "8"]);
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "passed 50 failed 0"
    );
    assert_eq!(
        otafl(&["oracle-check", "--max-workers", "21"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn invalid_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = otafl::ScenarioConfig::regression();
    cfg.network.noise_variance_mw = -1.0;
    let path = dir.path().join("bad.toml");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    let out = otafl(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn malformed_mnist_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    let labels = dir.path().join("labels");
    let mut bytes = IdxFile::images(2, 28, 28, vec![0; 2 * 784]).to_bytes();
    bytes.truncate(100);
    fs::write(&images, bytes).unwrap();
    IdxFile::labels(vec![1, 2]).write(&labels).unwrap();
    let out = otafl(&[
        "run",
        "--task",
        "mlp-classifier",
        "--mnist-images",
        images.to_str().unwrap(),
        "--mnist-labels",
        labels.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}
