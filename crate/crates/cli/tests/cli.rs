use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn corrsep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrsep"))
        .current_dir(dir)
        .env("CORRSEP_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = corrsep(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn cells(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

/// Reference, corrupted test set, its truth mask and clean original.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--rows", "300", "--pi", "0", "--seed", "1", "--out", "ref.csv"]);
    ok(
        p,
        &[
            "simulate", "--rows", "30", "--seed", "2", "--out", "test.csv", "--mask", "truth.csv", "--clean-out", "clean.csv",
        ],
    );
    dir
}

#[test]
fn detect_writes_results() {
    let dir = workspace();
    let p = dir.path();
    ok(
        p,
        &[
            "detect", "--reference", "ref.csv", "--test", "test.csv", "--out", "det.jsonl", "--mask", "loc.csv", "--summary",
            "det.json",
        ],
    );
    let lines: Vec<serde_json::Value> = read(p, "det.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 30);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["row"], i);
        assert!(l["node_labels"][""].is_i64());
    }
    assert_eq!(cells(&read(p, "loc.csv")).len(), 30);
    let summary: serde_json::Value = serde_json::from_str(&read(p, "det.json")).unwrap();
    assert_eq!(summary["config"]["tau"], 0.016);
    assert_eq!(summary["config"]["k"], 8);
    assert!(summary["timestamp"].is_string());
}

#[test]
fn invalid_tau_is_named() {
    let dir = workspace();
    let out = corrsep(dir.path(), &["detect", "--reference", "ref.csv", "--test", "test.csv", "--tau", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
}

#[test]
fn missing_reference_prints_usage() {
    let dir = workspace();
    let out = corrsep(dir.path(), &["detect", "--test", "test.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("reference") && err.contains("Usage: corrsep detect"), "{err}");
}

#[test]
fn unreadable_data_is_a_data_error() {
    let dir = workspace();
    let out = corrsep(dir.path(), &["detect", "--reference", "absent.csv", "--test", "test.csv"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.csv"), "0.1,0.2\n0.3,oops\n").unwrap();
    let out = corrsep(dir.path(), &["detect", "--reference", "bad.csv", "--test", "test.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_and_unknown_keys_fail() {
    let dir = workspace();
    let p = dir.path();
    std::fs::write(
        p.join("run.json"),
        r#"{"reference": "ref.csv", "test": "test.csv", "tau": 1.5, "out": "a.jsonl"}"#,
    )
    .unwrap();
    assert_eq!(corrsep(p, &["detect", "--config", "run.json"]).status.code(), Some(1));
    ok(p, &["detect", "--config", "run.json", "--tau", "0.05"]);
    assert_eq!(read(p, "a.jsonl").lines().count(), 30);

    std::fs::write(p.join("typo.json"), r#"{"reference": "ref.csv", "test": "test.csv", "tua": 0.1}"#).unwrap();
    let out = corrsep(p, &["detect", "--config", "typo.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"tua\""));
}

#[test]
fn clean_test_set_is_returned_unchanged() {
    let dir = workspace();
    let p = dir.path();
    // Rows of the reference itself score at least 1/300 on every node.
    let copy: String = read(p, "ref.csv").lines().take(25).map(|l| format!("{l}\n")).collect();
    std::fs::write(p.join("copies.csv"), &copy).unwrap();
    ok(
        p,
        &["impute", "--reference", "ref.csv", "--test", "copies.csv", "--tau", "0.003", "--out", "imp.csv"],
    );
    assert_eq!(read(p, "imp.csv"), copy);
}

#[test]
fn only_localized_cells_change() {
    let dir = workspace();
    let p = dir.path();
    ok(
        p,
        &[
            "impute", "--reference", "ref.csv", "--test", "test.csv", "--out", "imp.csv", "--mask", "loc.csv", "--sources",
            "src.jsonl",
        ],
    );
    let (before, after, mask) = (cells(&read(p, "test.csv")), cells(&read(p, "imp.csv")), cells(&read(p, "loc.csv")));
    let mut changed = 0;
    for ((b, a), m) in before.iter().zip(&after).zip(&mask) {
        for ((x, y), flag) in b.iter().zip(a).zip(m) {
            if x != y {
                assert_eq!(flag, "1");
                changed += 1;
            }
        }
    }
    assert!(changed > 0);
    let sources = read(p, "src.jsonl");
    assert_eq!(sources.lines().count(), 30);
    assert!(sources.contains("\"sources\":{\""));
}

#[test]
fn nearest_neighbor_equals_map_over_one_candidate() {
    let dir = workspace();
    let p = dir.path();
    let base = ["impute", "--reference", "ref.csv", "--test", "test.csv"];
    let nn = ok(p, &[&base[..], &["--method", "nn"]].concat()).stdout;
    let map = ok(p, &[&base[..], &["--method", "map", "--neighborhood", "1"]].concat()).stdout;
    assert!(!nn.is_empty());
    assert_eq!(nn, map);
}

#[test]
fn full_dependency_false_alarm_equals_tau() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["famodel", "--thetas", "1", "--taus", "0.01,0.05,0.128", "--depths", "1,2,3,5"]);
    let table = cells(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(table[0], ["tau", "theta", "L", "C_tau_analytic", "C_tau_bruteforce"]);
    assert_eq!(table.len(), 13);
    for row in &table[1..] {
        assert_eq!(row[3], row[0]);
        let depth: usize = row[2].parse().unwrap();
        if depth <= 3 {
            let brute: f64 = row[4].parse().unwrap();
            assert!((brute - row[0].parse::<f64>().unwrap()).abs() < 1e-12);
        } else {
            assert!(row[4].is_empty());
        }
    }
}

#[test]
fn gaussian_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gaussian", "--trials", "2", "--per-class", "100"]);
    let table = cells(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(table[0], ["K", "mse", "accuracy"]);
    let ks: Vec<&str> = table[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ks, ["1", "4", "8", "12", "16"]);
}

#[test]
fn synthetic_evaluation_summary_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "evaluate", "--trials", "3", "--seed", "7", "--alpha", "1", "--depth", "2", "--summary", "eval.json", "--out",
            "roc.csv",
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(&read(p, "eval.json")).unwrap();
    assert_eq!(summary["seed"], 7);
    let config = &summary["config"];
    for key in ["seed", "trials", "k", "alpha", "depth", "pi", "fraction_lo", "fraction_hi", "taus", "dims", "rho"] {
        assert!(!config[key].is_null(), "missing {key}");
    }
    assert_eq!(summary["metrics"]["roc"].as_array().unwrap().len(), 6);
    assert_eq!(cells(&read(p, "roc.csv")).len(), 7);
}

#[test]
fn file_evaluation_reports_quality() {
    let dir = workspace();
    let p = dir.path();
    let out = ok(
        p,
        &[
            "evaluate", "--reference", "ref.csv", "--test", "test.csv", "--mask", "truth.csv", "--original", "clean.csv",
            "--no-timestamp",
        ],
    );
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary.get("timestamp").is_none());
    assert!(summary["metrics"]["imputation"]["quality"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_square_masks() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "simulate", "--rows", "10", "--dims", "64", "--pi", "1", "--square-height", "8", "--square-width", "8", "--fraction-lo",
            "0.25", "--fraction-hi", "0.25", "--mask", "m.csv", "--out", "x.csv",
        ],
    );
    for row in cells(&read(p, "m.csv")) {
        assert_eq!(row.iter().filter(|c| *c == "1").count(), 16);
    }
    let path: PathBuf = p.join("x.csv");
    assert_eq!(cells(&std::fs::read_to_string(path).unwrap()).len(), 10);
}
