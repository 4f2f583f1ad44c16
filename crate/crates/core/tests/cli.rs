use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bkks(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bkks"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn train_writes_a_complete_fit() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = bkks(&["train", "--scenario", "B", "--family", "sbkk", "--seed", "7", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let fit = read_json(&dir.path().join("fit.json"));
    let iterations = fit["fit"]["iterations"].as_u64().unwrap();
    assert!((1..=1000).contains(&iterations));
    assert_eq!(fit["fit"]["criterion_trace"].as_array().unwrap().len() as u64, iterations + 1);
    let theta = &fit["fit"]["theta_hat"];
    assert!(theta["lambda"].as_f64().unwrap().is_finite() && theta["lambda"].as_f64().unwrap() > 0.0);
    assert_eq!(theta["gamma"].as_array().unwrap().len(), 80);
    assert_eq!(fit["fit"]["beta_hat"].as_array().unwrap().len(), 80);
    assert_eq!(fit["fit"]["seed"], 7);
    assert_eq!(fit["config"]["family"], "sbkk");
    assert_eq!(fit["config"]["T"], 30);
    assert!(fit["test_r2"].as_f64().is_some());
}

#[test]
fn train_is_byte_reproducible_across_output_dirs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        let out = bkks(&["train", "--scenario", "C", "--family", "abkk", "--seed", "3", "--out", d.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let fa = fs::read(a.path().join("fit.json")).unwrap();
    let fb = fs::read(b.path().join("fit.json")).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn missing_csv_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.csv");
    let out = bkks(&["train", "--csv", missing.to_str().unwrap(), "--target", "y"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("absent.csv"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bkks(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(bkks(&["train"]).status.code(), Some(1));
    let both = bkks(&["train", "--scenario", "A", "--csv", "x.csv", "--target", "y"]);
    assert_eq!(both.status.code(), Some(1));
    assert_eq!(bkks(&["--help"]).status.code(), Some(0));
}

#[test]
fn synthetic_files_feed_csv_training() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = bkks(&["synthetic", "--scenario", "B", "--n-train", "60", "--n-test", "50", "--p", "12", "--seed", "4", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["train.csv", "test.csv", "beta_star.csv", "synthetic.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let beta = fs::read_to_string(dir.path().join("beta_star.csv")).unwrap();
    assert_eq!(beta.lines().count(), 13);

    let train_csv = dir.path().join("train.csv");
    let fit_dir = dir.path().join("fit");
    let out = bkks(&[
        "train",
        "--csv",
        train_csv.to_str().unwrap(),
        "--target",
        "y",
        "--test-fraction",
        "0.25",
        "--out",
        fit_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let fit = read_json(&fit_dir.join("fit.json"));
    assert_eq!(fit["n_train"], 45);
    assert_eq!(fit["n_test"], 15);
    assert_eq!(fit["p"], 12);
}

#[test]
fn benchmark_report_shape() {
    let dir = TempDir::new().unwrap();
    let out = bkks(&[
        "benchmark", "--scenario", "A", "--methods", "bkk,ridgecv", "--M", "20", "--seed", "1", "--p", "20", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["M"], 20);
    assert_eq!(report["methods"], serde_json::json!(["bkk", "ridgecv"]));
    let scores = report["scores"].as_array().unwrap();
    assert_eq!(scores.len(), 2);
    assert!(scores.iter().all(|s| s.as_array().unwrap().len() == 20));
    assert!(report["mw"]["bkk|ridgecv"].as_f64().is_some());
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 40);
}

#[test]
fn benchmark_rejects_a_single_repetition() {
    let dir = TempDir::new().unwrap();
    let out = bkks(&["benchmark", "--scenario", "A", "--M", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("at least 2"));
}

#[test]
fn benchmark_sweeps_t() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    let base = ["benchmark", "--scenario", "B", "--methods", "bkk", "--M", "2", "--p", "10", "--T", "0,1,10,30"];
    assert_eq!(bkks(&[&base[..], &["--out", d]].concat()).status.code(), Some(1));
    let out = bkks(&[&base[..], &["--sweep-T", "--out", d]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for t in [0, 1, 10, 30] {
        let report = read_json(&dir.path().join(format!("report_T{t}.json")));
        assert_eq!(report["T"], t);
        assert!(dir.path().join(format!("report_T{t}.csv")).exists());
    }
}

#[test]
fn gradcheck_tables_and_exit_codes() {
    let out = bkks(&["gradcheck", "--family", "abkk", "--draws", "20"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| l.trim_end().ends_with(" ok")).collect();
    assert_eq!(rows.len(), 20);
    let header = text.lines().next().unwrap();
    for col in ["lambda", "kappa", "gamma", "mu"] {
        assert!(header.contains(col));
    }
    assert!(rows.iter().all(|r| !r.contains(" - ")));

    assert_eq!(bkks(&["gradcheck"]).status.code(), Some(0));
    let bad = bkks(&["gradcheck", "--family", "sbkk", "--draws", "3", "--corrupt", "0.05"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("relative error"));
}

#[test]
fn config_file_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# overrides\nseed = 11\nn_train = 50\np=15\n").unwrap();
    let via_cfg = dir.path().join("a");
    let via_flags = dir.path().join("b");
    let out = bkks(&[
        "train", "--scenario", "B", "--seed", "2", "--config", cfg.to_str().unwrap(), "--out", via_cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = bkks(&[
        "train", "--scenario", "B", "--seed", "11", "--n-train", "50", "--p", "15", "--out", via_flags.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let a = read_json(&via_cfg.join("fit.json"));
    let b = read_json(&via_flags.join("fit.json"));
    assert_eq!(a["fit"], b["fit"]);
    assert_eq!(a["config"]["seed"], 11);

    fs::write(&cfg, "seed\n").unwrap();
    let out = bkks(&["train", "--scenario", "B", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
