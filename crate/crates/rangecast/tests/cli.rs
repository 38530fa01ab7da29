use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use flate2::write::GzEncoder;
use flate2::Compression;

fn rangecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rangecast")).args(args).env_remove("RANGECAST_OUT").output().expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has a line");
    serde_json::from_str(line).expect("stderr is one JSON line")
}

fn run_ok(args: &[&str]) {
    let out = rangecast(args);
    assert!(out.status.success(), "{:?} failed: {}", args, String::from_utf8_lossy(&out.stderr));
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "seed": 3,
  "synth": { "generator": "seasonal_ar", "pair": "SYNUSD", "phi": 0.5, "psi": 0.3, "noise": 1e-4, "days": 20 },
  "models": [
    { "family": "ar", "hyper": { "ar_orders": [1, 2] } },
    { "family": "plain_dnn", "hyper": { "dnn_layers": 2, "dnn_width": 4 },
      "train": { "max_epochs": 2, "patience": 1, "batch_size": 64, "max_train_samples": 500, "max_validation_samples": 300 } }
  ],
  "splits": { "folds": 1 }
}"#;

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(rangecast(&["--help"]).status.code(), Some(0));
    assert_eq!(rangecast(&["--version"]).status.code(), Some(0));
}

#[test]
fn bad_arguments_are_usage_errors() {
    for args in [&["frobnicate"][..], &["train", "--jobs", "x"], &["synth", "--spec", "nope"]] {
        let out = rangecast(args);
        assert_eq!(out.status.code(), Some(1), "{:?}", args);
        assert_eq!(stderr_json(&out)["error"], "usage");
    }
}

#[test]
fn missing_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = rangecast(&["ingest", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("absent.json"));
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        run_ok(&["synth", "--spec", "seasonal_ar", "--seed", "7", "--out", d.path().to_str().unwrap()]);
    }
    let name = "synth/SYNUSD.csv";
    let x = fs::read(a.path().join(name)).unwrap();
    assert!(!x.is_empty());
    assert_eq!(x, fs::read(b.path().join(name)).unwrap());
    assert_eq!(fs::read(a.path().join("synth/truth.json")).unwrap(), fs::read(b.path().join("synth/truth.json")).unwrap());
}

#[test]
fn different_seeds_give_different_data() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_ok(&["synth", "--spec", "seasonal_ar", "--seed", "7", "--out", a.path().to_str().unwrap()]);
    run_ok(&["synth", "--spec", "seasonal_ar", "--seed", "8", "--out", b.path().to_str().unwrap()]);
    assert_ne!(fs::read(a.path().join("synth/SYNUSD.csv")).unwrap(), fs::read(b.path().join("synth/SYNUSD.csv")).unwrap());
}

#[test]
fn evaluate_without_train_names_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let o = out_dir.to_str().unwrap();
    run_ok(&["synth", "--config", &cfg, "--out", o]);
    run_ok(&["ingest", "--config", &cfg, "--out", o]);
    let out = rangecast(&["evaluate", "--config", &cfg, "--out", o]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "usage");
    assert!(err["message"].as_str().unwrap().contains("train/"), "{}", err);
}

#[test]
fn small_pipeline_and_tamper_detection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let o = out_dir.to_str().unwrap();
    for c in ["synth", "ingest", "profile", "acf", "train", "evaluate", "dmtest", "report"] {
        run_ok(&[c, "--config", &cfg, "--out", o]);
    }
    let table = fs::read_to_string(out_dir.join("report/mse_comp.csv")).unwrap();
    assert!(table.contains("AR") && table.contains("PlainDNN"), "{}", table);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "report");

    let panel_file = out_dir.join("ingest/SYNUSD.ranges.json");
    let mut bytes = fs::read(&panel_file).unwrap();
    bytes.push(b'\n');
    fs::write(&panel_file, bytes).unwrap();
    let out = rangecast(&["report", "--config", &cfg, "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "data");
}

fn full_day_histdata() -> String {
    let mut s = String::new();
    let mut price: f64 = 1.2000;
    for m in 0..1440 {
        let open = price;
        price += if m % 2 == 0 { 0.0001 } else { -0.00005 };
        s.push_str(&format!("20190107 {:02}{:02}00;{:.5};{:.5};{:.5};{:.5};0\n", m / 60, m % 60, open, open.max(price) + 0.0001, open.min(price) - 0.0001, price));
    }
    s
}

#[test]
fn ingests_gzipped_histdata() {
    let dir = tempfile::tempdir().unwrap();
    let mut gz = GzEncoder::new(Vec::new(), Compression::default());
    gz.write_all(full_day_histdata().as_bytes()).unwrap();
    fs::write(dir.path().join("eur.csv.gz"), gz.finish().unwrap()).unwrap();
    let cfg = write_config(dir.path(), r#"{ "pairs": [{ "id": "EURUSD", "files": ["eur.csv.gz"] }], "format": "histdata_ascii" }"#);
    let o = dir.path().join("out");
    run_ok(&["ingest", "--config", &cfg, "--out", o.to_str().unwrap()]);
    let panel: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("ingest/EURUSD.ranges.json")).unwrap()).unwrap();
    assert_eq!(panel["days"].as_array().unwrap().len(), 1);
}

#[test]
fn unreadable_bars_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "date,time,open,high,low,close\n01/07/2019,00:00,1.2,1.1,1.3,1.2\n").unwrap();
    let cfg = write_config(dir.path(), r#"{ "pairs": [{ "id": "BAD", "files": ["bad.csv"] }] }"#);
    let out = rangecast(&["ingest", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "data");
}

#[test]
fn flat_returns_are_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("date,time,open,high,low,close\n");
    for day in 7..19 {
        if day == 12 || day == 13 {
            continue;
        }
        for m in 0..1440 {
            let wiggle = 0.0001 * (1.0 + (m % 7) as f64);
            csv.push_str(&format!("01/{:02}/2019,{:02}:{:02},1.2,{},{},1.2\n", day, m / 60, m % 60, 1.2 + wiggle, 1.2 - wiggle));
        }
    }
    fs::write(dir.path().join("flat.csv"), csv).unwrap();
    let cfg = write_config(dir.path(), r#"{ "pairs": [{ "id": "FLAT", "files": ["flat.csv"] }], "models": [{ "family": "garch" }], "splits": { "folds": 1 } }"#);
    let o = dir.path().join("out");
    run_ok(&["ingest", "--config", &cfg, "--out", o.to_str().unwrap()]);
    let out = rangecast(&["train", "--config", &cfg, "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"], "numerical");
}

#[test]
fn in_process_entry_point_matches_binary() {
    assert_eq!(rangecast::cli::run(["rangecast", "--help"]), 0);
    assert_eq!(rangecast::cli::run(["rangecast", "nope"]), 1);
}
