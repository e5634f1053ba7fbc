//! End-to-end checks of the command-line interface: the
//! simulate -> fit -> decode round trip, determinism of manifests, and
//! the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn ctssm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctssm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest_files(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str::<serde_json::Value>(&text).unwrap()["files"].clone()
}

#[test]
fn simulate_fit_decode_roundtrip() {
    let dir = tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    let dec = dir.path().join("dec");
    let sim_s = sim.to_str().unwrap();

    let out = ctssm(&[
        "simulate", "--setting", "2", "--T", "250", "--seed", "11", "--out", sim_s,
    ]);
    assert_code(&out, 0);
    let dataset = sim.join("dataset.csv");
    let lines = std::fs::read_to_string(&dataset).unwrap();
    assert_eq!(lines.lines().count(), 251); // header + T rows
    let mut prev = -1.0;
    for line in lines.lines().skip(1) {
        let t: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(t > prev, "times not strictly increasing");
        prev = t;
    }

    let out = ctssm(&[
        "fit",
        "--data",
        dataset.to_str().unwrap(),
        "--family",
        "poisson-scale",
        "--m",
        "40",
        "--range",
        "-2.5",
        "2.5",
        "--seed",
        "1",
        "--out",
        fit.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit.join("fit.json")).unwrap()).unwrap();
    for key in ["model", "estimates", "se", "ci95", "loglik", "aic", "convergence", "grid", "seed"] {
        assert!(report.get(key).is_some(), "fit report missing {key}");
    }
    assert_eq!(report["model"], "poisson-scale");
    assert_eq!(report["grid"]["m"], 40);

    let out = ctssm(&[
        "decode",
        "--data",
        dataset.to_str().unwrap(),
        "--fit",
        fit.join("fit.json").to_str().unwrap(),
        "--true-states",
        sim.join("true_states.csv").to_str().unwrap(),
        "--out",
        dec.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let decoded = std::fs::read_to_string(dec.join("decoded.csv")).unwrap();
    assert_eq!(decoded.lines().count(), 251);
    assert!(decoded.starts_with("id,time,state_index,state_value,expected_count,equilibrium_count"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dec.join("manifest.json")).unwrap())
            .unwrap();
    let corr: f64 = manifest["notes"]["decoded_true_correlation"]
        .as_str()
        .unwrap()
        .parse()
        .unwrap();
    assert!(corr > 0.8, "decoded-true correlation {corr}");
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = ctssm(&[
            "simulate", "--setting", "1", "--T", "100", "--seed", "5",
            "--out", out_dir.to_str().unwrap(),
        ]);
        assert_code(&out, 0);
    }
    assert_eq!(manifest_files(&a), manifest_files(&b));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempdir().unwrap();
    let out = ctssm(&[
        "simulate", "--setting", "4", "--seed", "1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("1, 2 or 3"));

    let out = ctssm(&["simulate", "--setting", "2", "--out", dir.path().to_str().unwrap()]);
    assert_code(&out, 2); // seed required for stochastic commands
}

#[test]
fn ingestion_errors_exit_3() {
    let dir = tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,time,y\n0,0.0,5\n0,1.0,oops\n").unwrap();
    let out = ctssm(&[
        "fit", "--data", bad.to_str().unwrap(), "--family", "poisson-scale",
        "--m", "10", "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_code(&out, 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("y"), "stderr: {err}");

    let out = ctssm(&[
        "fit", "--data", "/does/not/exist.csv", "--family", "poisson-scale",
        "--out", dir.path().join("o2").to_str().unwrap(),
    ]);
    assert_code(&out, 3);
}

#[test]
fn decode_rejects_benchmark_fits() {
    let dir = tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = ctssm(&[
        "simulate", "--panel", "--n-individuals", "25", "--seed", "3",
        "--out", sim.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let fitdir = dir.path().join("fit");
    let out = ctssm(&[
        "fit", "--data", sim.join("dataset.csv").to_str().unwrap(),
        "--family", "benchmark", "--no-ci", "--seed", "1",
        "--out", fitdir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let out = ctssm(&[
        "decode", "--data", sim.join("dataset.csv").to_str().unwrap(),
        "--fit", fitdir.join("fit.json").to_str().unwrap(),
        "--out", dir.path().join("dec").to_str().unwrap(),
    ]);
    assert_code(&out, 2);

    // but its spline curves are still exportable
    let out = ctssm(&[
        "curve", "--fit", fitdir.join("fit.json").to_str().unwrap(),
        "--out", dir.path().join("curve").to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let curve = std::fs::read_to_string(dir.path().join("curve/curve.csv")).unwrap();
    assert!(curve.starts_with("age,f1,f2,exp_f1,exp_f1_female"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "setting=2\nT=80\nseed=9\n").unwrap();
    let a = dir.path().join("a");
    let out = ctssm(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let b = dir.path().join("b");
    let out = ctssm(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--seed", "10",
        "--out", b.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert_ne!(manifest_files(&a), manifest_files(&b));
}

#[test]
fn sweep_writes_fixed_columns() {
    let dir = tempdir().unwrap();
    let out = ctssm(&[
        "sweep", "--setting", "2", "--T", "120", "--m-values", "10,15",
        "--seed", "2", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(table.starts_with("m,theta,sigma,alpha,seconds,neg_llk"));
    assert_eq!(table.lines().count(), 3);
}
