//! End-to-end runs of the `qlbe` binary on small configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn small_config() -> Value {
    json!({
        "physics": {
            "gas": { "mass": 1.0 },
            "tracer": { "mass": 1.0 },
            "model": { "kind": "constant_length", "length": 0.25 }
        },
        "grid": { "n": 9, "half_extent": 5.0 },
        "integration": { "t_final": 2.0 },
        "dsmc": { "particles": 10000, "outputs": 4, "paired_grid": false },
        "seed": 7
    })
}

/// Relaxes for the default number of collision times so the final
/// histogram can be compared with Maxwell.
fn dsmc_config() -> Value {
    let mut c = small_config();
    c["integration"] = json!({});
    c
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &Value) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.json"), serde_json::to_string_pretty(config).unwrap()).unwrap();
        Run { dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn exec(&self, args: &[&str]) -> Output {
        let config = self.dir.path().join("config.json");
        let out = self.out();
        let mut full = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
        full.extend_from_slice(args);
        Command::new(env!("CARGO_BIN_EXE_qlbe")).args(&full).output().unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out().join(name)).unwrap()).unwrap()
    }

    fn text(&self, name: &str) -> String {
        fs::read_to_string(self.out().join(name)).unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn describe(o: &Output) -> String {
    format!("status {:?}\nstdout:\n{}\nstderr:\n{}", o.status, stdout(o), String::from_utf8_lossy(&o.stderr))
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn kernel_builds_then_skips_then_refuses_corruption() {
    let mut config = small_config();
    config["kernel"] = json!({ "deltas": [[0, 0, 0], [1, 0, 0], [-1, 0, 0]] });
    let run = Run::new(&config);

    let first = run.exec(&["kernel"]);
    assert_eq!(first.status.code(), Some(0), "{}", describe(&first));
    assert!(stdout(&first).contains("built"));
    let summary = run.json("kernel_summary.json");
    assert_eq!(summary["passed"], json!(true));
    assert_eq!(summary["tables"].as_array().unwrap().len(), 3);
    assert_eq!(summary["scan"]["hermiticity_checked"], json!(true));
    assert!(run.out().join("kernel_0_0_0.qlbt").exists());
    assert!(run.out().join("kernel_m1_0_0.qlbt").exists());
    let effective = run.json("effective_config.json");
    assert_eq!(effective["grid"]["n"], json!(9));

    let second = run.exec(&["kernel"]);
    assert_eq!(second.status.code(), Some(0), "{}", describe(&second));
    let out = stdout(&second);
    assert_eq!(out.matches("skipped").count(), 3, "{out}");
    let checksums = |v: &Value| -> Vec<Value> {
        v["tables"].as_array().unwrap().iter().map(|t| t["checksum"].clone()).collect()
    };
    let rerun = run.json("kernel_summary.json");
    assert_eq!(checksums(&rerun), checksums(&summary));
    assert_eq!(rerun["scan"], summary["scan"]);

    let path = run.out().join("kernel_1_0_0.qlbt");
    let mut data = fs::read(&path).unwrap();
    let mid = data.len() / 2;
    data[mid] ^= 0x40;
    fs::write(&path, data).unwrap();
    let third = run.exec(&["kernel"]);
    assert_eq!(third.status.code(), Some(2), "{}", describe(&third));
    assert!(String::from_utf8_lossy(&third.stderr).contains("error"));
}

#[test]
fn evolve_writes_monitors_state_and_summary() {
    let run = Run::new(&small_config());
    let o = run.exec(&["evolve"]);
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    let s = run.json("evolve_summary.json");
    assert_eq!(s["scenario"], json!("cold"));
    assert_eq!(s["t_final"], json!(2.0));
    assert!(s["trace_drift"].as_f64().unwrap().abs() < 1e-12);
    assert!(s["violation"].is_null());
    let e0 = s["energy_initial"].as_f64().unwrap();
    let e1 = s["energy_endpoint"].as_f64().unwrap();
    assert!(e1 > e0, "cold tracer did not heat: {e0} -> {e1}");
    let monitors = run.text("monitors.csv");
    let steps = s["steps"].as_u64().unwrap() as usize;
    assert_eq!(monitors.lines().count(), steps + 2);
    assert!(run.out().join("state_0_0_0.qlbt").exists());
}

#[test]
fn pure_scenario_tracks_every_sector() {
    let mut config = small_config();
    config["scenario"] = json!({ "kind": "pure", "deltas": [[0, 0, 0], [1, 0, 0], [-1, 0, 0]] });
    let run = Run::new(&config);
    let o = run.exec(&["evolve"]);
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    let monitors = run.text("monitors.csv");
    let l1 = csv_column(&monitors, "l1_1_0_0");
    let first: f64 = l1[0].parse().unwrap();
    let last: f64 = l1.last().unwrap().parse().unwrap();
    assert!(last < first, "coherence did not decay: {first} -> {last}");
    assert!(run.out().join("state_m1_0_0.qlbt").exists());
    let fits = run.json("evolve_summary.json")["decay_fits"].clone();
    assert!(!fits.as_array().unwrap().is_empty());
}

#[test]
fn zero_density_keeps_monitors_constant() {
    let mut config = small_config();
    config["physics"]["gas"]["number_density"] = json!(0.0);
    config["integration"] = json!({ "t_final": 1.0, "dt": 0.1 });
    let run = Run::new(&config);
    let o = run.exec(&["evolve"]);
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    let monitors = run.text("monitors.csv");
    for column in ["trace", "energy", "mean_modulus", "entropy"] {
        let values = csv_column(&monitors, column);
        assert_eq!(values.len(), 11);
        assert!(values.iter().all(|v| *v == values[0]), "{column} changed: {values:?}");
    }

    // Without an explicit final time there is no collision time to scale by.
    let mut config = small_config();
    config["physics"]["gas"]["number_density"] = json!(0.0);
    config["integration"] = json!({});
    let run = Run::new(&config);
    let o = run.exec(&["evolve"]);
    assert_eq!(o.status.code(), Some(2), "{}", describe(&o));
}

#[test]
fn classical_run_conserves_trace() {
    let run = Run::new(&small_config());
    let o = run.exec(&["classical"]);
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    let s = run.json("classical_summary.json");
    assert_eq!(s["passed"], json!(true));
    assert!(s["max_trace_drift"].as_f64().unwrap() < 1e-12);
    assert!(run.text("classical.csv").starts_with("step,time,trace,energy,mean_modulus"));
}

#[test]
fn dsmc_runs_and_refuses_tiny_ensembles() {
    let run = Run::new(&dsmc_config());
    let o = run.exec(&["dsmc"]);
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    let s = run.json("dsmc_summary.json");
    assert_eq!(s["particles"], json!(10000));
    assert_eq!(s["histogram_passed"], json!(true));
    assert!(s["collisions"].as_u64().unwrap() > 0);
    assert_eq!(run.text("dsmc_moments.csv").lines().count(), 6);
    assert!(run.text("dsmc_histogram.csv").lines().last().unwrap().contains("inf"));
    assert!(run.text("dsmc_flux.csv").starts_with("radius,outward,inward,z"));

    let mut config = dsmc_config();
    config["dsmc"]["particles"] = json!(10);
    let tiny = Run::new(&config);
    let o = tiny.exec(&["dsmc"]);
    assert_eq!(o.status.code(), Some(2), "{}", describe(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("statistical minimum"));
}

#[test]
fn reruns_are_bytewise_identical() {
    let a = Run::new(&dsmc_config());
    let b = Run::new(&dsmc_config());
    for args in [["evolve"], ["dsmc"]] {
        let o = a.exec(&args);
        assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    }
    assert_eq!(b.exec(&["evolve"]).status.code(), Some(0));
    assert_eq!(b.exec(&["--workers", "3", "dsmc"]).status.code(), Some(0));
    for name in [
        "monitors.csv",
        "evolve_summary.json",
        "state_0_0_0.qlbt",
        "kernel_0_0_0.qlbt",
        "dsmc_moments.csv",
        "dsmc_histogram.csv",
        "dsmc_flux.csv",
        "dsmc_summary.json",
    ] {
        assert!(bytes(&a.out(), name) == bytes(&b.out(), name), "{name} differs");
    }

    // A different seed changes the particle run.
    let c = Run::new(&dsmc_config());
    assert_eq!(c.exec(&["--seed", "8", "dsmc"]).status.code(), Some(0));
    assert_ne!(bytes(&a.out(), "dsmc_moments.csv"), bytes(&c.out(), "dsmc_moments.csv"));
    assert_eq!(c.json("effective_config.json")["seed"], json!(8));
}

#[test]
fn verify_reports_selected_criteria() {
    let run = Run::new(&small_config());
    let o = run.exec(&["verify", "--criteria", "ac-11"]);
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    let first = bytes(&run.out(), "verify_report.json");
    let report: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(report["failures"], json!(0));
    let criteria = report["criteria"].as_array().unwrap();
    assert_eq!(criteria.len(), 1);
    let c = &criteria[0];
    assert_eq!(c["id"], json!("AC-11"));
    assert_eq!(c["passed"], json!(true));
    for key in ["name", "measured", "tolerance", "detail"] {
        assert!(!c[key].is_null(), "missing {key}");
    }
    assert!(stdout(&o).contains("AC-11  PASS"));

    let again = run.exec(&["verify", "--criteria", "AC11"]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(bytes(&run.out(), "verify_report.json"), first);

    let bad = run.exec(&["verify", "--criteria", "AC-99"]);
    assert_eq!(bad.status.code(), Some(2), "{}", describe(&bad));
}

#[test]
fn strict_profile_flags_trace_drift() {
    let run = Run::new(&small_config());
    let o = run.exec(&["--tolerance-profile", "strict", "classical"]);
    let s = run.json("classical_summary.json");
    assert_eq!(s["trace_limit"], json!(1e-15));
    let drift = s["max_trace_drift"].as_f64().unwrap();
    assert_eq!(s["passed"], json!(drift <= 1e-15));
    assert_eq!(o.status.code(), Some(if drift <= 1e-15 { 0 } else { 1 }), "{}", describe(&o));
    assert_eq!(run.json("effective_config.json")["tolerance_profile"], json!("strict"));
}

#[test]
fn bad_invocations_exit_with_code_two() {
    let mut config = small_config();
    config["grid"]["n"] = json!(8);
    let run = Run::new(&config);
    let o = run.exec(&["evolve"]);
    assert_eq!(o.status.code(), Some(2), "{}", describe(&o));

    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qlbe"))
        .args(["--config", dir.path().join("missing.json").to_str().unwrap(), "kernel"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let run = Run::new(&small_config());
    let o = run.exec(&["--workers", "0", "kernel"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run.exec(&["nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}
