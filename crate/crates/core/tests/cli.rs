//! End-to-end runs of the `rare-al` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rare_al::cli::commands::read_trace;
use rare_al::cli::config::RunConfig;
use rare_al::problems::Problem;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rare-al"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// A small multimodal configuration writing into `dir/out`.
fn small_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"{{
  "problem": {{ "name": "multimodal" }},
  "experiment": {{
    "n_init_high": 5, "budget": 8, "seed": 7,
    "candidate_size": 256, "estimate_size": 1024,
    "fit_restarts": 3, "refit_restarts": 1,
    "acquisition": {{ "restarts": 4, "n_seed": 2, "screen": 32 }}
  }},
  "replications": 3,
  "truth": {{ "method": "mc", "resolution": 200000 }},
  "output_dir": "out"{extra}
}}"#
    );
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn traces(out: &Path) -> Vec<Vec<u8>> {
    (0..3).map(|i| fs::read(out.join(format!("traces/replication_{i:03}.jsonl"))).unwrap()).collect()
}

#[test]
fn run_writes_reproducible_auditable_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_a = small_config(a.path(), "c.json", "");
    let cfg_b = small_config(b.path(), "c.json", "");
    let o = run(&["run", cfg_a.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("multimodal"));
    assert_eq!(code(&run(&["run", cfg_b.to_str().unwrap(), "--jobs", "1"])), 0);

    let out = a.path().join("out");
    for f in ["effective_config.json", "truth.json", "summary.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    // independent of thread count and location
    assert_eq!(traces(&out), traces(&b.path().join("out")));

    // every recorded output re-evaluates bit for bit
    let problem = Problem::multimodal();
    for i in 0..3 {
        let records = read_trace(&out.join(format!("traces/replication_{i:03}.jsonl"))).unwrap();
        assert_eq!(records.len(), 8);
        for r in &records {
            assert_eq!(problem.evaluate(&r.x, r.fidelity).unwrap().to_bits(), r.y.to_bits());
        }
    }

    let mut csv = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    assert_eq!(csv.headers().unwrap(), vec!["cost", "p15", "median", "p85"]);
    let mut rows = 0;
    for row in csv.records() {
        let v: Vec<f64> = row.unwrap().iter().map(|s| s.parse().unwrap()).collect();
        assert!(v[1] <= v[2] && v[2] <= v[3], "{v:?}");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn effective_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "c.json", "");
    assert_eq!(code(&run(&["run", cfg.to_str().unwrap()])), 0);
    let out = dir.path().join("out");
    let first = traces(&out);

    let effective = out.join("effective_config.json");
    let loaded = RunConfig::load(&effective).unwrap();
    assert_eq!(loaded.config, RunConfig::load(&cfg).unwrap().config);
    assert_eq!(code(&run(&["run", effective.to_str().unwrap()])), 0);
    assert_eq!(traces(&out), first);
}

#[test]
fn stored_truth_is_reused_for_the_same_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "c.json", "");
    let o = run(&["truth", cfg.to_str().unwrap(), "--resolution", "1000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let truth_path = dir.path().join("out/truth.json");
    let mut stored: serde_json::Value = serde_json::from_str(&fs::read_to_string(&truth_path).unwrap()).unwrap();
    assert_eq!(stored["truth"]["resolution"], 1000);
    stored["truth"]["value"] = serde_json::json!(0.125);
    fs::write(&truth_path, stored.to_string()).unwrap();

    assert_eq!(code(&run(&["run", cfg.to_str().unwrap(), "--jobs", "1"])), 0);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["truth"]["value"], 0.125);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "c.json", "");
    assert_eq!(code(&run(&["run", cfg.to_str().unwrap(), "--seed", "7"])), 0);
    let same = traces(&dir.path().join("out"));
    assert_eq!(code(&run(&["run", cfg.to_str().unwrap(), "--seed", "8"])), 0);
    assert_ne!(traces(&dir.path().join("out")), same);
    let eff = RunConfig::load(&dir.path().join("out/effective_config.json")).unwrap();
    assert_eq!(eff.config.experiment.seed, 8);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = small_config(dir.path(), "bad.json", r#", "replicatons": 2"#);
    let o = run(&["run", bad_key.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("replicatons") && err.contains("line"), "{err}");
    // nothing is computed before validation
    assert!(!dir.path().join("out").exists());

    assert_eq!(code(&run(&["run", dir.path().join("missing.json").to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["run"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["bench", "--replications", "0"])), 2);
    let good = small_config(dir.path(), "good.json", "");
    assert_eq!(code(&run(&["run", good.to_str().unwrap(), "--jobs", "0"])), 2);
    assert_eq!(code(&run(&["truth", good.to_str().unwrap(), "--method", "grid", "--resolution", "100000"])), 2);
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // output_dir names an existing file
    fs::write(dir.path().join("out"), "").unwrap();
    let cfg = small_config(dir.path(), "c.json", "");
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}
