use std::path::{Path, PathBuf};
use std::process::Command;

use geomint_bench::config::{DiscrepancyParams, ExperimentConfig, ManifoldParams, OptimizeParams, SampleParams};
use geomint_bench::{Report, REPORT_FILE};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geomint"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = bin()
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .status()
        .unwrap();
    status.code().unwrap()
}

const SMALL_SAMPLE: &str = r#"{
  "experiment": "small",
  "seed": 3,
  "reps": 2,
  "out": "unused",
  "params": {
    "target": { "kind": "gaussian_mixture", "weights": [0.5, 0.5], "means": [-1.0, 1.0], "sds": [1.0, 1.0] },
    "sampler": { "kind": "hmc", "dt": 0.2, "steps": 10 },
    "chains": 2,
    "draws": 500,
    "burn_in": 50,
    "keep_momenta": true,
    "ksd_curve": { "sizes": [50, 200], "bandwidth": 1.0 },
    "em_bias": { "dts": [0.5], "steps": 2000, "burn_in": 100 }
  },
  "checks": [{ "check": "bounds", "metric": "acceptance", "min": 0.0, "max": 1.0 }]
}"#;

const SMALL_OPTIMIZE: &str = r#"{
  "experiment": "tiny",
  "seed": 1,
  "reps": 2,
  "out": "unused",
  "params": { "runs": [{
    "name": "quad",
    "problem": { "kind": "quadratic", "curvatures": [1.0, 2.0] },
    "method": "leapfrog",
    "schedule": { "kind": "constant", "gamma": 2.0 },
    "step": 0.05,
    "num_steps": 2000,
    "metric": { "kind": "identity" },
    "initial_q": [1.0, 1.0],
    "init_jitter": 0.1,
    "record_every": 20,
    "fit": { "model": "exponential" }
  }]},
  "checks": [{ "check": "bounds", "metric": "quad.r2", "stat": "min", "min": THRESH }]
}"#;

#[test]
fn same_seed_gives_byte_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL_SAMPLE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("sample", &cfg, &a, &[]), 0);
    assert_eq!(run("sample", &cfg, &b, &[]), 0);
    let report = Report::load(&a.join(REPORT_FILE)).unwrap();
    let files: Vec<&String> = report.repetitions.iter().flat_map(|r| &r.files).collect();
    assert!(files.len() >= 8);
    for f in files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    let c = dir.path().join("c");
    assert_eq!(run("sample", &cfg, &c, &["--seed", "4"]), 0);
    assert_ne!(
        std::fs::read(a.join("samples_rep0.csv")).unwrap(),
        std::fs::read(c.join("samples_rep0.csv")).unwrap()
    );
}

#[test]
fn stored_report_reevaluates_to_stored_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "o.json", &SMALL_OPTIMIZE.replace("THRESH", "0.99"));
    let out = dir.path().join("o");
    assert_eq!(run("optimize", &cfg, &out, &["--reps", "3"]), 0);
    let report = Report::load(&out.join(REPORT_FILE)).unwrap();
    assert_eq!(report.repetitions.len(), 3);
    assert_eq!(report.reevaluate(), report.verdicts);
    assert!(report.pass);
}

#[test]
fn exit_codes_follow_verdicts_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let failing = write_config(dir.path(), "f.json", &SMALL_OPTIMIZE.replace("THRESH", "1.5"));
    assert_eq!(run("optimize", &failing, &out, &[]), 2);
    assert!(!Report::load(&out.join(REPORT_FILE)).unwrap().pass);

    let missing = dir.path().join("nope.json");
    assert_eq!(run("optimize", &missing, &out, &[]), 1);

    let extra_key = SMALL_OPTIMIZE.replace("THRESH", "0.5").replace("\"seed\": 1,", "\"seed\": 1, \"colour\": 2,");
    let bad = write_config(dir.path(), "b.json", &extra_key);
    assert_eq!(run("optimize", &bad, &out, &[]), 1);

    let diverging = SMALL_OPTIMIZE.replace("THRESH", "0.5").replace("\"step\": 0.05", "\"step\": 5.0");
    let div = write_config(dir.path(), "d.json", &diverging);
    let div_out = dir.path().join("d");
    assert_eq!(run("optimize", &div, &div_out, &[]), 1);
    let partial = Report::load(&div_out.join(REPORT_FILE)).unwrap();
    assert!(!partial.errors.is_empty());
    assert!(div_out.join("quad_rep0.csv").exists());
}

#[test]
fn discrepancy_reads_sample_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL_SAMPLE);
    assert_eq!(run("sample", &cfg, &dir.path().join("s"), &[]), 0);
    let body = r#"{
      "experiment": "d", "seed": 2, "reps": 1, "out": "unused",
      "params": {
        "samples": "s/samples_rep0.csv",
        "estimators": [
          { "kind": "mmd_halves", "kernel": { "kind": "median" } },
          { "kind": "sm", "theta": [0.0] }
        ],
        "fit": { "init": [2.0], "step": 0.5, "iterations": 5, "mc_samples": 100 }
      },
      "checks": [{ "check": "bounds", "metric": "fit.final_error", "stat": "max", "max": 1e-6 }]
    }"#;
    let dcfg = write_config(dir.path(), "d.json", body);
    let out = dir.path().join("d");
    assert_eq!(run("discrepancy", &dcfg, &out, &[]), 0);
    let records: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("estimates.json")).unwrap()).unwrap();
    assert_eq!(records.as_array().unwrap().len(), 2);
    assert_eq!(records[0]["n"], 1000);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    ExperimentConfig::<OptimizeParams>::load(&root.join("optimize.json")).unwrap();
    ExperimentConfig::<ManifoldParams>::load(&root.join("manifold.json")).unwrap();
    ExperimentConfig::<SampleParams>::load(&root.join("sample.json")).unwrap();
    ExperimentConfig::<DiscrepancyParams>::load(&root.join("discrepancy.json")).unwrap();
}
