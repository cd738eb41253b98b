use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairaudit"))
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("FAIRAUDIT_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn minimal_config(out: &str) -> Value {
    json!({
        "generator": {"preset": "mortality", "n": 2000},
        "contrast": {"column": "sex", "treated": "2", "control": "1"},
        "learners": [{"family": "logistic"}],
        "costs": {"c_neg": 1, "c_pos": 25},
        "probes": ["W"],
        "bootstrap_replicates": 20,
        "seed": 11,
        "output_dir": out
    })
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .expect("structured error on stderr");
    serde_json::from_str(line).expect("error record is JSON")
}

#[test]
fn validate_accepts_minimal_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "audit.json", &minimal_config("out"));
    let out = run(&["validate", "--config", cfg.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn contrast_on_non_sensitive_column_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = minimal_config("out");
    c["contrast"] = json!({"column": "emergency", "treated": "1", "control": "0"});
    let cfg = write_config(dir.path(), "audit.json", &c);
    let out = run(&["validate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    let err = error_record(&out);
    assert!(err["error"]["module"].is_string());
    assert!(err["error"]["cause"].is_string());
}

#[test]
fn missing_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = minimal_config("out");
    c.as_object_mut().unwrap().remove("seed");
    let cfg = write_config(dir.path(), "audit.json", &c);
    let out = run(&["validate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_file_is_rejected_at_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = minimal_config("out");
    c.as_object_mut().unwrap().remove("generator");
    c["dataset"] = json!({"csv": "nope.csv", "schema": "nope.schema.json"});
    let cfg = write_config(dir.path(), "audit.json", &c);
    let out = run(&["validate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn minimal_audit_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "audit.json", &minimal_config("out"));
    let started = std::time::Instant::now();
    let out = run(&["audit", "--config", cfg.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(started.elapsed().as_secs() < 60);
    let o = dir.path().join("out");
    for f in ["report.json", "report.md", "plots/logistic.csv"] {
        assert!(o.join(f).exists(), "{f} missing");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(o.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["learners"][0]["probes"].as_array().unwrap().len(), 1);
    assert!(report["version"].as_str().is_some_and(|v| !v.is_empty()));
}

#[test]
fn generated_cohort_feeds_an_audit_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let gen = run(
        &[
            "generate", "--preset", "aki", "--n", "3000", "--seed", "5", "--out", d, "--stem", "aki",
        ],
        None,
    );
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    assert!(dir.path().join("aki.csv").exists());
    assert!(dir.path().join("aki.schema.json").exists());

    let mut c = minimal_config("from-files");
    c.as_object_mut().unwrap().remove("generator");
    c["dataset"] = json!({"csv": "aki.csv", "schema": "aki.schema.json"});
    let cfg = write_config(dir.path(), "audit.json", &c);
    let out = run(
        &["audit", "--config", cfg.to_str().unwrap(), "--probes", "W,SWAP"],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("from-files/report.json")).unwrap()).unwrap();
    assert_eq!(report["data"]["provenance"], "ingested");
    assert_eq!(report["learners"][0]["probes"].as_array().unwrap().len(), 2);
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for stem in ["a", "b"] {
        let out = run(
            &[
                "generate",
                "--preset",
                "mortality",
                "--n",
                "1500",
                "--seed",
                "9",
                "--out",
                d,
                "--stem",
                stem,
            ],
            None,
        );
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unreachable_outcome_rate_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let gen = json!({
        "n": 500,
        "seed": 1,
        "sensitive": [{"name": "z", "groups": [{"code": "1", "fraction": 0.5}, {"code": "0", "fraction": 0.5}]}],
        "features": [{"type": "continuous", "name": "x", "mean": 0.0, "sd": 1.0, "range": [-4.0, 4.0]}],
        "outcome": {"name": "y", "target_rate": 1e-12, "coefficients": {"x": 1.0}}
    });
    let cfg = write_config(dir.path(), "gen.json", &gen);
    let out = run(
        &[
            "generate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_record(&out)["error"]["module"], "synthgen");
}

#[test]
fn psm_without_any_match_aborts_with_data_error() {
    // A feature that copies Z puts treated and control scores at opposite
    // ends, so no pair lands within the caliper.
    let dir = tempfile::tempdir().unwrap();
    let gen = json!({
        "n": 1500,
        "seed": 3,
        "sensitive": [{"name": "z", "groups": [{"code": "1", "fraction": 0.5}, {"code": "0", "fraction": 0.5}]}],
        "features": [
            {"type": "continuous", "name": "x", "mean": 0.0, "sd": 1.0, "range": [-4.0, 4.0]},
            {"type": "continuous", "name": "zcopy", "mean": 0.0, "sd": 0.01, "range": [-10.0, 10.0],
             "group_shifts": {"z=1": 5.0}}
        ],
        "outcome": {"name": "y", "target_rate": 0.3, "coefficients": {"x": 1.0}}
    });
    let gen_cfg = write_config(dir.path(), "gen.json", &gen);
    let d = dir.path().to_str().unwrap();
    let g = run(
        &[
            "generate",
            "--config",
            gen_cfg.to_str().unwrap(),
            "--out",
            d,
            "--stem",
            "sep",
        ],
        None,
    );
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));

    let c = json!({
        "dataset": {"csv": "sep.csv", "schema": "sep.schema.json"},
        "contrast": {"column": "z", "treated": "1", "control": "0"},
        "learners": [{"family": "logistic"}],
        "costs": {"c_neg": 1, "c_pos": 2},
        "probes": ["PSM"],
        "bootstrap_replicates": 10,
        "seed": 1,
        "output_dir": "out"
    });
    let cfg = write_config(dir.path(), "audit.json", &c);
    let out = run(&["audit", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_record(&out)["error"]["module"], "probes");
}

#[test]
fn flags_override_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "audit.json", &minimal_config("out"));
    let out = run(
        &[
            "audit",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "99",
            "--bootstrap-replicates",
            "12",
            "--metrics",
            "FNR,FPR",
            "--output-dir",
            dir.path().join("elsewhere").to_str().unwrap(),
        ],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("elsewhere/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 99);
    assert_eq!(report["config"]["bootstrap_replicates"], 12);
    let metrics: Vec<&str> = report["learners"][0]["probes"][0]["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["metric"].as_str().unwrap())
        .collect();
    assert!(metrics.iter().all(|m| *m == "FNR" || *m == "FPR"));
}

#[test]
fn unknown_metric_flag_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "audit.json", &minimal_config("out"));
    let out = run(
        &["validate", "--config", cfg.to_str().unwrap(), "--metrics", "FNR,AUC"],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = minimal_config("t1");
    c["probes"] = json!(["W", "SS", "SEP"]);
    let cfg1 = write_config(dir.path(), "a.json", &c);
    c["output_dir"] = json!("t3");
    let cfg3 = write_config(dir.path(), "b.json", &c);
    assert!(run(&["audit", "--config", cfg1.to_str().unwrap()], Some("1"))
        .status
        .success());
    assert!(run(&["audit", "--config", cfg3.to_str().unwrap()], Some("3"))
        .status
        .success());
    let strip = |p: &str| {
        let text = std::fs::read_to_string(dir.path().join(p).join("report.json")).unwrap();
        let mut v = fairaudit::report::without_timing(&text).unwrap();
        v["config"]["output_dir"] = Value::Null;
        v
    };
    assert_eq!(strip("t1"), strip("t3"));
}

#[test]
fn card_writes_guide_and_tree() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = minimal_config("card");
    c["generator"]["n"] = json!(3000);
    c["utility"] = json!({"weights": {"w1": 25, "w2": 1}, "basic_columns": ["surgery_type", "age", "race", "sex"]});
    let cfg = write_config(dir.path(), "audit.json", &c);
    let out = run(&["card", "--config", cfg.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("card");
    let dot = std::fs::read_to_string(o.join("tree.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(!std::fs::read_to_string(o.join("guide.txt")).unwrap().is_empty());
    let tree: Value = serde_json::from_str(&std::fs::read_to_string(o.join("tree.json")).unwrap()).unwrap();
    assert!(tree["nodes"].as_array().is_some_and(|n| !n.is_empty()));
}

#[test]
fn card_without_utility_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "audit.json", &minimal_config("out"));
    let out = run(&["card", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}
