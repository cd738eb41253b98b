use fairaudit::metrics::Metric;
use fairaudit::report::{emit_outputs, run_audit, without_timing, AuditConfig, AuditReport};
use serde_json::json;

fn config(probes: serde_json::Value, extra: serde_json::Value) -> AuditConfig {
    let mut c = json!({
        "generator": {"preset": "mortality", "n": 3000},
        "contrast": {"column": "sex", "treated": "2", "control": "1"},
        "learners": [{"family": "logistic"}],
        "costs": {"c_neg": 1, "c_pos": 25},
        "probes": probes,
        "bootstrap_replicates": 30,
        "seed": 21
    });
    for (k, v) in extra.as_object().unwrap() {
        c[k] = v.clone();
    }
    AuditConfig::from_json(&c.to_string()).unwrap()
}

#[test]
fn report_json_round_trips_exactly() {
    let cfg = config(
        json!(["W", "SWAP", "PSM"]),
        json!({"psm_exclusions": ["ideal_body_weight", "height"],
               "utility": {"weights": {"w1": 25, "w2": 1}, "basic_columns": ["surgery_type", "age", "race", "sex"]}}),
    );
    let report = run_audit(&cfg).unwrap();
    let text = report.to_canonical_json().unwrap();
    let back = AuditReport::from_json(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_canonical_json().unwrap(), text);
}

#[test]
fn identical_config_gives_identical_outputs() {
    let cfg = config(json!(["W", "SS"]), json!({}));
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_outputs(&run_audit(&cfg).unwrap(), a.path()).unwrap();
    emit_outputs(&run_audit(&cfg).unwrap(), b.path()).unwrap();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read_to_string(d.path().join(f)).unwrap();
    assert_eq!(
        without_timing(&read(&a, "report.json")).unwrap(),
        without_timing(&read(&b, "report.json")).unwrap()
    );
    assert_eq!(read(&a, "report.md"), read(&b, "report.md"));
    assert_eq!(read(&a, "plots/logistic.csv"), read(&b, "plots/logistic.csv"));
}

#[test]
fn empty_probe_list_renders_config_and_preprocess_only() {
    let cfg = config(json!([]), json!({}));
    let report = run_audit(&cfg).unwrap();
    assert!(report.balance.is_none());
    assert!(report.utility.is_none());
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&report, dir.path()).unwrap();
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    let headings: Vec<&str> = md.lines().filter(|l| l.starts_with("## ")).collect();
    assert_eq!(headings, ["## Configuration", "## Data and preprocessing"]);
    assert!(!dir.path().join("tree.dot").exists());
}

#[test]
fn plot_rows_count_defined_estimates() {
    let cfg = config(json!(["W", "SWAP"]), json!({}));
    let report = run_audit(&cfg).unwrap();
    let tables = report.plot_tables();
    assert_eq!(tables.len(), 1);
    let rows = tables[0].1.lines().count() - 1;
    let groups: std::collections::BTreeSet<&str> = report.learners[0]
        .probes
        .iter()
        .flat_map(|p| &p.estimates)
        .map(|e| e.group.as_str())
        .collect();
    // Whole population plus both sides of the contrast; at this size every
    // rate is defined.
    assert_eq!(groups.into_iter().collect::<Vec<_>>(), ["ALL", "sex=1", "sex=2"]);
    assert_eq!(rows, 2 * 3 * Metric::ALL.len());
    let defined: usize = report.learners[0]
        .probes
        .iter()
        .flat_map(|p| &p.estimates)
        .filter(|e| e.mean.is_some())
        .count();
    assert_eq!(rows, defined);
}

#[test]
fn report_carries_version_and_timing() {
    let cfg = config(json!(["W"]), json!({}));
    let report = run_audit(&cfg).unwrap();
    assert!(!report.version.is_empty());
    assert!(report.timing.stages.contains_key("probes"));
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&report, dir.path()).unwrap();
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains(&report.version));
    assert!(!md.contains("total_ms"));
}

#[test]
fn strat_expands_and_skips_empty_strata() {
    let cfg = config(
        json!(["W", "STRAT"]),
        json!({"asa_column": "asa", "emergency_column": "emergency"}),
    );
    let report = run_audit(&cfg).unwrap();
    let strata = report.learners[0]
        .probes
        .iter()
        .filter(|p| p.label().starts_with("STRAT:"))
        .count();
    assert_eq!(strata + report.skipped.len(), 6);
    assert!(strata >= 1);
}
