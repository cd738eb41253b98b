//! End-to-end audit: ingest, preprocess, probes, propensity balance,
//! out-of-bag metrics and the utility card, emitted as a model card.

mod config;
mod markdown;

pub use config::{AuditConfig, DatasetPaths, GeneratorSource, LearnerEntry, ProbeEntry, UtilityConfig};
pub use markdown::render_markdown;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{load_csv, split, Dataset, PreprocessReport, Preprocessor, Provenance};
use crate::design::ColumnSelection;
use crate::error::{Error, Result};
use crate::learners::{train, train_with, LearnerSpec};
use crate::metrics::{bootstrap_estimate, BootstrapReport, Metric};
use crate::probes::{bias_panel, psm_sample, run_probe_with, PanelRow, ProbeCondition, ProbeResult, ProbeSettings};
use crate::propensity::{
    balance_smd, detect_surrogates, fit_propensity, fit_propensity_allowing_separation, BalanceReport, MatchedSample,
};
use crate::synthgen::generate;
use crate::utility_card::{
    fit_utility_tree, render_guide, utility_table, CardSettings, Dictionary, Guide, UtilityTree, UtilityWeights,
};

pub const TOOL_NAME: &str = "fairaudit";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A failed audit stage.
#[derive(Debug)]
pub struct AuditError {
    pub module: &'static str,
    pub error: Error,
}

impl fmt::Display for AuditError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.module, self.error)
    }
}

impl std::error::Error for AuditError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl AuditError {
    pub fn exit_code(&self) -> i32 {
        self.error.exit_code()
    }

    /// `{"error":{"module":..,"cause":..}}`
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "module": self.module, "cause": self.error.to_string() } }).to_string()
    }
}

trait Stage<T> {
    fn stage(self, module: &'static str) -> std::result::Result<T, AuditError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, module: &'static str) -> std::result::Result<T, AuditError> {
        self.map_err(|error| AuditError { module, error })
    }
}

pub type AuditResult<T> = std::result::Result<T, AuditError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub provenance: Provenance,
    pub outcome: String,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub outcome_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSection {
    pub train: PreprocessReport,
    pub test: PreprocessReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSection {
    pub learner: String,
    pub spec: LearnerSpec,
    pub probes: Vec<ProbeResult>,
    pub bias_panel: Vec<PanelRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob: Option<BootstrapReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceSection {
    pub report: BalanceReport,
    pub top_coefficients: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<MatchedSample>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilitySection {
    pub weights: UtilityWeights,
    pub learner: String,
    pub n_records: usize,
    pub mean_iu_full: f64,
    pub mean_iu_basic: f64,
    pub mean_iu_diff: f64,
    pub tree: UtilityTree,
    pub guide: Guide,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: u64,
    pub stages: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tool: String,
    pub version: String,
    pub config: AuditConfig,
    pub data: DataSummary,
    pub preprocess: PreprocessSection,
    pub learners: Vec<LearnerSection>,
    /// Optional conditions that could not be evaluated, with the reason.
    pub skipped: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySection>,
    pub timing: Timing,
}

/// Rounds to 6 significant digits; the shortest representation of the
/// result prints and parses back to the same value.
fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.5e}").parse().expect("formatted float parses")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().expect("f64 number"));
            *v = serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number);
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

impl AuditReport {
    /// Rounds every float to 6 significant digits, so the report equals
    /// its own serialized form after parsing.
    pub fn canonicalize(self) -> Result<Self> {
        let base_dir = self.config.base_dir.clone();
        let mut v = serde_json::to_value(&self)?;
        round_value(&mut v);
        let mut out: AuditReport = serde_json::from_value(v)?;
        out.config.base_dir = base_dir;
        Ok(out)
    }

    /// Pretty JSON with sorted keys.
    pub fn to_canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        round_value(&mut v);
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Long-format rows `condition,metric,group,mean,ci_low,ci_high,n_defined`
    /// for each learner; undefined estimates are left out.
    pub fn plot_tables(&self) -> Vec<(String, String)> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        let mut out = Vec::new();
        for sec in &self.learners {
            let k = seen.entry(&sec.learner).or_default();
            *k += 1;
            let name = if *k == 1 {
                sec.learner.clone()
            } else {
                format!("{}-{}", sec.learner, k)
            };
            let mut csv = String::from("condition,metric,group,mean,ci_low,ci_high,n_defined\n");
            for p in &sec.probes {
                for e in &p.estimates {
                    if let (Some(m), Some(lo), Some(hi)) = (e.mean, e.ci_low, e.ci_high) {
                        csv.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            e.condition,
                            e.metric,
                            e.group,
                            round_sig(m),
                            round_sig(lo),
                            round_sig(hi),
                            e.n_defined
                        ));
                    }
                }
            }
            out.push((format!("{name}.csv"), csv));
        }
        out
    }
}

/// Ingested, split and preprocessed data shared by the audit stages.
pub struct Prepared {
    pub raw: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub preprocess: PreprocessSection,
}

pub fn prepare(config: &AuditConfig) -> AuditResult<Prepared> {
    config.validate().stage("config")?;
    let raw = match (&config.dataset, &config.generator) {
        (Some(d), _) => {
            let schema = config.input_schema().stage("dataset")?;
            load_csv(config.resolve(&d.csv), &schema).stage("dataset")?
        }
        (None, Some(g)) => {
            let cfg = g.build(config.seed).stage("synthgen")?;
            generate(&cfg, &g.injections).stage("synthgen")?
        }
        (None, None) => unreachable!("validated"),
    };
    let (train_raw, test_raw) = split(&raw, config.test_fraction, config.seed).stage("dataset")?;
    let pre = Preprocessor::fit(&train_raw).stage("dataset")?;
    let (train_set, train_rep) = pre.transform(&train_raw).stage("dataset")?;
    let (test, test_rep) = pre.transform(&test_raw).stage("dataset")?;
    Ok(Prepared {
        raw,
        train: train_set,
        test,
        preprocess: PreprocessSection {
            train: train_rep,
            test: test_rep,
        },
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Fits full and basic models on the training partition and the guide tree
/// on the test partition.
pub fn utility_card(config: &AuditConfig, prepared: &Prepared) -> AuditResult<Option<UtilitySection>> {
    let Some(u) = &config.utility else { return Ok(None) };
    let mut spec = LearnerSpec::new(u.learner.to_family().stage("config")?, config.costs, config.seed);
    spec.cost_mode = config.cost_mode;
    let full = train(&spec, &prepared.train, true).stage("learners")?;
    let basic_sel = ColumnSelection {
        include_sensitive: true,
        only: Some(u.basic_columns.clone()),
        exclude: Vec::new(),
    };
    let basic = train_with(&spec, &prepared.train, &basic_sel).stage("learners")?;
    let settings = CardSettings {
        weights: u.weights,
        basic_columns: u.basic_columns.clone(),
        allow_uncalibrated: u.allow_uncalibrated,
    };
    let mut records = utility_table(&full, &basic, &prepared.test, &settings).stage("utility_card")?;
    records.to_original_units(&prepared.raw.schema);
    let tree = fit_utility_tree(&records, u.tree).stage("utility_card")?;
    let dictionary: Dictionary = match &u.dictionary {
        Some(p) => {
            let p = config.resolve(p);
            let text = std::fs::read_to_string(&p)
                .map_err(|e| Error::io(&p, e))
                .stage("utility_card")?;
            serde_json::from_str(&text).map_err(Error::from).stage("utility_card")?
        }
        None => Dictionary::new(),
    };
    let guide = render_guide(&tree, &dictionary).stage("utility_card")?;
    let r = &records.records;
    Ok(Some(UtilitySection {
        weights: u.weights,
        learner: spec.family.name().to_string(),
        n_records: r.len(),
        mean_iu_full: mean(r.iter().map(|x| x.iu_full)),
        mean_iu_basic: mean(r.iter().map(|x| x.iu_basic)),
        mean_iu_diff: mean(r.iter().map(|x| x.iu_diff)),
        tree,
        guide,
    }))
}

fn balance(config: &AuditConfig, conditions: &[(ProbeCondition, bool)], test: &Dataset) -> AuditResult<BalanceSection> {
    let psm = conditions.iter().find_map(|(c, _)| match c {
        ProbeCondition::Psm { caliper, exclusions } => Some((*caliper, exclusions.clone())),
        _ => None,
    });
    let exclusions = psm
        .as_ref()
        .map_or_else(|| config.psm_exclusions.clone(), |p| p.1.clone());
    let mut notes = Vec::new();
    if let Err(Error::Separation { features }) = fit_propensity(test, &config.contrast, &exclusions) {
        notes.push(format!(
            "propensity model separates the groups completely; leading features: {}",
            features.join(", ")
        ));
    }
    let model = fit_propensity_allowing_separation(test, &config.contrast, &exclusions).stage("propensity")?;
    if !model.converged {
        notes.push("propensity fit reached the iteration cap".into());
    }
    let surrogates = detect_surrogates(&model, test).stage("propensity")?;
    let matched = match &psm {
        Some((caliper, _)) => {
            Some(psm_sample(test, &config.contrast, &exclusions, *caliper, config.seed).stage("propensity")?)
        }
        None => None,
    };
    let mut report = balance_smd(test, &config.contrast, matched.as_ref()).stage("propensity")?;
    report.surrogates = surrogates.flagged;
    Ok(BalanceSection {
        report,
        top_coefficients: surrogates.top_coefficients,
        matched,
        notes,
    })
}

pub fn run_audit(config: &AuditConfig) -> AuditResult<AuditReport> {
    let start = Instant::now();
    let mut stages = BTreeMap::new();
    let mut lap = Instant::now();
    let mut tick = |name: &str, stages: &mut BTreeMap<String, u64>| {
        stages.insert(name.to_string(), lap.elapsed().as_millis() as u64);
        lap = Instant::now();
    };

    let prepared = prepare(config)?;
    tick("ingest_preprocess", &mut stages);

    let conditions = config.conditions().stage("config")?;
    let specs = config.learner_specs().stage("config")?;
    let settings = ProbeSettings {
        metrics: config.metrics.clone(),
        replicates: config.bootstrap_replicates,
        seed: config.seed,
    };
    let mut learners = Vec::new();
    let mut skipped = Vec::new();
    for spec in &specs {
        let w_model = if conditions.iter().any(|(c, _)| {
            matches!(
                c,
                ProbeCondition::W | ProbeCondition::Swap | ProbeCondition::Psm { .. } | ProbeCondition::Strat { .. }
            )
        }) {
            Some(train(spec, &prepared.train, true).stage("learners")?)
        } else {
            None
        };
        let mut probes = Vec::new();
        for (c, optional) in &conditions {
            match run_probe_with(
                c,
                spec,
                &prepared.train,
                &prepared.test,
                &config.contrast,
                &settings,
                w_model.as_ref(),
            ) {
                Ok(r) => probes.push(r),
                Err(e @ (Error::EmptyStratum(_) | Error::MissingGroup(_))) if *optional => {
                    skipped.push(format!("{} {}: {e}", spec.family.name(), c.label()));
                }
                Err(e) => {
                    return Err(AuditError {
                        module: "probes",
                        error: e,
                    })
                }
            }
        }
        // The panel is a PPR view; with PPR left out of the metric list there
        // is nothing to show.
        let panel = if config.metrics.contains(&Metric::PPR) {
            bias_panel(&probes).stage("probes")?
        } else {
            Vec::new()
        };
        learners.push(LearnerSection {
            learner: spec.family.name().to_string(),
            spec: *spec,
            probes,
            bias_panel: panel,
            oob: None,
        });
    }
    tick("probes", &mut stages);

    let balance = if conditions.is_empty() {
        None
    } else {
        Some(balance(config, &conditions, &prepared.test)?)
    };
    tick("propensity", &mut stages);

    if config.oob_bootstrap {
        for (sec, spec) in learners.iter_mut().zip(&specs) {
            sec.oob = Some(
                bootstrap_estimate(
                    spec,
                    &prepared.train,
                    &config.contrast,
                    &config.metrics,
                    config.bootstrap_replicates,
                    config.seed,
                )
                .stage("metrics")?,
            );
        }
    }
    tick("metrics", &mut stages);

    let utility = utility_card(config, &prepared)?;
    tick("utility_card", &mut stages);

    let labels = prepared.raw.labels();
    let report = AuditReport {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        config: config.clone(),
        data: DataSummary {
            provenance: prepared.raw.provenance,
            outcome: prepared.raw.schema.outcome_name().to_string(),
            n_rows: prepared.raw.n_rows(),
            n_train: prepared.train.n_rows(),
            n_test: prepared.test.n_rows(),
            outcome_rate: labels.iter().map(|&y| f64::from(y)).sum::<f64>() / labels.len() as f64,
        },
        preprocess: prepared.preprocess,
        learners,
        skipped,
        balance,
        utility,
        timing: Timing {
            total_ms: start.elapsed().as_millis() as u64,
            stages,
        },
    };
    report.canonicalize().stage("cli_report")
}

/// Writes report.json, report.md, plots/*.csv, and when present tree.dot
/// and matched_pairs.csv. Returns the written paths.
pub fn emit_outputs(report: &AuditReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let write = |path: PathBuf, text: &str, out: &mut Vec<PathBuf>| -> Result<()> {
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        out.push(path);
        Ok(())
    };
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut out = Vec::new();
    write(dir.join("report.json"), &report.to_canonical_json()?, &mut out)?;
    write(dir.join("report.md"), &render_markdown(report), &mut out)?;
    for (name, csv) in report.plot_tables() {
        write(plots.join(name), &csv, &mut out)?;
    }
    if let Some(u) = &report.utility {
        write(dir.join("tree.dot"), &u.guide.dot, &mut out)?;
    }
    if let Some(m) = report.balance.as_ref().and_then(|b| b.matched.as_ref()) {
        write(dir.join("matched_pairs.csv"), &m.to_csv(), &mut out)?;
    }
    Ok(out)
}

/// JSON value of a report with the timing block removed, for comparing
/// runs.
pub fn without_timing(report_json: &str) -> Result<Value> {
    let mut v: Value = serde_json::from_str(report_json)?;
    if let Value::Object(o) = &mut v {
        o.remove("timing");
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(round_sig(0.123456789), 0.123457);
        assert_eq!(round_sig(123456789.0), 123457000.0);
        assert_eq!(round_sig(-1.0 / 3.0), -0.333333);
        assert_eq!(round_sig(0.0), 0.0);
    }

    #[test]
    fn rounding_is_idempotent() {
        for v in [1.0 / 7.0, 2.5e-9, 12345.6789, -0.0625] {
            assert_eq!(round_sig(round_sig(v)), round_sig(v));
        }
    }
}
