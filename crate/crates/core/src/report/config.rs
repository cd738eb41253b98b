//! Audit configuration: one JSON document, paths relative to its file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, Contrast, FeatureSchema};
use crate::error::{Error, Result};
use crate::learners::{CostMode, CostPair, Family, LearnerSpec};
use crate::metrics::Metric;
use crate::probes::{AsaGroup, ProbeCondition, DEFAULT_CALIPER};
use crate::synthgen::{clinical_preset, BiasInjection, ClinicalOutcome, GeneratorConfig};
use crate::utility_card::{TreeSettings, UtilityWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub csv: PathBuf,
    pub schema: PathBuf,
}

/// Synthetic input: an inline generator config or a named preset. `n` and
/// `seed` override either; the preset seed defaults to the audit seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<ClinicalOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub injections: Vec<BiasInjection>,
}

impl GeneratorSource {
    pub fn build(&self, audit_seed: u64) -> Result<GeneratorConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(c), None) => c.clone(),
            (None, Some(p)) => clinical_preset(p, 52499, audit_seed),
            _ => {
                return Err(Error::Config(
                    "generator needs exactly one of `config` and `preset`".into(),
                ))
            }
        };
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A learner family with optional hyperparameter overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerEntry {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparameters: Option<serde_json::Value>,
}

impl LearnerEntry {
    pub fn new(family: &str) -> Self {
        LearnerEntry {
            family: family.to_string(),
            hyperparameters: None,
        }
    }

    pub fn to_family(&self) -> Result<Family> {
        let hp = self.hyperparameters.clone().unwrap_or_else(|| serde_json::json!({}));
        serde_json::from_value(serde_json::json!({ "family": self.family, "hyperparameters": hp }))
            .map_err(|e| Error::Config(format!("learner `{}`: {e}", self.family)))
    }
}

/// A probe given by tag alone (`"PSM"`) or as a full condition object.
/// Bare `PSM` takes the top-level caliper and exclusions; bare `STRAT`
/// expands to every ASA stratum that has rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbeEntry {
    Tag(String),
    Condition(ProbeCondition),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    pub weights: UtilityWeights,
    pub basic_columns: Vec<String>,
    /// Learner for the full and basic models.
    #[serde(default = "logistic_entry")]
    pub learner: LearnerEntry,
    #[serde(default)]
    pub allow_uncalibrated: bool,
    /// JSON `{column: {code: label}}` used to label split conditions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<PathBuf>,
    #[serde(default)]
    pub tree: TreeSettings,
}

fn logistic_entry() -> LearnerEntry {
    LearnerEntry::new("logistic")
}

fn default_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

fn default_caliper() -> f64 {
    DEFAULT_CALIPER
}

fn default_replicates() -> usize {
    200
}

fn default_test_fraction() -> f64 {
    0.3
}

fn default_output() -> PathBuf {
    PathBuf::from("audit-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSource>,
    pub contrast: Contrast,
    pub learners: Vec<LearnerEntry>,
    pub costs: CostPair,
    #[serde(default)]
    pub cost_mode: CostMode,
    #[serde(default)]
    pub probes: Vec<ProbeEntry>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityConfig>,
    #[serde(default = "default_caliper")]
    pub caliper: f64,
    #[serde(default)]
    pub psm_exclusions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asa_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emergency_column: Option<String>,
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
    /// Also run the out-of-bag bootstrap on the training partition.
    #[serde(default)]
    pub oob_bootstrap: bool,
    pub seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Directory relative paths resolve against; the config file's own.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl AuditConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn learner_specs(&self) -> Result<Vec<LearnerSpec>> {
        self.learners
            .iter()
            .map(|l| {
                let mut spec = LearnerSpec::new(l.to_family()?, self.costs, self.seed);
                spec.cost_mode = self.cost_mode;
                spec.validate().map_err(|e| Error::Config(e.to_string()))?;
                Ok(spec)
            })
            .collect()
    }

    /// Schema of the input data, read from disk or derived from the
    /// generator.
    pub fn input_schema(&self) -> Result<FeatureSchema> {
        match (&self.dataset, &self.generator) {
            (Some(d), None) => {
                let csv = self.resolve(&d.csv);
                if !csv.is_file() {
                    return Err(Error::Config(format!("dataset `{}` does not exist", csv.display())));
                }
                FeatureSchema::from_json_file(self.resolve(&d.schema)).map_err(|e| match e {
                    Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
                    other => other,
                })
            }
            (None, Some(g)) => g.build(self.seed)?.schema(),
            _ => Err(Error::Config("give exactly one of `dataset` and `generator`".into())),
        }
    }

    /// Probe conditions in config order, each with whether it may be
    /// skipped. Bare `STRAT` becomes all six strata, skippable when a
    /// stratum or contrast group is empty.
    pub fn conditions(&self) -> Result<Vec<(ProbeCondition, bool)>> {
        let mut out = Vec::new();
        for p in &self.probes {
            match p {
                ProbeEntry::Condition(c) => out.push((c.clone(), false)),
                ProbeEntry::Tag(t) => match t.as_str() {
                    "W" => out.push((ProbeCondition::W, false)),
                    "SWAP" => out.push((ProbeCondition::Swap, false)),
                    "WO" => out.push((ProbeCondition::Without, false)),
                    "SS" => out.push((ProbeCondition::Downsample, false)),
                    "SEP" => out.push((ProbeCondition::Separate, false)),
                    "PSM" => out.push((
                        ProbeCondition::Psm {
                            caliper: self.caliper,
                            exclusions: self.psm_exclusions.clone(),
                        },
                        false,
                    )),
                    "STRAT" => {
                        let (Some(asa), Some(em)) = (&self.asa_column, &self.emergency_column) else {
                            return Err(Error::Config("STRAT needs `asa_column` and `emergency_column`".into()));
                        };
                        out.extend(AsaGroup::ALL.iter().map(|&stratum| {
                            let c = ProbeCondition::Strat {
                                stratum,
                                asa_column: asa.clone(),
                                emergency_column: em.clone(),
                            };
                            (c, true)
                        }));
                    }
                    other => return Err(Error::Config(format!("unknown probe `{other}`"))),
                },
            }
        }
        for (c, _) in &out {
            c.validate()?;
        }
        Ok(out)
    }

    /// Checks everything that can be checked without running the audit.
    pub fn validate(&self) -> Result<()> {
        let schema = self.input_schema()?;
        self.contrast.validate(&schema)?;
        if self.learners.is_empty() {
            return Err(Error::Config("at least one learner is required".into()));
        }
        self.learner_specs()?;
        self.costs.validate().map_err(|e| Error::Config(e.to_string()))?;
        let conditions = self.conditions()?;
        if self.metrics.is_empty() {
            return Err(Error::Config("metric list is empty".into()));
        }
        if self.bootstrap_replicates < 2 {
            return Err(Error::Config("bootstrap_replicates must be at least 2".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction {} outside (0,1)",
                self.test_fraction
            )));
        }
        if !(self.caliper > 0.0 && self.caliper <= 1.0) {
            return Err(Error::Config(format!("caliper {} outside (0,1]", self.caliper)));
        }
        for (c, _) in &conditions {
            if let ProbeCondition::Strat {
                asa_column,
                emergency_column,
                ..
            } = c
            {
                for col in [asa_column, emergency_column] {
                    if schema.column(col).is_none_or(|c| !c.is_coded()) {
                        return Err(Error::Config(format!("STRAT column `{col}` is not a coded column")));
                    }
                }
            }
        }
        for col in &self.psm_exclusions {
            if schema.column(col).is_none() {
                return Err(Error::Config(format!("PSM exclusion `{col}` is not a column")));
            }
        }
        if let Some(u) = &self.utility {
            u.weights.validate().map_err(|e| Error::Config(e.to_string()))?;
            u.learner.to_family()?;
            if u.basic_columns.is_empty() {
                return Err(Error::Config("utility basic_columns is empty".into()));
            }
            for col in &u.basic_columns {
                match schema.column(col) {
                    Some(c) if !matches!(c.kind, ColumnKind::BinaryOutcome | ColumnKind::Audit) => {}
                    _ => return Err(Error::Config(format!("basic column `{col}` is not a feature column"))),
                }
            }
            if let Some(d) = &u.dictionary {
                let p = self.resolve(d);
                if !p.is_file() {
                    return Err(Error::Config(format!("dictionary `{}` does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}
