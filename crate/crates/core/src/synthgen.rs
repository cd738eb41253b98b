//! Synthetic cohorts with known ground truth: configurable subgroup
//! marginals, covariate shifts by group, surrogate columns, a logistic
//! outcome model and injectable label or feature corruption.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnSpec, Dataset, FeatureSchema, Provenance};
use crate::error::{Error, Result};
use crate::learners::logistic::sigmoid;
use crate::rng::{self, tags};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub code: String,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitiveSpec {
    pub name: String,
    pub groups: Vec<GroupSpec>,
}

/// Effects keyed by `"column=code"` of a sensitive group.
pub type GroupEffects = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Normal(mean + shifts, sd), clamped into `range`.
    Continuous {
        name: String,
        mean: f64,
        sd: f64,
        range: [f64; 2],
        #[serde(default)]
        group_shifts: GroupEffects,
    },
    Categorical {
        name: String,
        categories: Vec<String>,
        probabilities: Vec<f64>,
        /// Per-group replacement probabilities, keyed `"column=code"`.
        #[serde(default)]
        group_probabilities: BTreeMap<String, Vec<f64>>,
    },
}

impl FeatureSpec {
    pub fn name(&self) -> &str {
        match self {
            FeatureSpec::Continuous { name, .. } | FeatureSpec::Categorical { name, .. } => name,
        }
    }
}

/// Deterministic column `scale * source + offset(group)`, e.g. ideal body
/// weight from height with sex-specific offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub name: String,
    pub source: String,
    pub scale: f64,
    #[serde(default)]
    pub group_offsets: GroupEffects,
    pub range: [f64; 2],
}

/// Logistic ground truth. Continuous coefficients act on the standardized
/// value `(x - mean) / sd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    #[serde(default)]
    pub intercept: f64,
    /// When set, the intercept is solved so the expected rate matches.
    #[serde(default)]
    pub target_rate: Option<f64>,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    /// `{column: {code: effect}}`
    #[serde(default)]
    pub category_effects: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub group_effects: GroupEffects,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    pub sensitive: Vec<SensitiveSpec>,
    pub features: Vec<FeatureSpec>,
    #[serde(default)]
    pub surrogates: Vec<SurrogateSpec>,
    pub outcome: OutcomeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum Mechanism {
    /// Observed positives in the group become negatives.
    LabelFlipPos,
    /// Observed negatives in the group become positives.
    LabelFlipNeg,
    /// The named continuous feature goes missing.
    FeatureMissingness { feature: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasInjection {
    #[serde(flatten)]
    pub mechanism: Mechanism,
    pub column: String,
    pub code: String,
    pub q: f64,
}

const INTERCEPT_BOUND: f64 = 20.0;

fn group_key(column: &str, code: &str) -> String {
    format!("{column}={code}")
}

impl GeneratorConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    // Negated comparisons so NaN fails every check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.sensitive.is_empty() {
            return bad("at least one sensitive column is required".into());
        }
        for s in &self.sensitive {
            let total: f64 = s.groups.iter().map(|g| g.fraction).sum();
            if s.groups.iter().any(|g| !(g.fraction >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return bad(format!(
                    "group fractions of `{}` must be non-negative and sum to 1",
                    s.name
                ));
            }
        }
        for f in &self.features {
            match f {
                FeatureSpec::Continuous { name, sd, range, .. } => {
                    if !(*sd > 0.0) || !(range[0] < range[1]) {
                        return bad(format!("feature `{name}` needs sd > 0 and an ordered range"));
                    }
                }
                FeatureSpec::Categorical {
                    name,
                    categories,
                    probabilities,
                    group_probabilities,
                } => {
                    let ok = |p: &Vec<f64>| {
                        p.len() == categories.len()
                            && p.iter().all(|&v| v >= 0.0)
                            && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
                    };
                    if categories.is_empty() || !ok(probabilities) || !group_probabilities.values().all(ok) {
                        return bad(format!("feature `{name}` has invalid category probabilities"));
                    }
                }
            }
        }
        for s in &self.surrogates {
            if !self
                .features
                .iter()
                .any(|f| matches!(f, FeatureSpec::Continuous { name, .. } if *name == s.source))
            {
                return bad(format!("surrogate `{}` needs a continuous source feature", s.name));
            }
            if !(s.range[0] < s.range[1]) {
                return bad(format!("surrogate `{}` needs an ordered range", s.name));
            }
        }
        if let Some(t) = self.outcome.target_rate {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("target rate {t} outside (0,1)"));
            }
        }
        Ok(())
    }

    pub fn clean_label_name(&self) -> String {
        format!("{}_clean", self.outcome.name)
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        let mut cols = Vec::new();
        for f in &self.features {
            cols.push(match f {
                FeatureSpec::Continuous { name, range, .. } => ColumnSpec::continuous(name, range[0], range[1]),
                FeatureSpec::Categorical { name, categories, .. } => {
                    let cats: Vec<&str> = categories.iter().map(String::as_str).collect();
                    ColumnSpec::categorical(name, &cats)
                }
            });
        }
        for s in &self.surrogates {
            cols.push(ColumnSpec::continuous(&s.name, s.range[0], s.range[1]));
        }
        for s in &self.sensitive {
            let codes: Vec<&str> = s.groups.iter().map(|g| g.code.as_str()).collect();
            cols.push(ColumnSpec::sensitive(&s.name, &codes));
        }
        cols.push(ColumnSpec::outcome(&self.outcome.name));
        cols.push(ColumnSpec::audit(&self.clean_label_name()));
        FeatureSchema::new(cols)
    }
}

struct Row {
    groups: Vec<usize>,
    continuous: Vec<f64>,
    categorical: Vec<usize>,
    surrogates: Vec<f64>,
    margin: f64,
    u: f64,
}

fn draw_index(u: f64, probs: &[f64]) -> usize {
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

fn draw_row(cfg: &GeneratorConfig, i: usize) -> Row {
    let mut rng = rng::stream(cfg.seed, tags::SYNTH_ROW, i as u64);
    let groups: Vec<usize> = cfg
        .sensitive
        .iter()
        .map(|s| {
            let probs: Vec<f64> = s.groups.iter().map(|g| g.fraction).collect();
            draw_index(rng.random(), &probs)
        })
        .collect();
    let keys: Vec<String> = cfg
        .sensitive
        .iter()
        .zip(&groups)
        .map(|(s, &g)| group_key(&s.name, &s.groups[g].code))
        .collect();
    let effect = |m: &GroupEffects| keys.iter().filter_map(|k| m.get(k)).sum::<f64>();

    let mut continuous = Vec::new();
    let mut categorical = Vec::new();
    let mut margin = 0.0;
    for f in &cfg.features {
        match f {
            FeatureSpec::Continuous {
                name,
                mean,
                sd,
                range,
                group_shifts,
            } => {
                let noise: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
                let x = (mean + effect(group_shifts) + sd * noise).clamp(range[0], range[1]);
                if let Some(c) = cfg.outcome.coefficients.get(name) {
                    margin += c * (x - mean) / sd;
                }
                continuous.push(x);
            }
            FeatureSpec::Categorical {
                name,
                categories,
                probabilities,
                group_probabilities,
            } => {
                let probs = keys
                    .iter()
                    .find_map(|k| group_probabilities.get(k))
                    .unwrap_or(probabilities);
                let k = draw_index(rng.random(), probs);
                if let Some(e) = cfg
                    .outcome
                    .category_effects
                    .get(name)
                    .and_then(|m| m.get(&categories[k]))
                {
                    margin += e;
                }
                categorical.push(k);
            }
        }
    }
    let surrogates = cfg
        .surrogates
        .iter()
        .map(|s| {
            let src = cfg
                .features
                .iter()
                .filter(|f| matches!(f, FeatureSpec::Continuous { .. }))
                .position(|f| f.name() == s.source)
                .expect("validated source");
            (s.scale * continuous[src] + effect(&s.group_offsets)).clamp(s.range[0], s.range[1])
        })
        .collect();
    margin += effect(&cfg.outcome.group_effects);
    Row {
        groups,
        continuous,
        categorical,
        surrogates,
        margin,
        u: rng.random(),
    }
}

fn expected_rate(rows: &[Row], intercept: f64) -> f64 {
    rows.iter().map(|r| sigmoid(r.margin + intercept)).sum::<f64>() / rows.len() as f64
}

/// Intercept whose expected outcome rate over `rows` equals `target`.
fn solve_intercept(rows: &[Row], target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-INTERCEPT_BOUND, INTERCEPT_BOUND);
    let (r_lo, r_hi) = (expected_rate(rows, lo), expected_rate(rows, hi));
    if target < r_lo {
        return Err(Error::InfeasibleRate { target, achieved: r_lo });
    }
    if target > r_hi {
        return Err(Error::InfeasibleRate { target, achieved: r_hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_rate(rows, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draws the cohort, then applies each injection to rows of its target
/// group. The clean label is kept in the audit column `<outcome>_clean`.
pub fn generate(config: &GeneratorConfig, injections: &[BiasInjection]) -> Result<Dataset> {
    config.validate()?;
    let schema = config.schema()?;
    for inj in injections {
        if !(0.0..=1.0).contains(&inj.q) {
            return Err(Error::Config(format!("injection probability {} outside [0,1]", inj.q)));
        }
        let Some(s) = config.sensitive.iter().find(|s| s.name == inj.column) else {
            return Err(Error::Config(format!(
                "injection targets unknown column `{}`",
                inj.column
            )));
        };
        if !s.groups.iter().any(|g| g.code == inj.code) {
            return Err(Error::Config(format!("injection targets unknown group `{}`", inj.code)));
        }
        if let Mechanism::FeatureMissingness { feature } = &inj.mechanism {
            if !config
                .features
                .iter()
                .any(|f| matches!(f, FeatureSpec::Continuous { name, .. } if name == feature))
            {
                return Err(Error::Config(format!("cannot inject missingness into `{feature}`")));
            }
        }
    }

    let rows: Vec<Row> = (0..config.n).into_par_iter().map(|i| draw_row(config, i)).collect();
    let intercept = match config.outcome.target_rate {
        Some(t) => solve_intercept(&rows, t)?,
        None => config.outcome.intercept,
    };
    let clean: Vec<u8> = rows
        .iter()
        .map(|r| u8::from(r.u < sigmoid(r.margin + intercept)))
        .collect();
    let mut observed = clean.clone();

    let n_cont = config
        .features
        .iter()
        .filter(|f| matches!(f, FeatureSpec::Continuous { .. }))
        .count();
    let mut continuous: Vec<Vec<f64>> = (0..n_cont)
        .map(|j| rows.iter().map(|r| r.continuous[j]).collect())
        .collect();

    for (k, inj) in injections.iter().enumerate() {
        let s_idx = config
            .sensitive
            .iter()
            .position(|s| s.name == inj.column)
            .expect("validated");
        let g_idx = config.sensitive[s_idx]
            .groups
            .iter()
            .position(|g| g.code == inj.code)
            .expect("validated");
        let cont_idx = match &inj.mechanism {
            Mechanism::FeatureMissingness { feature } => config
                .features
                .iter()
                .filter(|f| matches!(f, FeatureSpec::Continuous { .. }))
                .position(|f| f.name() == feature),
            _ => None,
        };
        for (i, row) in rows.iter().enumerate() {
            if row.groups[s_idx] != g_idx {
                continue;
            }
            let mut r = rng::stream(config.seed, tags::SYNTH_INJECT, ((i as u64) << 8) | k as u64);
            let hit = r.random::<f64>() < inj.q;
            match inj.mechanism {
                Mechanism::LabelFlipPos if hit && observed[i] == 1 => observed[i] = 0,
                Mechanism::LabelFlipNeg if hit && observed[i] == 0 => observed[i] = 1,
                Mechanism::FeatureMissingness { .. } if hit => {
                    continuous[cont_idx.expect("validated")][i] = f64::NAN;
                }
                _ => {}
            }
        }
    }

    let mut columns = Vec::new();
    let mut ci = 0;
    let mut ki = 0;
    for f in &config.features {
        match f {
            FeatureSpec::Continuous { .. } => {
                columns.push(Column::Numeric(std::mem::take(&mut continuous[ci])));
                ci += 1;
            }
            FeatureSpec::Categorical { categories, .. } => {
                columns.push(Column::Codes(
                    rows.iter().map(|r| categories[r.categorical[ki]].clone()).collect(),
                ));
                ki += 1;
            }
        }
    }
    for j in 0..config.surrogates.len() {
        columns.push(Column::Numeric(rows.iter().map(|r| r.surrogates[j]).collect()));
    }
    for (j, s) in config.sensitive.iter().enumerate() {
        columns.push(Column::Codes(
            rows.iter().map(|r| s.groups[r.groups[j]].code.clone()).collect(),
        ));
    }
    columns.push(Column::Labels(observed));
    columns.push(Column::Codes(clean.iter().map(u8::to_string).collect()));
    Dataset::new(schema, columns, Provenance::Synthetic)
}

/// Writes `<stem>.csv` and `<stem>.schema.json` next to each other.
pub fn write_cohort(
    data: &Dataset,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    let schema = dir.join(format!("{stem}.schema.json"));
    crate::dataset::write_csv(data, &csv)?;
    let text = serde_json::to_string_pretty(&data.schema)?;
    std::fs::write(&schema, text).map_err(|e| Error::io(&schema, e))?;
    Ok((csv, schema))
}

/// Which outcome a clinical preset is calibrated to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClinicalOutcome {
    Mortality,
    Aki,
}

/// Preoperative-cohort preset calibrated to the marginals of the source
/// study: 52,499 patients, sex 49.9% female / 49.3% male / 0.8% other,
/// race 19.4% Black / 75.9% White / 4.7% other, and an overall outcome
/// rate of 0.035 (30-day mortality) or 0.063 (AKI). Codes follow the
/// shipped dictionary (sex 1 male, 2 female; race 7 Black, 9 White).
pub fn clinical_preset(outcome: ClinicalOutcome, n: usize, seed: u64) -> GeneratorConfig {
    let total = 52499.0;
    let frac = |k: f64| k / total;
    let (name, rate, male, black) = match outcome {
        ClinicalOutcome::Mortality => ("mortality_30d", 0.035, 0.45, -0.24),
        ClinicalOutcome::Aki => ("aki", 0.063, 0.52, 0.07),
    };
    let surgery: Vec<String> = (0..14).map(|k| k.to_string()).collect();
    let mut surgery_p = vec![0.05; 14];
    surgery_p[1] = 0.20;
    surgery_p[5] = 0.15;
    surgery_p[11] = 0.05;
    let s: f64 = surgery_p.iter().sum();
    surgery_p.iter_mut().for_each(|p| *p /= s);
    let mut female_surgery = surgery_p.clone();
    female_surgery[0] += 0.08;
    let s: f64 = female_surgery.iter().sum();
    female_surgery.iter_mut().for_each(|p| *p /= s);
    let mut male_surgery = surgery_p.clone();
    male_surgery[0] = 0.0;
    let s: f64 = male_surgery.iter().sum();
    male_surgery.iter_mut().for_each(|p| *p /= s);

    let effects = |pairs: &[(&str, f64)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect::<GroupEffects>();
    GeneratorConfig {
        n,
        seed,
        sensitive: vec![
            SensitiveSpec {
                name: "sex".into(),
                groups: vec![
                    GroupSpec {
                        code: "2".into(),
                        fraction: frac(26206.0),
                    },
                    GroupSpec {
                        code: "1".into(),
                        fraction: frac(25897.0),
                    },
                    GroupSpec {
                        code: "3".into(),
                        fraction: frac(396.0),
                    },
                ],
            },
            SensitiveSpec {
                name: "race".into(),
                groups: vec![
                    GroupSpec {
                        code: "7".into(),
                        fraction: frac(10207.0),
                    },
                    GroupSpec {
                        code: "9".into(),
                        fraction: frac(39838.0),
                    },
                    GroupSpec {
                        code: "0".into(),
                        fraction: frac(2454.0),
                    },
                ],
            },
        ],
        features: vec![
            FeatureSpec::Continuous {
                name: "age".into(),
                mean: 57.0,
                sd: 16.0,
                range: [18.0, 100.0],
                group_shifts: effects(&[("race=7", -4.0)]),
            },
            FeatureSpec::Continuous {
                name: "height".into(),
                mean: 163.0,
                sd: 7.0,
                range: [120.0, 220.0],
                group_shifts: effects(&[("sex=1", 13.0)]),
            },
            FeatureSpec::Continuous {
                name: "bmi".into(),
                mean: 29.0,
                sd: 6.5,
                range: [12.0, 80.0],
                group_shifts: effects(&[("race=7", 1.5)]),
            },
            FeatureSpec::Continuous {
                name: "creatinine".into(),
                mean: 0.9,
                sd: 0.25,
                range: [0.2, 15.0],
                group_shifts: effects(&[("sex=1", 0.2), ("race=7", 0.1)]),
            },
            FeatureSpec::Continuous {
                name: "hemoglobin".into(),
                mean: 12.5,
                sd: 1.6,
                range: [4.0, 20.0],
                group_shifts: effects(&[("sex=1", 1.2)]),
            },
            FeatureSpec::Categorical {
                name: "surgery_type".into(),
                categories: surgery,
                probabilities: surgery_p,
                group_probabilities: [
                    ("sex=2".to_string(), female_surgery),
                    ("sex=1".to_string(), male_surgery),
                ]
                .into_iter()
                .collect(),
            },
            FeatureSpec::Categorical {
                name: "asa".into(),
                categories: ["I", "II", "III", "IV", "V"].iter().map(|s| s.to_string()).collect(),
                probabilities: vec![0.05, 0.35, 0.45, 0.14, 0.01],
                group_probabilities: BTreeMap::new(),
            },
            FeatureSpec::Categorical {
                name: "emergency".into(),
                categories: vec!["0".into(), "1".into()],
                probabilities: vec![0.9, 0.1],
                group_probabilities: BTreeMap::new(),
            },
        ],
        surrogates: vec![SurrogateSpec {
            name: "ideal_body_weight".into(),
            source: "height".into(),
            scale: 0.9,
            group_offsets: effects(&[("sex=1", -87.16), ("sex=2", -91.66), ("sex=3", -89.41)]),
            range: [20.0, 120.0],
        }],
        outcome: OutcomeSpec {
            name: name.into(),
            intercept: 0.0,
            target_rate: Some(rate),
            coefficients: [("age", 0.6), ("creatinine", 0.5), ("hemoglobin", -0.3), ("bmi", 0.1)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            category_effects: [
                (
                    "asa".to_string(),
                    [("I", -1.5), ("II", -0.5), ("III", 0.2), ("IV", 1.0), ("V", 1.8)]
                        .iter()
                        .map(|(k, v)| (k.to_string(), *v))
                        .collect(),
                ),
                (
                    "surgery_type".to_string(),
                    [("3", 0.6), ("10", 0.5), ("12", -0.8)]
                        .iter()
                        .map(|(k, v)| (k.to_string(), *v))
                        .collect(),
                ),
                ("emergency".to_string(), [("1".to_string(), 0.9)].into_iter().collect()),
            ]
            .into_iter()
            .collect(),
            group_effects: effects(&[("sex=1", male), ("race=7", black)]),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n: 4000,
            seed: 11,
            sensitive: vec![SensitiveSpec {
                name: "grp".into(),
                groups: vec![
                    GroupSpec {
                        code: "A".into(),
                        fraction: 0.3,
                    },
                    GroupSpec {
                        code: "B".into(),
                        fraction: 0.7,
                    },
                ],
            }],
            features: vec![FeatureSpec::Continuous {
                name: "x".into(),
                mean: 0.0,
                sd: 1.0,
                range: [-5.0, 5.0],
                group_shifts: GroupEffects::new(),
            }],
            surrogates: vec![],
            outcome: OutcomeSpec {
                name: "y".into(),
                intercept: 0.0,
                target_rate: Some(0.3),
                coefficients: [("x".to_string(), 1.0)].into_iter().collect(),
                category_effects: BTreeMap::new(),
                group_effects: GroupEffects::new(),
            },
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(), &[]).unwrap();
        let b = generate(&small(), &[]).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 12;
        assert_ne!(a, generate(&other, &[]).unwrap());
    }

    #[test]
    fn total_positive_flip_empties_group() {
        let inj = BiasInjection {
            mechanism: Mechanism::LabelFlipPos,
            column: "grp".into(),
            code: "A".into(),
            q: 1.0,
        };
        let d = generate(&small(), &[inj]).unwrap();
        let grp = d.codes("grp").unwrap();
        let y = d.labels();
        assert!(grp.iter().zip(y).filter(|(g, _)| *g == "A").all(|(_, &y)| y == 0));
        assert!(grp.iter().zip(y).any(|(g, &y)| g == "B" && y == 1));
        // The clean label survives in the audit column.
        let clean = d.codes("y_clean").unwrap();
        assert!(grp.iter().zip(clean).any(|(g, c)| g == "A" && c == "1"));
    }

    #[test]
    fn injection_is_local_to_its_group() {
        let clean = generate(&small(), &[]).unwrap();
        let injections = [
            BiasInjection {
                mechanism: Mechanism::LabelFlipNeg,
                column: "grp".into(),
                code: "A".into(),
                q: 0.5,
            },
            BiasInjection {
                mechanism: Mechanism::FeatureMissingness { feature: "x".into() },
                column: "grp".into(),
                code: "A".into(),
                q: 0.5,
            },
        ];
        let dirty = generate(&small(), &injections).unwrap();
        let grp = clean.codes("grp").unwrap();
        let outside: Vec<usize> = (0..clean.n_rows()).filter(|&i| grp[i] != "A").collect();
        assert_eq!(clean.select_rows(&outside), dirty.select_rows(&outside));
        assert!(dirty.missing_mask("x").unwrap().iter().any(|&m| m));
    }

    #[test]
    fn infeasible_target_reports_achieved_rate() {
        let mut cfg = small();
        cfg.outcome.target_rate = Some(1e-12);
        match generate(&cfg, &[]) {
            Err(Error::InfeasibleRate { achieved, .. }) => assert!(achieved > 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_fractions() {
        let mut cfg = small();
        cfg.sensitive[0].groups[0].fraction = 0.5;
        assert!(generate(&cfg, &[]).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = clinical_preset(ClinicalOutcome::Aki, 100, 3);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: GeneratorConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let inj: BiasInjection = serde_json::from_str(
            r#"{"mechanism":"feature_missingness","feature":"x","column":"grp","code":"A","q":0.2}"#,
        )
        .unwrap();
        assert_eq!(inj.mechanism, Mechanism::FeatureMissingness { feature: "x".into() });
    }

    #[test]
    fn preset_generates_and_preprocesses() {
        let d = generate(&clinical_preset(ClinicalOutcome::Mortality, 3000, 1), &[]).unwrap();
        let (p, _) = crate::dataset::preprocess(&d).unwrap();
        assert_eq!(p.missing_count(), 0);
    }
}
