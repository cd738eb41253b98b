//! Bias probes: train and evaluate the same learner under altered
//! conditions and compare subgroup metrics.

mod asa;

pub use asa::{parse_asa_class, parse_emergency, stratify_asa, AsaGroup};

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::{Contrast, Dataset};
use crate::design::ColumnSelection;
use crate::error::{Error, Result};
use crate::learners::{predict_proba, train, train_with, LearnerSpec, TrainedModel};
use crate::metrics::{fixed_bootstrap, ReplicateRates};
use crate::metrics::{GroupDifference, Metric, MetricEstimate};
use crate::propensity::{fit_propensity_allowing_separation, match_caliper, MatchedSample};
use crate::rng::{self, tags};

pub const DEFAULT_CALIPER: f64 = 0.05;
/// Key of rows outside the contrast in [`ProbeResult::group_sizes`].
pub const OTHER_GROUP: &str = "OTHER";

fn default_caliper() -> f64 {
    DEFAULT_CALIPER
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag")]
pub enum ProbeCondition {
    /// Train and evaluate as usual.
    W,
    /// Evaluate the W model with the contrast codes exchanged.
    #[serde(rename = "SWAP")]
    Swap,
    /// Train without the sensitive columns.
    #[serde(rename = "WO")]
    Without,
    /// Evaluate the W model on the propensity-matched test rows.
    #[serde(rename = "PSM")]
    Psm {
        #[serde(default = "default_caliper")]
        caliper: f64,
        /// Columns left out of the propensity model.
        #[serde(default)]
        exclusions: Vec<String>,
    },
    /// Retrain after downsampling the larger contrast group.
    #[serde(rename = "SS")]
    Downsample,
    /// One model per contrast group.
    #[serde(rename = "SEP")]
    Separate,
    /// Evaluate the W model inside one ASA stratum.
    #[serde(rename = "STRAT")]
    Strat {
        stratum: AsaGroup,
        asa_column: String,
        emergency_column: String,
    },
}

impl ProbeCondition {
    pub fn psm() -> Self {
        ProbeCondition::Psm {
            caliper: DEFAULT_CALIPER,
            exclusions: Vec::new(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ProbeCondition::W => "W",
            ProbeCondition::Swap => "SWAP",
            ProbeCondition::Without => "WO",
            ProbeCondition::Psm { .. } => "PSM",
            ProbeCondition::Downsample => "SS",
            ProbeCondition::Separate => "SEP",
            ProbeCondition::Strat { .. } => "STRAT",
        }
    }

    /// Condition label carried by every estimate, e.g. `STRAT:ASA2_NE`.
    pub fn label(&self) -> String {
        match self {
            ProbeCondition::Strat { stratum, .. } => format!("STRAT:{stratum}"),
            other => other.tag().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProbeCondition::Psm { caliper, .. } if !(*caliper > 0.0 && *caliper <= 1.0) => {
                Err(Error::Config(format!("PSM caliper must lie in (0,1], got {caliper}")))
            }
            ProbeCondition::Strat {
                asa_column,
                emergency_column,
                ..
            } if asa_column.is_empty() || emergency_column.is_empty() => {
                Err(Error::Config("STRAT needs ASA and emergency columns".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether the condition evaluates the model trained with all features.
    fn uses_w_model(&self) -> bool {
        matches!(
            self,
            ProbeCondition::W | ProbeCondition::Swap | ProbeCondition::Psm { .. } | ProbeCondition::Strat { .. }
        )
    }
}

/// Evaluation settings shared by all conditions of an audit. The same
/// bootstrap seed is used for every condition, so conditions evaluated on
/// the same rows see the same resamples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub metrics: Vec<Metric>,
    pub replicates: usize,
    pub seed: u64,
}

impl ProbeSettings {
    pub fn new(replicates: usize, seed: u64) -> Self {
        ProbeSettings {
            metrics: Metric::ALL.to_vec(),
            replicates,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub condition: ProbeCondition,
    pub learner: String,
    pub outcome: String,
    pub contrast: Contrast,
    pub replicates: usize,
    pub estimates: Vec<MetricEstimate>,
    pub differences: Vec<GroupDifference>,
    /// Evaluated rows per group (treated, control, OTHER); sums to
    /// `n_evaluated`.
    pub group_sizes: BTreeMap<String, usize>,
    pub n_evaluated: usize,
    /// Training rows per group for the model(s) evaluated.
    pub train_group_sizes: BTreeMap<String, usize>,
    pub notes: Vec<String>,
}

impl ProbeResult {
    pub fn label(&self) -> String {
        self.condition.label()
    }

    pub fn difference(&self, metric: Metric) -> Option<&GroupDifference> {
        self.differences.iter().find(|d| d.metric == metric)
    }
}

fn group_sizes(membership: &[Option<bool>], rows: &[usize], contrast: &Contrast) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::from([
        (contrast.treated_label(), 0),
        (contrast.control_label(), 0),
        (OTHER_GROUP.to_string(), 0),
    ]);
    for &r in rows {
        let key = match membership[r] {
            Some(true) => contrast.treated_label(),
            Some(false) => contrast.control_label(),
            None => OTHER_GROUP.to_string(),
        };
        *out.get_mut(&key).expect("key present") += 1;
    }
    out
}

/// Fixed-model bootstrap of `decisions` (aligned with `rows`) over the
/// evaluated rows of `test`.
pub fn evaluate_decisions(
    test: &Dataset,
    contrast: &Contrast,
    rows: &[usize],
    decisions: &[u8],
    settings: &ProbeSettings,
) -> Result<ReplicateRates> {
    let membership = contrast.membership(test)?;
    let labels: Vec<u8> = rows.iter().map(|&r| test.labels()[r]).collect();
    let member: Vec<Option<bool>> = rows.iter().map(|&r| membership[r]).collect();
    fixed_bootstrap(
        &labels,
        decisions,
        &member,
        contrast,
        &settings.metrics,
        settings.replicates,
        settings.seed,
    )
}

/// Training rows for SS: every row of the smaller contrast group plus an
/// equal-sized sample without replacement from the larger one. Rows outside
/// the contrast are dropped. Returned sorted.
pub fn downsample_rows(train: &Dataset, contrast: &Contrast, seed: u64) -> Result<Vec<usize>> {
    let membership = contrast.membership(train)?;
    let treated: Vec<usize> = (0..train.n_rows()).filter(|&i| membership[i] == Some(true)).collect();
    let control: Vec<usize> = (0..train.n_rows()).filter(|&i| membership[i] == Some(false)).collect();
    if treated.is_empty() {
        return Err(Error::MissingGroup(contrast.treated_label()));
    }
    if control.is_empty() {
        return Err(Error::MissingGroup(contrast.control_label()));
    }
    let (small, large) = if treated.len() <= control.len() {
        (treated, control)
    } else {
        (control, treated)
    };
    let mut rng = rng::stream(seed, tags::DOWNSAMPLE, 0);
    let mut rows = small.clone();
    rows.extend(sample(&mut rng, large.len(), small.len()).into_iter().map(|k| large[k]));
    rows.sort_unstable();
    Ok(rows)
}

/// Propensity-matched sample of the test rows. Separated scores are kept,
/// so a perfect surrogate shows up as a 100% unmatched fraction.
pub fn psm_sample(
    test: &Dataset,
    contrast: &Contrast,
    exclusions: &[String],
    caliper: f64,
    seed: u64,
) -> Result<MatchedSample> {
    let model = fit_propensity_allowing_separation(test, contrast, exclusions)?;
    match_caliper(&model, caliper, seed)
}

/// Runs one condition. `w_model` can carry an already trained W model;
/// otherwise one is trained when the condition needs it.
pub fn run_probe_with(
    condition: &ProbeCondition,
    spec: &LearnerSpec,
    train_set: &Dataset,
    test: &Dataset,
    contrast: &Contrast,
    settings: &ProbeSettings,
    w_model: Option<&TrainedModel>,
) -> Result<ProbeResult> {
    condition.validate()?;
    contrast.validate(&train_set.schema)?;
    contrast.validate(&test.schema)?;
    let train_membership = contrast.membership(train_set)?;
    let all_train: Vec<usize> = (0..train_set.n_rows()).collect();
    let all_test: Vec<usize> = (0..test.n_rows()).collect();
    let mut notes = Vec::new();

    let trained;
    let w = if condition.uses_w_model() {
        match w_model {
            Some(m) => Some(m),
            None => {
                trained = train(spec, train_set, true)?;
                Some(&trained)
            }
        }
    } else {
        None
    };

    let (rows, decisions, train_rows) = match condition {
        ProbeCondition::W => (all_test.clone(), predict_proba(w.unwrap(), test)?.y_hat, all_train),
        ProbeCondition::Swap => {
            let swapped = contrast.swap(test)?;
            (all_test.clone(), predict_proba(w.unwrap(), &swapped)?.y_hat, all_train)
        }
        ProbeCondition::Without => {
            let model = train(spec, train_set, false)?;
            (all_test.clone(), predict_proba(&model, test)?.y_hat, all_train)
        }
        ProbeCondition::Psm { caliper, exclusions } => {
            let matched = psm_sample(test, contrast, exclusions, *caliper, settings.seed)?;
            notes.push(format!(
                "{} matched pairs at caliper {caliper}; unmatched treated fraction {:.4}",
                matched.pairs.len(),
                matched.unmatched_fraction
            ));
            if matched.pairs.is_empty() {
                return Err(Error::NoMatches);
            }
            let mut rows = matched.rows();
            rows.sort_unstable();
            let all = predict_proba(w.unwrap(), test)?.y_hat;
            let d = rows.iter().map(|&r| all[r]).collect();
            (rows, d, all_train)
        }
        ProbeCondition::Downsample => {
            let rows = downsample_rows(train_set, contrast, spec.seed)?;
            let sizes = group_sizes(&train_membership, &rows, contrast);
            if sizes[&contrast.treated_label()] == train_membership.iter().filter(|m| **m == Some(true)).count()
                && sizes[&contrast.control_label()] == train_membership.iter().filter(|m| **m == Some(false)).count()
            {
                notes.push("groups already equal in size; no rows were dropped".into());
            }
            let model = train(spec, &train_set.select_rows(&rows), true)?;
            (all_test.clone(), predict_proba(&model, test)?.y_hat, rows)
        }
        ProbeCondition::Separate => {
            let test_membership = contrast.membership(test)?;
            let mut eval_rows: Vec<usize> = all_test
                .iter()
                .copied()
                .filter(|&r| test_membership[r].is_some())
                .collect();
            eval_rows.sort_unstable();
            let mut decisions = vec![0u8; test.n_rows()];
            let mut train_rows = Vec::new();
            for z in [true, false] {
                let tr: Vec<usize> = all_train
                    .iter()
                    .copied()
                    .filter(|&r| train_membership[r] == Some(z))
                    .collect();
                let te: Vec<usize> = eval_rows
                    .iter()
                    .copied()
                    .filter(|&r| test_membership[r] == Some(z))
                    .collect();
                if tr.is_empty() || te.is_empty() {
                    let label = if z {
                        contrast.treated_label()
                    } else {
                        contrast.control_label()
                    };
                    return Err(Error::MissingGroup(label));
                }
                let model = train_with(spec, &train_set.select_rows(&tr), &ColumnSelection::all(false))?;
                let p = predict_proba(&model, &test.select_rows(&te))?;
                for (&r, &d) in te.iter().zip(&p.y_hat) {
                    decisions[r] = d;
                }
                train_rows.extend(tr);
            }
            train_rows.sort_unstable();
            let d = eval_rows.iter().map(|&r| decisions[r]).collect();
            (eval_rows, d, train_rows)
        }
        ProbeCondition::Strat {
            stratum,
            asa_column,
            emergency_column,
        } => {
            let strata = stratify_asa(test, asa_column, emergency_column)?;
            let rows = strata[stratum].clone();
            if rows.is_empty() {
                return Err(Error::EmptyStratum(stratum.to_string()));
            }
            let all = predict_proba(w.unwrap(), test)?.y_hat;
            let d = rows.iter().map(|&r| all[r]).collect();
            (rows, d, all_train)
        }
    };

    let rates = evaluate_decisions(test, contrast, &rows, &decisions, settings)?;
    let (estimates, differences) = rates.summarize(&condition.label());
    let test_membership = contrast.membership(test)?;
    Ok(ProbeResult {
        condition: condition.clone(),
        learner: spec.family.name().to_string(),
        outcome: test.schema.outcome_name().to_string(),
        contrast: contrast.clone(),
        replicates: settings.replicates,
        estimates,
        differences,
        group_sizes: group_sizes(&test_membership, &rows, contrast),
        n_evaluated: rows.len(),
        train_group_sizes: group_sizes(&train_membership, &train_rows, contrast),
        notes,
    })
}

pub fn run_probe(
    condition: &ProbeCondition,
    spec: &LearnerSpec,
    train_set: &Dataset,
    test: &Dataset,
    contrast: &Contrast,
    settings: &ProbeSettings,
) -> Result<ProbeResult> {
    run_probe_with(condition, spec, train_set, test, contrast, settings, None)
}

/// Runs several conditions, training the W model at most once. Results
/// keep the order of `conditions`.
pub fn run_probes(
    conditions: &[ProbeCondition],
    spec: &LearnerSpec,
    train_set: &Dataset,
    test: &Dataset,
    contrast: &Contrast,
    settings: &ProbeSettings,
) -> Result<Vec<ProbeResult>> {
    let w = if conditions.iter().any(ProbeCondition::uses_w_model) {
        Some(train(spec, train_set, true)?)
    } else {
        None
    };
    conditions
        .iter()
        .map(|c| run_probe_with(c, spec, train_set, test, contrast, settings, w.as_ref()))
        .collect()
}

/// One row of the bias panel: ΔPPR(treated − control) under a condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub condition: String,
    pub learner: String,
    pub delta_mean: Option<f64>,
    pub delta_ci_low: Option<f64>,
    pub delta_ci_high: Option<f64>,
    pub n_defined: usize,
}

pub fn bias_panel(results: &[ProbeResult]) -> Result<Vec<PanelRow>> {
    let Some(first) = results.first() else {
        return Ok(Vec::new());
    };
    let mut rows = Vec::new();
    for r in results {
        if r.contrast != first.contrast || r.outcome != first.outcome {
            return Err(Error::InvalidParameter(
                "bias panel needs results sharing one contrast and outcome".into(),
            ));
        }
        let d = r
            .difference(Metric::PPR)
            .ok_or_else(|| Error::InvalidParameter(format!("condition {} was not evaluated for PPR", r.label())))?;
        rows.push(PanelRow {
            condition: r.label(),
            learner: r.learner.clone(),
            delta_mean: d.delta_mean,
            delta_ci_low: d.delta_ci_low,
            delta_ci_high: d.delta_ci_high,
            n_defined: d.n_defined,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{CostPair, Family};
    use crate::synthgen::{generate, FeatureSpec, GeneratorConfig, GroupSpec, OutcomeSpec, SensitiveSpec};

    fn cohort(n: usize, seed: u64, copy_z: bool) -> Dataset {
        let mut features = vec![FeatureSpec::Continuous {
            name: "x".into(),
            mean: 0.0,
            sd: 1.0,
            range: [-5.0, 5.0],
            group_shifts: Default::default(),
        }];
        if copy_z {
            features.push(FeatureSpec::Categorical {
                name: "zcopy".into(),
                categories: vec!["0".into(), "1".into()],
                probabilities: vec![0.5, 0.5],
                group_probabilities: [("z=1".to_string(), vec![0.0, 1.0]), ("z=0".to_string(), vec![1.0, 0.0])]
                    .into_iter()
                    .collect(),
            });
        }
        let cfg = GeneratorConfig {
            n,
            seed,
            sensitive: vec![SensitiveSpec {
                name: "z".into(),
                groups: vec![
                    GroupSpec {
                        code: "1".into(),
                        fraction: 0.4,
                    },
                    GroupSpec {
                        code: "0".into(),
                        fraction: 0.6,
                    },
                ],
            }],
            features,
            surrogates: vec![],
            outcome: OutcomeSpec {
                name: "y".into(),
                intercept: -0.5,
                target_rate: None,
                coefficients: [("x".to_string(), 1.5)].into_iter().collect(),
                category_effects: Default::default(),
                group_effects: [("z=1".to_string(), 0.8)].into_iter().collect(),
            },
        };
        let d = generate(&cfg, &[]).unwrap();
        crate::dataset::preprocess(&d).unwrap().0
    }

    fn spec() -> LearnerSpec {
        LearnerSpec::new(Family::logistic(), CostPair::new(1.0, 1.0).unwrap(), 1)
    }

    fn contrast() -> Contrast {
        Contrast::new("z", "1", "0")
    }

    #[test]
    fn swap_twice_is_identity() {
        let d = cohort(600, 2, false);
        let model = train(&spec(), &d, true).unwrap();
        let c = contrast();
        let twice = c.swap(&c.swap(&d).unwrap()).unwrap();
        assert_eq!(
            predict_proba(&model, &d).unwrap(),
            predict_proba(&model, &twice).unwrap()
        );
    }

    #[test]
    fn swap_negates_ppr_gap_of_z_only_model() {
        let train_set = cohort(1500, 3, false);
        let test = cohort(800, 4, false);
        let settings = ProbeSettings::new(50, 9);
        let rs = run_probes(
            &[ProbeCondition::W, ProbeCondition::Swap],
            &spec(),
            &train_set,
            &test,
            &contrast(),
            &settings,
        )
        .unwrap();
        let w = rs[0].difference(Metric::PPR).unwrap();
        let s = rs[1].difference(Metric::PPR).unwrap();
        assert!(w.delta_mean.unwrap() > 0.0);
        assert!(s.delta_mean.unwrap() < 0.0);
        assert_eq!(rs[1].estimates[0].condition, "SWAP");
    }

    #[test]
    fn without_model_ignores_z() {
        let train_set = cohort(800, 5, false);
        let test = cohort(300, 6, false);
        let c = contrast();
        let settings = ProbeSettings::new(20, 1);
        let plain = run_probe(&ProbeCondition::Without, &spec(), &train_set, &test, &c, &settings).unwrap();
        let swapped = run_probe(
            &ProbeCondition::Without,
            &spec(),
            &train_set,
            &c.swap(&test).unwrap(),
            &c,
            &settings,
        )
        .unwrap();
        // Swapping relabels groups, so the rates of the two groups trade places.
        let ppr = |r: &ProbeResult, g: &str| {
            r.estimates
                .iter()
                .find(|e| e.metric == Metric::PPR && e.group == g)
                .unwrap()
                .mean
        };
        assert_eq!(ppr(&plain, "ALL"), ppr(&swapped, "ALL"));
        let model = train(&spec(), &train_set, false).unwrap();
        let a = predict_proba(&model, &test).unwrap().p_hat;
        let b = predict_proba(&model, &c.swap(&test).unwrap()).unwrap().p_hat;
        assert_eq!(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn downsample_equalizes_groups() {
        let x: Vec<f64> = (0..140).map(|i| (i % 10) as f64 / 10.0).collect();
        let sex: Vec<&str> = (0..140).map(|i| if i < 100 { "M" } else { "F" }).collect();
        let y: Vec<u8> = (0..140).map(|i| (i % 3 == 0) as u8).collect();
        let d = crate::dataset::fixtures::tiny(&x, &sex, &y);
        let rows = downsample_rows(&d, &Contrast::new("sex", "F", "M"), 4).unwrap();
        assert_eq!(rows.len(), 80);
        assert_eq!(rows.iter().filter(|&&r| r >= 100).count(), 40);
        let again = downsample_rows(&d, &Contrast::new("sex", "F", "M"), 4).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn downsample_probe_trains_on_equal_groups() {
        let train_set = cohort(1000, 7, false);
        let test = cohort(300, 8, false);
        let r = run_probe(
            &ProbeCondition::Downsample,
            &spec(),
            &train_set,
            &test,
            &contrast(),
            &ProbeSettings::new(10, 1),
        )
        .unwrap();
        assert_eq!(r.train_group_sizes["z=1"], r.train_group_sizes["z=0"]);
        assert_eq!(r.train_group_sizes[OTHER_GROUP], 0);
    }

    #[test]
    fn group_sizes_sum_to_evaluated() {
        let train_set = cohort(800, 9, false);
        let test = cohort(400, 10, false);
        for cond in [ProbeCondition::W, ProbeCondition::Separate, ProbeCondition::psm()] {
            let r = run_probe(
                &cond,
                &spec(),
                &train_set,
                &test,
                &contrast(),
                &ProbeSettings::new(10, 1),
            )
            .unwrap();
            assert_eq!(r.group_sizes.values().sum::<usize>(), r.n_evaluated, "{}", cond.tag());
            if cond.tag() == "PSM" {
                assert_eq!(r.group_sizes["z=1"], r.group_sizes["z=0"]);
            }
        }
    }

    #[test]
    fn perfect_surrogate_leaves_every_treated_unit_unmatched() {
        let test = cohort(400, 11, true);
        let m = psm_sample(&test, &contrast(), &[], DEFAULT_CALIPER, 1).unwrap();
        assert_eq!(m.unmatched_fraction, 1.0);
        let train_set = cohort(400, 12, true);
        let err = run_probe(
            &ProbeCondition::psm(),
            &spec(),
            &train_set,
            &test,
            &contrast(),
            &ProbeSettings::new(10, 1),
        );
        assert!(matches!(err, Err(Error::NoMatches)));
    }

    #[test]
    fn condition_json() {
        let c: ProbeCondition = serde_json::from_str(
            r#"{"tag":"STRAT","stratum":"ASA2_NE","asa_column":"asa","emergency_column":"emergency"}"#,
        )
        .unwrap();
        assert_eq!(c.label(), "STRAT:ASA2_NE");
        let p: ProbeCondition = serde_json::from_str(r#"{"tag":"PSM"}"#).unwrap();
        assert_eq!(p, ProbeCondition::psm());
        assert_eq!(
            serde_json::to_string(&ProbeCondition::Swap).unwrap(),
            r#"{"tag":"SWAP"}"#
        );
    }

    #[test]
    fn panel_rejects_mixed_contrasts() {
        let train_set = cohort(600, 13, false);
        let test = cohort(300, 14, false);
        let settings = ProbeSettings::new(10, 1);
        let mut rs = run_probes(&[ProbeCondition::W], &spec(), &train_set, &test, &contrast(), &settings).unwrap();
        let panel = bias_panel(&rs).unwrap();
        assert_eq!(panel.len(), 1);
        let mut other = rs[0].clone();
        other.contrast = Contrast::new("z", "0", "1");
        rs.push(other);
        assert!(bias_panel(&rs).is_err());
    }
}
