//! Per-patient weighted utility of a risk model, the gain of a full model
//! over a basic one, and a pruned regression tree that explains where the
//! gain lands.

mod render;
mod tree;

pub use render::{render_guide, Dictionary, Guide};
pub use tree::{fit_regression_tree, fit_utility_tree, TreeSettings, UtilityNode, UtilityTree};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, Dataset, FeatureSchema};
use crate::design::{ColumnSelection, DesignEncoder, FeatureSource, Matrix};
use crate::error::{Error, Result};
use crate::learners::{predict_proba, Family, TrainedModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    pub w1: f64,
    pub w2: f64,
}

impl UtilityWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        let w = UtilityWeights { w1, w2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w1 > 0.0 && self.w2 > 0.0 && self.w1.is_finite() && self.w2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "utility weights must be positive, got ({}, {})",
                self.w1, self.w2
            )));
        }
        Ok(())
    }

    pub fn max(&self) -> f64 {
        self.w1.max(self.w2)
    }
}

/// `w1 * y * p + w2 * (1 - y) * (1 - p)`
pub fn individual_utility(y: u8, p_hat: f64, w: UtilityWeights) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_hat));
    if y == 1 {
        w.w1 * p_hat
    } else {
        w.w2 * (1.0 - p_hat)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityRecord {
    pub row: usize,
    pub y: u8,
    pub p_full: f64,
    pub p_basic: f64,
    pub iu_full: f64,
    pub iu_basic: f64,
    pub iu_diff: f64,
}

/// Utility records with the feature matrix the guide tree splits on.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityRecords {
    pub records: Vec<UtilityRecord>,
    pub features: Vec<FeatureSource>,
    pub x: Matrix,
}

impl UtilityRecords {
    pub fn diffs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.iu_diff).collect()
    }

    /// Maps continuous features scaled to [0,1] back to the plausible range
    /// of `original`, so split thresholds read in clinical units.
    pub fn to_original_units(&mut self, original: &FeatureSchema) {
        for (j, f) in self.features.iter().enumerate() {
            let FeatureSource::Continuous { column } = f else {
                continue;
            };
            let Some([lo, hi]) = original.column(column).and_then(|c| c.plausible_range) else {
                continue;
            };
            for i in 0..self.x.rows() {
                let v = self.x.get(i, j);
                self.x.row_mut(i)[j] = lo + v * (hi - lo);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardSettings {
    pub weights: UtilityWeights,
    /// Exact source columns of the basic model.
    pub basic_columns: Vec<String>,
    /// Allows non-logistic families, whose probabilities may be poorly
    /// calibrated.
    #[serde(default)]
    pub allow_uncalibrated: bool,
}

/// Scores both models on `test` and records per-row utilities. Tree
/// features are every non-outcome column of `test`, sensitive included.
pub fn utility_table(
    full: &TrainedModel,
    basic: &TrainedModel,
    test: &Dataset,
    settings: &CardSettings,
) -> Result<UtilityRecords> {
    settings.weights.validate()?;
    let have: BTreeSet<String> = basic.encoder.source_columns().into_iter().collect();
    let want: BTreeSet<String> = settings.basic_columns.iter().cloned().collect();
    if have != want {
        return Err(Error::FeatureMismatch(format!(
            "basic model uses {:?}, expected {:?}",
            have, want
        )));
    }
    if full.spec.family.name() != basic.spec.family.name() {
        return Err(Error::InvalidParameter(
            "full and basic models must share a family".into(),
        ));
    }
    if !matches!(full.spec.family, Family::Logistic(_)) && !settings.allow_uncalibrated {
        return Err(Error::InvalidParameter(format!(
            "{} probabilities may be uncalibrated; set allow_uncalibrated to use them",
            full.spec.family.name()
        )));
    }
    let pf = predict_proba(full, test)?.p_hat;
    let pb = predict_proba(basic, test)?.p_hat;
    let w = settings.weights;
    let records = test
        .labels()
        .iter()
        .enumerate()
        .map(|(row, &y)| {
            let iu_full = individual_utility(y, pf[row], w);
            let iu_basic = individual_utility(y, pb[row], w);
            UtilityRecord {
                row,
                y,
                p_full: pf[row],
                p_basic: pb[row],
                iu_full,
                iu_basic,
                iu_diff: iu_full - iu_basic,
            }
        })
        .collect();
    let encoder = DesignEncoder::build(test, &ColumnSelection::all(true))?;
    debug_assert!(!encoder.uses_kind(&test.schema, ColumnKind::Audit));
    Ok(UtilityRecords {
        records,
        x: encoder.encode(test)?,
        features: encoder.features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{train_with, CostPair, LearnerSpec};

    #[test]
    fn unit_values() {
        let w = UtilityWeights::new(25.0, 1.0).unwrap();
        assert_eq!(individual_utility(1, 1.0, w), 25.0);
        assert_eq!(individual_utility(0, 0.0, w), 1.0);
        let w14 = UtilityWeights::new(14.0, 1.0).unwrap();
        assert!((individual_utility(1, 0.6, w14) - 8.4).abs() <= 1e-12);
        let diff = individual_utility(1, 0.9, w) - individual_utility(1, 0.5, w);
        assert!((diff - 10.0).abs() <= 1e-12);
        let diff = individual_utility(0, 0.2, w) - individual_utility(0, 0.4, w);
        assert!((diff - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn rejects_non_positive_weights() {
        assert!(UtilityWeights::new(0.0, 1.0).is_err());
    }

    #[test]
    fn identical_models_have_zero_gain_and_basic_set_is_checked() {
        let x: Vec<f64> = (0..60).map(|i| i as f64 / 60.0).collect();
        let sex: Vec<&str> = (0..60).map(|i| if i % 2 == 0 { "F" } else { "M" }).collect();
        let y: Vec<u8> = (0..60).map(|i| u8::from(i % 5 == 0 || i > 45)).collect();
        let d = crate::dataset::fixtures::tiny(&x, &sex, &y);
        let spec = LearnerSpec::new(Family::logistic(), CostPair::new(1.0, 1.0).unwrap(), 0);
        let sel = ColumnSelection {
            include_sensitive: true,
            only: Some(vec!["x".into(), "sex".into()]),
            exclude: vec![],
        };
        let m = train_with(&spec, &d, &sel).unwrap();
        let settings = CardSettings {
            weights: UtilityWeights::new(25.0, 1.0).unwrap(),
            basic_columns: vec!["sex".into(), "x".into()],
            allow_uncalibrated: false,
        };
        let t = utility_table(&m, &m, &d, &settings).unwrap();
        assert!(t.records.iter().all(|r| r.iu_diff == 0.0));
        assert!(t.records.iter().all(|r| (0.0..=25.0).contains(&r.iu_full)));
        let wrong = CardSettings {
            basic_columns: vec!["x".into()],
            ..settings
        };
        assert!(matches!(
            utility_table(&m, &m, &d, &wrong),
            Err(Error::FeatureMismatch(_))
        ));
    }
}
