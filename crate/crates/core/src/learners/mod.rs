//! Cost-sensitive binary classifiers sharing one training and prediction
//! surface.

pub mod boosting;
pub mod cart;
pub mod forest;
pub mod logistic;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, Dataset};
use crate::design::{ColumnSelection, DesignEncoder, Matrix};
use crate::error::{Error, Result};

use self::boosting::StumpEnsemble;
use self::cart::{ClassTree, GrowSettings, Sample};
use self::logistic::{DescentSettings, LogisticObjective};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Misclassification costs: `c_neg` for a false positive, `c_pos` for a
/// false negative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPair {
    pub c_neg: f64,
    pub c_pos: f64,
}

impl CostPair {
    pub fn new(c_neg: f64, c_pos: f64) -> Result<Self> {
        let c = CostPair { c_neg, c_pos };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_neg > 0.0 && self.c_pos > 0.0 && self.c_neg.is_finite() && self.c_pos.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "costs must be positive, got ({}, {})",
                self.c_neg, self.c_pos
            )))
        }
    }

    /// Instance weights indexed by label.
    pub fn class_weights(&self) -> [f64; 2] {
        [self.c_neg, self.c_pos]
    }
}

impl Default for CostPair {
    fn default() -> Self {
        CostPair { c_neg: 1.0, c_pos: 1.0 }
    }
}

/// Expected-cost-minimising threshold for calibrated probabilities.
pub fn cost_threshold(costs: CostPair) -> f64 {
    costs.c_neg / (costs.c_neg + costs.c_pos)
}

/// How costs enter a model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// Class-weighted loss/impurity, decisions at 0.5.
    #[default]
    InstanceWeights,
    /// Unweighted fit, decisions at [`cost_threshold`].
    Threshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: 1e-4,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 20,
            min_samples_split: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            min_samples_split: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub shrinkage: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_rounds: 200,
            shrinkage: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "hyperparameters", rename_all = "snake_case")]
pub enum Family {
    Logistic(LogisticParams),
    Tree(TreeParams),
    Forest(ForestParams),
    GbStumps(BoostParams),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Logistic(_) => "logistic",
            Family::Tree(_) => "tree",
            Family::Forest(_) => "forest",
            Family::GbStumps(_) => "gb_stumps",
        }
    }

    pub fn logistic() -> Self {
        Family::Logistic(LogisticParams::default())
    }

    pub fn tree() -> Self {
        Family::Tree(TreeParams::default())
    }

    pub fn forest() -> Self {
        Family::Forest(ForestParams::default())
    }

    pub fn gb_stumps() -> Self {
        Family::GbStumps(BoostParams::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    #[serde(flatten)]
    pub family: Family,
    pub costs: CostPair,
    #[serde(default)]
    pub cost_mode: CostMode,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(family: Family, costs: CostPair, seed: u64) -> Self {
        LearnerSpec {
            family,
            costs,
            cost_mode: CostMode::InstanceWeights,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.costs.validate()?;
        let ok = match self.family {
            Family::Logistic(p) => p.l2 >= 0.0 && p.max_iter > 0 && p.tol > 0.0,
            Family::Tree(p) => p.max_depth > 0 && p.min_samples_split >= 2,
            Family::Forest(p) => p.n_trees > 0 && p.min_samples_split >= 2,
            Family::GbStumps(p) => p.n_rounds > 0 && p.shrinkage > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid {} hyperparameters",
                self.family.name()
            )))
        }
    }

    pub fn class_weights(&self) -> [f64; 2] {
        match self.cost_mode {
            CostMode::InstanceWeights => self.costs.class_weights(),
            CostMode::Threshold => [1.0, 1.0],
        }
    }

    pub fn decision_threshold(&self) -> f64 {
        match self.cost_mode {
            CostMode::InstanceWeights => 0.5,
            CostMode::Threshold => cost_threshold(self.costs),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic { intercept: f64, coefficients: Vec<f64> },
    Tree { tree: ClassTree },
    Forest { trees: Vec<ClassTree> },
    GbStumps { ensemble: StumpEnsemble },
}

impl ModelParams {
    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let p = match self {
            ModelParams::Logistic {
                intercept,
                coefficients,
            } => logistic::sigmoid(intercept + row.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>()),
            ModelParams::Tree { tree } => tree.predict(row),
            ModelParams::Forest { trees } => forest::predict(trees, row),
            ModelParams::GbStumps { ensemble } => ensemble.predict(row),
        };
        p.clamp(0.0, 1.0)
    }
}

/// A fitted classifier together with the encoding it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: LearnerSpec,
    pub encoder: DesignEncoder,
    pub params: ModelParams,
    pub decision_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector {
    pub p_hat: Vec<f64>,
    pub y_hat: Vec<u8>,
}

impl PredictionVector {
    pub fn from_probabilities(p_hat: Vec<f64>, threshold: f64) -> Self {
        let y_hat = p_hat.iter().map(|&p| u8::from(p >= threshold)).collect();
        PredictionVector { p_hat, y_hat }
    }
}

impl TrainedModel {
    pub fn feature_names(&self) -> Vec<String> {
        self.encoder.names()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.params.predict_row(x.row(i))).collect()
    }
}

/// Fits model parameters on `rows` of a prepared design matrix. Rows may
/// repeat (bootstrap resamples).
pub fn fit_rows(spec: &LearnerSpec, x: &Matrix, y: &[u8], rows: &[usize]) -> Result<ModelParams> {
    spec.validate()?;
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    let positives = rows.iter().filter(|&&r| y[r] == 1).count();
    if positives == 0 || positives == rows.len() {
        return Err(Error::SingleClass);
    }
    let cw = spec.class_weights();
    Ok(match spec.family {
        Family::Logistic(p) => {
            let weights = rows.iter().map(|&r| cw[y[r] as usize]).collect();
            let obj = LogisticObjective::new(x, y, rows, weights, p.l2).centered();
            let out = logistic::minimize(
                &obj,
                vec![0.0; x.cols() + 1],
                DescentSettings {
                    max_iter: p.max_iter,
                    tol: p.tol,
                },
            );
            let params = obj.uncentered(&out.params);
            ModelParams::Logistic {
                intercept: params[0],
                coefficients: params[1..].to_vec(),
            }
        }
        Family::Tree(p) => {
            let samples = rows
                .iter()
                .map(|&row| Sample {
                    row,
                    weight: cw[y[row] as usize],
                    count: 1,
                })
                .collect();
            let settings = GrowSettings {
                max_depth: Some(p.max_depth),
                min_samples_split: p.min_samples_split,
                max_features: None,
            };
            ModelParams::Tree {
                tree: cart::grow_tree(x, y, samples, settings, None),
            }
        }
        Family::Forest(p) => ModelParams::Forest {
            trees: forest::fit(x, y, rows, cw, p.n_trees, p.min_samples_split, spec.seed),
        },
        Family::GbStumps(p) => ModelParams::GbStumps {
            ensemble: boosting::fit(x, y, rows, cw, p.n_rounds, p.shrinkage).0,
        },
    })
}

/// Trains on every row of a preprocessed dataset. With
/// `include_sensitive == false` the sensitive columns never reach the
/// design matrix.
pub fn train(spec: &LearnerSpec, data: &Dataset, include_sensitive: bool) -> Result<TrainedModel> {
    train_with(spec, data, &ColumnSelection::all(include_sensitive))
}

pub fn train_with(spec: &LearnerSpec, data: &Dataset, selection: &ColumnSelection) -> Result<TrainedModel> {
    let encoder = DesignEncoder::build(data, selection)?;
    let x = encoder.encode(data)?;
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let params = fit_rows(spec, &x, data.labels(), &rows)?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: *spec,
        encoder,
        params,
        decision_threshold: spec.decision_threshold(),
    })
}

pub fn predict_proba(model: &TrainedModel, data: &Dataset) -> Result<PredictionVector> {
    for col in model.encoder.source_columns() {
        let Some(spec) = data.schema.column(&col) else {
            return Err(Error::FeatureMismatch(format!("dataset lacks column `{col}`")));
        };
        if matches!(spec.kind, ColumnKind::BinaryOutcome | ColumnKind::Audit) {
            return Err(Error::FeatureMismatch(format!("column `{col}` cannot be a feature")));
        }
    }
    let x = model.encoder.encode(data)?;
    Ok(PredictionVector::from_probabilities(
        model.predict_matrix(&x),
        model.decision_threshold,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::tiny;

    fn separable() -> Dataset {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let sex: Vec<&str> = (0..40).map(|i| if i % 3 == 0 { "F" } else { "M" }).collect();
        tiny(&x, &sex, &y)
    }

    fn all_specs() -> Vec<LearnerSpec> {
        let c = CostPair::new(1.0, 3.0).unwrap();
        vec![
            LearnerSpec::new(Family::logistic(), c, 1),
            LearnerSpec::new(Family::tree(), c, 1),
            LearnerSpec::new(
                Family::Forest(ForestParams {
                    n_trees: 15,
                    ..Default::default()
                }),
                c,
                1,
            ),
            LearnerSpec::new(
                Family::GbStumps(BoostParams {
                    n_rounds: 30,
                    ..Default::default()
                }),
                c,
                1,
            ),
        ]
    }

    #[test]
    fn cost_threshold_values() {
        assert!((cost_threshold(CostPair::new(1.0, 25.0).unwrap()) - 1.0 / 26.0).abs() < 1e-15);
        assert!((cost_threshold(CostPair::new(1.0, 14.0).unwrap()) - 1.0 / 15.0).abs() < 1e-15);
        assert_eq!(cost_threshold(CostPair::new(1.0, 1.0).unwrap()), 0.5);
        assert!(CostPair::new(0.0, 1.0).is_err());
    }

    #[test]
    fn separable_logistic_is_perfect() {
        let d = separable();
        let spec = LearnerSpec::new(Family::logistic(), CostPair::default(), 0);
        let m = train(&spec, &d, false).unwrap();
        let pv = predict_proba(&m, &d).unwrap();
        assert_eq!(pv.y_hat, d.labels());
    }

    #[test]
    fn single_class_is_rejected_for_every_family() {
        let d = tiny(&[0.1, 0.2, 0.3], &["F", "M", "F"], &[1, 1, 1]);
        for spec in all_specs() {
            assert!(matches!(train(&spec, &d, true), Err(Error::SingleClass)));
        }
    }

    #[test]
    fn deterministic_and_serialisable() {
        let d = separable();
        for spec in all_specs() {
            let a = train(&spec, &d, true).unwrap();
            let b = train(&spec, &d, true).unwrap();
            let ja = a.to_json().unwrap();
            assert_eq!(ja, b.to_json().unwrap());
            let back = TrainedModel::from_json(&ja).unwrap();
            assert_eq!(back, a);
            let pv = predict_proba(&a, &d).unwrap();
            assert!(pv.p_hat.iter().all(|p| (0.0..=1.0).contains(p)));
            for (p, y) in pv.p_hat.iter().zip(&pv.y_hat) {
                assert_eq!(*y == 1, *p >= a.decision_threshold);
            }
        }
    }

    #[test]
    fn zero_logistic_gives_half() {
        let d = separable();
        let spec = LearnerSpec::new(Family::logistic(), CostPair::default(), 0);
        let mut m = train(&spec, &d, false).unwrap();
        m.params = ModelParams::Logistic {
            intercept: 0.0,
            coefficients: vec![0.0],
        };
        let pv = predict_proba(&m, &d).unwrap();
        assert!(pv.p_hat.iter().all(|&p| p == 0.5));
        assert!(pv.y_hat.iter().all(|&y| y == 1));
    }

    #[test]
    fn spec_json_shape() {
        let spec = LearnerSpec::new(Family::forest(), CostPair::new(1.0, 25.0).unwrap(), 4);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"family\":\"forest\""), "{text}");
        let back: LearnerSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let partial: LearnerSpec = serde_json::from_str(
            r#"{"family":"gb_stumps","hyperparameters":{"n_rounds":5},"costs":{"c_neg":1,"c_pos":14},"seed":2}"#,
        )
        .unwrap();
        assert_eq!(
            partial.family,
            Family::GbStumps(BoostParams {
                n_rounds: 5,
                shrinkage: 0.1
            })
        );
    }
}
