//! Propensity of sensitive-group membership, caliper matching and
//! covariate balance.

mod balance;
mod matching;

use serde::{Deserialize, Serialize};

use crate::dataset::{Contrast, Dataset};
use crate::design::{ColumnSelection, DesignEncoder, Matrix};
use crate::error::{Error, Result};
use crate::learners::logistic::{self, sigmoid, DescentSettings, LogisticObjective};

pub use balance::{balance_smd, smd, BalanceReport, FeatureBalance, Smd};
pub use matching::{match_caliper, match_scores, MatchedSample};

const L2: f64 = 1e-4;
const SCORE_FLOOR: f64 = 1e-12;

/// Logistic regression of Z on the baseline features of the rows inside a
/// contrast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub contrast: Contrast,
    pub excluded: Vec<String>,
    pub encoder: DesignEncoder,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Dataset row of each scored record.
    pub rows: Vec<usize>,
    pub treated: Vec<bool>,
    /// e_i = P(Z=1 | X), strictly inside (0,1).
    pub scores: Vec<f64>,
    pub converged: bool,
}

/// Design matrix and Z labels for a propensity fit.
pub struct PropensityProblem {
    pub encoder: DesignEncoder,
    pub x: Matrix,
    pub z: Vec<u8>,
    pub rows: Vec<usize>,
}

impl PropensityProblem {
    pub fn new(data: &Dataset, contrast: &Contrast, exclusions: &[String]) -> Result<Self> {
        contrast.validate(&data.schema)?;
        let membership = contrast.membership(data)?;
        let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| membership[i].is_some()).collect();
        let z: Vec<u8> = rows.iter().map(|&i| u8::from(membership[i] == Some(true))).collect();
        let n1 = z.iter().filter(|&&v| v == 1).count();
        if n1 == 0 || n1 == z.len() {
            return Err(Error::Data(format!(
                "both `{}` and `{}` must be present to fit propensities",
                contrast.treated, contrast.control
            )));
        }
        let selection = ColumnSelection {
            include_sensitive: false,
            only: None,
            exclude: exclusions.to_vec(),
        };
        let encoder = DesignEncoder::build(data, &selection)?;
        let full = encoder.encode(data)?;
        let mut x = Matrix::zeros(rows.len(), encoder.len());
        for (k, &r) in rows.iter().enumerate() {
            x.row_mut(k).copy_from_slice(full.row(r));
        }
        Ok(PropensityProblem { encoder, x, z, rows })
    }

    /// Unweighted penalised log-loss over all contrast rows.
    pub fn objective<'a>(&'a self, all: &'a [usize]) -> LogisticObjective<'a> {
        LogisticObjective::new(&self.x, &self.z, all, vec![1.0; all.len()], L2)
    }

    /// Feature standard deviations over the scored rows.
    fn feature_sd(&self) -> Vec<f64> {
        let n = self.x.rows() as f64;
        (0..self.x.cols())
            .map(|j| {
                let col = self.x.column(j);
                let mean = col.iter().sum::<f64>() / n;
                (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect()
    }
}

/// Features ranked by |coefficient x feature sd|, largest first.
fn ranked_features(names: &[String], coefs: &[f64], sd: &[f64]) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = names
        .iter()
        .zip(coefs.iter().zip(sd))
        .map(|(n, (c, s))| (n.clone(), c * s))
        .collect();
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    ranked
}

pub fn fit_propensity(data: &Dataset, contrast: &Contrast, exclusions: &[String]) -> Result<PropensityModel> {
    fit(data, contrast, exclusions, true)
}

/// Like [`fit_propensity`] but keeps the (saturated) scores of a separated
/// fit instead of failing, so matching can report what it could not match.
pub fn fit_propensity_allowing_separation(
    data: &Dataset,
    contrast: &Contrast,
    exclusions: &[String],
) -> Result<PropensityModel> {
    fit(data, contrast, exclusions, false)
}

fn fit(data: &Dataset, contrast: &Contrast, exclusions: &[String], reject_separation: bool) -> Result<PropensityModel> {
    let problem = PropensityProblem::new(data, contrast, exclusions)?;
    let all: Vec<usize> = (0..problem.x.rows()).collect();
    let objective = problem.objective(&all).centered();
    let out = logistic::minimize(&objective, vec![0.0; problem.x.cols() + 1], DescentSettings::default());
    let params = objective.uncentered(&out.params);
    let intercept = params[0];
    let coefficients = params[1..].to_vec();
    let margins: Vec<f64> = (0..problem.x.rows())
        .map(|i| {
            intercept
                + problem
                    .x
                    .row(i)
                    .iter()
                    .zip(&coefficients)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        })
        .collect();

    // Complete separation: the linear predictor orders every treated row
    // strictly above (or below) every control row.
    let (mut t_min, mut t_max, mut c_min, mut c_max) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (m, &z) in margins.iter().zip(&problem.z) {
        if z == 1 {
            t_min = t_min.min(*m);
            t_max = t_max.max(*m);
        } else {
            c_min = c_min.min(*m);
            c_max = c_max.max(*m);
        }
    }
    if reject_separation && (t_min > c_max || t_max < c_min) {
        let ranked = ranked_features(&problem.encoder.names(), &coefficients, &problem.feature_sd());
        return Err(Error::Separation {
            features: ranked.into_iter().take(5).map(|(n, _)| n).collect(),
        });
    }

    let scores = margins
        .iter()
        .map(|&m| sigmoid(m).clamp(SCORE_FLOOR, 1.0 - SCORE_FLOOR))
        .collect();
    Ok(PropensityModel {
        contrast: contrast.clone(),
        excluded: exclusions.to_vec(),
        encoder: problem.encoder,
        intercept,
        coefficients,
        treated: problem.z.iter().map(|&z| z == 1).collect(),
        rows: problem.rows,
        scores,
        converged: out.converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateFlag {
    pub column: String,
    /// Balanced accuracy of Z predicted from this column alone.
    pub accuracy: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    /// Columns that on their own classify Z with balanced accuracy >= 0.95.
    pub flagged: Vec<SurrogateFlag>,
    /// The five largest standardized coefficients of the full fit, for
    /// review.
    pub top_coefficients: Vec<(String, f64)>,
}

pub const SURROGATE_ACCURACY: f64 = 0.95;

/// Screens each baseline column (including excluded ones) for near-
/// deterministic association with Z. Exclusion stays a caller decision.
pub fn detect_surrogates(model: &PropensityModel, data: &Dataset) -> Result<SurrogateReport> {
    let mut columns = model.encoder.source_columns();
    for c in &model.excluded {
        if !columns.contains(c) {
            columns.push(c.clone());
        }
    }
    let membership = model.contrast.membership(data)?;
    let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| membership[i].is_some()).collect();
    let z: Vec<u8> = rows.iter().map(|&i| u8::from(membership[i] == Some(true))).collect();
    let all: Vec<usize> = (0..rows.len()).collect();

    let mut flagged = Vec::new();
    for column in columns {
        let selection = ColumnSelection {
            include_sensitive: false,
            only: Some(vec![column.clone()]),
            exclude: Vec::new(),
        };
        let encoder = DesignEncoder::build(data, &selection)?;
        let full = encoder.encode(data)?;
        let mut x = Matrix::zeros(rows.len(), encoder.len());
        for (k, &r) in rows.iter().enumerate() {
            x.row_mut(k).copy_from_slice(full.row(r));
        }
        let obj = LogisticObjective::new(&x, &z, &all, vec![1.0; all.len()], L2).centered();
        let out = logistic::minimize(&obj, vec![0.0; x.cols() + 1], DescentSettings::default());
        let params = obj.uncentered(&out.params);
        let mut hits = [0usize; 2];
        let mut totals = [0usize; 2];
        for (i, &zi) in z.iter().enumerate() {
            let m = params[0] + x.row(i).iter().zip(&params[1..]).map(|(a, b)| a * b).sum::<f64>();
            let pred = u8::from(sigmoid(m) >= 0.5);
            totals[zi as usize] += 1;
            if pred == zi {
                hits[zi as usize] += 1;
            }
        }
        let accuracy = 0.5 * (hits[0] as f64 / totals[0] as f64 + hits[1] as f64 / totals[1] as f64);
        if accuracy >= SURROGATE_ACCURACY {
            flagged.push(SurrogateFlag {
                reason: format!(
                    "`{column}` alone predicts {} with balanced accuracy {accuracy:.3}",
                    model.contrast.column
                ),
                column,
                accuracy,
            });
        }
    }

    let problem_sd = {
        let problem = PropensityProblem::new(data, &model.contrast, &model.excluded)?;
        problem.feature_sd()
    };
    let top_coefficients = ranked_features(&model.encoder.names(), &model.coefficients, &problem_sd)
        .into_iter()
        .take(5)
        .collect();
    Ok(SurrogateReport {
        flagged,
        top_coefficients,
    })
}
