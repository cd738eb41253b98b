use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Column, ColumnKind, Dataset, FeatureSchema};
use crate::error::{Error, Result};

/// Reserved category for missing or out-of-dictionary codes.
pub const MISSING_CODE: &str = "MISSING";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnReport {
    pub out_of_range: usize,
    pub imputed: usize,
    pub remapped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub columns: BTreeMap<String, ColumnReport>,
    pub imputation_means: BTreeMap<String, f64>,
}

/// Frozen preprocessing state. Fit on the training partition, then apply
/// the same scaling and imputation means to any partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    schema: FeatureSchema,
    means: BTreeMap<String, f64>,
}

fn scale(x: f64, [lo, hi]: [f64; 2]) -> Option<f64> {
    (x.is_finite() && x >= lo && x <= hi).then(|| ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
}

impl Preprocessor {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let mut means = BTreeMap::new();
        for (spec, col) in data.schema.columns.iter().zip(data.columns()) {
            if let (ColumnKind::Continuous, Column::Numeric(v)) = (spec.kind, col) {
                let range = spec.plausible_range.expect("validated");
                let (sum, n) = v
                    .iter()
                    .filter_map(|&x| scale(x, range))
                    .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
                if n == 0 {
                    return Err(Error::NothingToImpute(spec.name.clone()));
                }
                means.insert(spec.name.clone(), sum / n as f64);
            }
        }
        Ok(Preprocessor {
            schema: data.schema.clone(),
            means,
        })
    }

    /// Schema after preprocessing: continuous ranges become [0,1] and
    /// coded dictionaries gain the reserved missing category.
    pub fn output_schema(&self) -> FeatureSchema {
        let mut schema = self.schema.clone();
        for col in &mut schema.columns {
            if col.kind == ColumnKind::Continuous {
                col.plausible_range = Some([0.0, 1.0]);
            }
            if let Some(cats) = &mut col.categories {
                if !cats.iter().any(|c| c == MISSING_CODE) {
                    cats.push(MISSING_CODE.to_string());
                }
            }
        }
        schema
    }

    pub fn transform(&self, data: &Dataset) -> Result<(Dataset, PreprocessReport)> {
        if data.schema != self.schema {
            return Err(Error::FeatureMismatch(
                "dataset schema differs from the fitted preprocessor".into(),
            ));
        }
        let mut report = PreprocessReport {
            imputation_means: self.means.clone(),
            ..Default::default()
        };
        let mut columns = Vec::with_capacity(data.columns().len());
        for (spec, col) in data.schema.columns.iter().zip(data.columns()) {
            let mut counts = ColumnReport::default();
            let out = match col {
                Column::Numeric(v) => {
                    let range = spec.plausible_range.expect("validated");
                    let mean = self.means[&spec.name];
                    Column::Numeric(
                        v.iter()
                            .map(|&x| match scale(x, range) {
                                Some(s) => s,
                                None => {
                                    if x.is_finite() {
                                        counts.out_of_range += 1;
                                    }
                                    counts.imputed += 1;
                                    mean
                                }
                            })
                            .collect(),
                    )
                }
                Column::Codes(v) => Column::Codes(
                    v.iter()
                        .map(|c| {
                            if c.is_empty() {
                                counts.imputed += 1;
                                MISSING_CODE.to_string()
                            } else if spec
                                .categories
                                .as_ref()
                                .is_some_and(|cats| c != MISSING_CODE && !cats.contains(c))
                            {
                                counts.remapped += 1;
                                MISSING_CODE.to_string()
                            } else {
                                c.clone()
                            }
                        })
                        .collect(),
                ),
                Column::Labels(v) => Column::Labels(v.clone()),
            };
            if spec.kind != ColumnKind::BinaryOutcome {
                report.columns.insert(spec.name.clone(), counts);
            }
            columns.push(out);
        }
        let missing = data.missing_masks().iter().map(|m| vec![false; m.len()]).collect();
        let out = Dataset::from_parts(self.output_schema(), columns, missing, data.provenance);
        Ok((out, report))
    }
}

/// Fits and applies preprocessing on the same data.
pub fn preprocess(data: &Dataset) -> Result<(Dataset, PreprocessReport)> {
    Preprocessor::fit(data)?.transform(data)
}
