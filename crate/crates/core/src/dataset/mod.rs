//! Tabular cohorts: schema, ingestion, preprocessing and outcome helpers.

mod csv_io;
mod preprocess;
mod schema;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, write_csv};
pub use preprocess::{preprocess, ColumnReport, PreprocessReport, Preprocessor, MISSING_CODE};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema};
pub use split::split;

/// Cell storage for one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Column {
    /// Continuous values; missing cells hold NaN.
    Numeric(Vec<f64>),
    /// Text codes; missing cells hold the empty string.
    Codes(Vec<String>),
    /// The binary outcome.
    Labels(Vec<u8>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Codes(v) => v.len(),
            Column::Labels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Codes(v) => Column::Codes(rows.iter().map(|&i| v[i].clone()).collect()),
            Column::Labels(v) => Column::Labels(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Ingested,
    Synthetic,
}

/// A cohort of `m` records laid out column-wise in schema order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    columns: Vec<Column>,
    missing: Vec<Vec<bool>>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset from schema-ordered columns. Missing cells are
    /// inferred from NaN / empty codes.
    pub fn new(schema: FeatureSchema, columns: Vec<Column>, provenance: Provenance) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.columns.len() {
            return Err(Error::Data(format!(
                "expected {} columns, got {}",
                schema.columns.len(),
                columns.len()
            )));
        }
        let m = columns.first().map(Column::len).unwrap_or(0);
        if m == 0 {
            return Err(Error::Empty);
        }
        let mut missing = Vec::with_capacity(columns.len());
        for (spec, col) in schema.columns.iter().zip(&columns) {
            if col.len() != m {
                return Err(Error::Data(format!(
                    "column `{}` has {} rows, expected {m}",
                    spec.name,
                    col.len()
                )));
            }
            let mask = match (spec.kind, col) {
                (ColumnKind::Continuous, Column::Numeric(v)) => v.iter().map(|x| !x.is_finite()).collect(),
                (ColumnKind::BinaryOutcome, Column::Labels(v)) => {
                    if let Some(bad) = v.iter().find(|&&y| y > 1) {
                        return Err(Error::Data(format!("label {bad} is not in {{0,1}}")));
                    }
                    vec![false; m]
                }
                (kind, Column::Codes(v)) if spec.is_coded() => {
                    let _ = kind;
                    v.iter().map(|c| c.is_empty()).collect()
                }
                _ => {
                    return Err(Error::Data(format!(
                        "column `{}` storage does not match kind {:?}",
                        spec.name, spec.kind
                    )))
                }
            };
            missing.push(mask);
        }
        Ok(Dataset {
            schema,
            columns,
            missing,
            provenance,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::FeatureMismatch(format!("no column `{name}`")))?;
        Ok(&self.columns[idx])
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            _ => Err(Error::FeatureMismatch(format!("column `{name}` is not continuous"))),
        }
    }

    pub fn codes(&self, name: &str) -> Result<&[String]> {
        match self.column(name)? {
            Column::Codes(v) => Ok(v),
            _ => Err(Error::FeatureMismatch(format!("column `{name}` is not coded"))),
        }
    }

    pub fn labels(&self) -> &[u8] {
        match &self.columns[self.schema.outcome_index()] {
            Column::Labels(v) => v,
            _ => unreachable!("outcome column always stores labels"),
        }
    }

    pub fn missing_mask(&self, name: &str) -> Option<&[bool]> {
        self.schema.index_of(name).map(|i| self.missing[i].as_slice())
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().flatten().filter(|&&m| m).count()
    }

    /// Rows in the given order; indices may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            missing: self
                .missing
                .iter()
                .map(|m| rows.iter().map(|&i| m[i]).collect())
                .collect(),
            provenance: self.provenance,
        }
    }

    /// Replaces one coded column, keeping everything else.
    pub fn with_codes(&self, name: &str, codes: Vec<String>) -> Result<Dataset> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::FeatureMismatch(format!("no column `{name}`")))?;
        if !self.schema.columns[idx].is_coded() || codes.len() != self.n_rows() {
            return Err(Error::FeatureMismatch(format!(
                "cannot replace column `{name}` with {} codes",
                codes.len()
            )));
        }
        let mut out = self.clone();
        out.missing[idx] = codes.iter().map(|c| c.is_empty()).collect();
        out.columns[idx] = Column::Codes(codes);
        Ok(out)
    }

    pub(crate) fn from_parts(
        schema: FeatureSchema,
        columns: Vec<Column>,
        missing: Vec<Vec<bool>>,
        provenance: Provenance,
    ) -> Dataset {
        Dataset {
            schema,
            columns,
            missing,
            provenance,
        }
    }

    pub(crate) fn missing_masks(&self) -> &[Vec<bool>] {
        &self.missing
    }
}

/// A binary comparison on one sensitive column: `treated` is Z=1,
/// `control` is Z=0. Rows holding any other code belong to neither group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contrast {
    pub column: String,
    pub treated: String,
    pub control: String,
}

impl Contrast {
    pub fn new(column: &str, treated: &str, control: &str) -> Self {
        Contrast {
            column: column.to_string(),
            treated: treated.to_string(),
            control: control.to_string(),
        }
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let col = schema
            .column(&self.column)
            .ok_or_else(|| Error::Config(format!("contrast column `{}` not in schema", self.column)))?;
        if col.kind != ColumnKind::Sensitive {
            return Err(Error::Config(format!(
                "contrast column `{}` is not a sensitive column",
                self.column
            )));
        }
        if self.treated == self.control {
            return Err(Error::Config("contrast compares a code with itself".into()));
        }
        if let Some(cats) = &col.categories {
            for code in [&self.treated, &self.control] {
                if !cats.contains(code) {
                    return Err(Error::Config(format!(
                        "code `{code}` is not a category of `{}`",
                        self.column
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-row Z: `Some(true)` treated, `Some(false)` control.
    pub fn membership(&self, data: &Dataset) -> Result<Vec<Option<bool>>> {
        let codes = data.codes(&self.column)?;
        Ok(codes
            .iter()
            .map(|c| {
                if *c == self.treated {
                    Some(true)
                } else if *c == self.control {
                    Some(false)
                } else {
                    None
                }
            })
            .collect())
    }

    pub fn treated_label(&self) -> String {
        format!("{}={}", self.column, self.treated)
    }

    pub fn control_label(&self) -> String {
        format!("{}={}", self.column, self.control)
    }

    /// Exchanges the two contrast codes; other codes are left alone.
    pub fn swap(&self, data: &Dataset) -> Result<Dataset> {
        let swapped = data
            .codes(&self.column)?
            .iter()
            .map(|c| {
                if *c == self.treated {
                    self.control.clone()
                } else if *c == self.control {
                    self.treated.clone()
                } else {
                    c.clone()
                }
            })
            .collect();
        data.with_codes(&self.column, swapped)
    }
}

/// KDIGO creatinine rule: positive when the 48 h maximum rises at least
/// 0.3 mg/dL or reaches 1.5x the baseline.
pub fn aki_label(baseline_cr: f64, max_cr_48h: f64) -> Result<u8> {
    if !(baseline_cr > 0.0 && max_cr_48h > 0.0) || !baseline_cr.is_finite() || !max_cr_48h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "creatinine values must be positive, got ({baseline_cr}, {max_cr_48h})"
        )));
    }
    // Small slack so decimal inputs like 1.3 - 1.0 hit the boundary.
    const EPS: f64 = 1e-9;
    let absolute = max_cr_48h - baseline_cr >= 0.3 - EPS;
    let relative = max_cr_48h >= 1.5 * baseline_cr - EPS;
    Ok(u8::from(absolute || relative))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Small preprocessed-looking cohort: x in [0,1], sex codes, labels.
    pub fn tiny(x: &[f64], sex: &[&str], y: &[u8]) -> Dataset {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::continuous("x", 0.0, 1.0),
            ColumnSpec::sensitive("sex", &["F", "M"]),
            ColumnSpec::outcome("y"),
        ])
        .unwrap();
        Dataset::new(
            schema,
            vec![
                Column::Numeric(x.to_vec()),
                Column::Codes(sex.iter().map(|s| s.to_string()).collect()),
                Column::Labels(y.to_vec()),
            ],
            Provenance::Synthetic,
        )
        .unwrap()
    }
}
