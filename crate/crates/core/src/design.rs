//! Numeric design matrices built from a dataset's feature columns.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnKind, Dataset, FeatureSchema};
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged rows");
            m.row_mut(i).copy_from_slice(r);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Keeps the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            let src = self.row(i);
            for (k, &j) in cols.iter().enumerate() {
                out.data[i * cols.len() + k] = src[j];
            }
        }
        out
    }
}

/// Where a design column comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureSource {
    Continuous { column: String },
    Indicator { column: String, code: String },
}

impl FeatureSource {
    pub fn column(&self) -> &str {
        match self {
            FeatureSource::Continuous { column } | FeatureSource::Indicator { column, .. } => column,
        }
    }

    pub fn name(&self) -> String {
        match self {
            FeatureSource::Continuous { column } => column.clone(),
            FeatureSource::Indicator { column, code } => format!("{column}={code}"),
        }
    }
}

/// Which schema columns enter a design matrix.
#[derive(Clone, Debug, Default)]
pub struct ColumnSelection {
    pub include_sensitive: bool,
    /// Restrict to these columns; `None` means every feature column.
    pub only: Option<Vec<String>>,
    pub exclude: Vec<String>,
}

impl ColumnSelection {
    pub fn all(include_sensitive: bool) -> Self {
        ColumnSelection {
            include_sensitive,
            ..Default::default()
        }
    }
}

/// Column-to-feature mapping: continuous columns pass through, coded
/// columns expand to one indicator per category.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignEncoder {
    pub features: Vec<FeatureSource>,
}

impl DesignEncoder {
    pub fn build(data: &Dataset, selection: &ColumnSelection) -> Result<Self> {
        let schema = &data.schema;
        if let Some(only) = &selection.only {
            for name in only {
                if schema.index_of(name).is_none() {
                    return Err(Error::FeatureMismatch(format!("no column `{name}`")));
                }
            }
        }
        for name in &selection.exclude {
            if schema.index_of(name).is_none() {
                return Err(Error::FeatureMismatch(format!("no column `{name}` to exclude")));
            }
        }
        let mut features = Vec::new();
        for (spec, col) in schema.columns.iter().zip(data.columns()) {
            let wanted = match spec.kind {
                ColumnKind::Continuous | ColumnKind::Categorical => true,
                ColumnKind::Sensitive => selection.include_sensitive,
                ColumnKind::BinaryOutcome | ColumnKind::Audit => false,
            } && selection.only.as_ref().is_none_or(|o| o.contains(&spec.name))
                && !selection.exclude.contains(&spec.name);
            if !wanted {
                continue;
            }
            match col {
                Column::Numeric(_) => features.push(FeatureSource::Continuous {
                    column: spec.name.clone(),
                }),
                Column::Codes(codes) => {
                    let cats: Vec<String> = match &spec.categories {
                        Some(c) => c.clone(),
                        None => codes
                            .iter()
                            .filter(|c| !c.is_empty())
                            .cloned()
                            .collect::<BTreeSet<_>>()
                            .into_iter()
                            .collect(),
                    };
                    features.extend(cats.into_iter().map(|code| FeatureSource::Indicator {
                        column: spec.name.clone(),
                        code,
                    }));
                }
                Column::Labels(_) => unreachable!(),
            }
        }
        if features.is_empty() {
            return Err(Error::FeatureMismatch("no features selected".into()));
        }
        Ok(DesignEncoder { features })
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(FeatureSource::name).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Distinct source columns, in first-use order.
    pub fn source_columns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.features {
            if !out.iter().any(|c| c == f.column()) {
                out.push(f.column().to_string());
            }
        }
        out
    }

    pub fn uses_kind(&self, schema: &FeatureSchema, kind: ColumnKind) -> bool {
        self.features
            .iter()
            .any(|f| schema.column(f.column()).is_some_and(|c| c.kind == kind))
    }

    pub fn encode(&self, data: &Dataset) -> Result<Matrix> {
        let n = data.n_rows();
        let mut m = Matrix::zeros(n, self.features.len());
        for (j, f) in self.features.iter().enumerate() {
            match f {
                FeatureSource::Continuous { column } => {
                    let v = data.numeric(column)?;
                    for (i, &x) in v.iter().enumerate() {
                        if !x.is_finite() {
                            return Err(Error::Data(format!(
                                "column `{column}` has a missing cell; preprocess first"
                            )));
                        }
                        m.data[i * m.cols + j] = x;
                    }
                }
                FeatureSource::Indicator { column, code } => {
                    let v = data.codes(column)?;
                    for (i, c) in v.iter().enumerate() {
                        if c == code {
                            m.data[i * m.cols + j] = 1.0;
                        }
                    }
                }
            }
        }
        Ok(m)
    }
}
