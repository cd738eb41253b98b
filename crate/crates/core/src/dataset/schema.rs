use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role a column plays in an audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    BinaryOutcome,
    Sensitive,
    /// Carried through for verification only; never enters a design matrix.
    Audit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn continuous(name: &str, min: f64, max: f64) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Continuous,
            plausible_range: Some([min, max]),
            categories: None,
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
            plausible_range: None,
            categories: Some(categories.iter().map(|c| c.to_string()).collect()),
        }
    }

    pub fn sensitive(name: &str, categories: &[&str]) -> Self {
        ColumnSpec {
            kind: ColumnKind::Sensitive,
            ..ColumnSpec::categorical(name, categories)
        }
    }

    pub fn outcome(name: &str) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::BinaryOutcome,
            plausible_range: None,
            categories: None,
        }
    }

    pub fn audit(name: &str) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Audit,
            plausible_range: None,
            categories: None,
        }
    }

    /// Columns whose cells are text codes rather than numbers.
    pub fn is_coded(&self) -> bool {
        matches!(
            self.kind,
            ColumnKind::Categorical | ColumnKind::Sensitive | ColumnKind::Audit
        )
    }
}

/// Ordered column layout of a cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSpec>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let schema = FeatureSchema { columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: FeatureSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for col in &self.columns {
            if col.name.is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
            }
            match (col.kind, col.plausible_range) {
                (ColumnKind::Continuous, None) => {
                    return Err(Error::Schema(format!(
                        "continuous column `{}` needs a plausible_range",
                        col.name
                    )))
                }
                (ColumnKind::Continuous, Some([lo, hi])) => {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(Error::Schema(format!(
                            "column `{}` has an invalid plausible_range [{lo}, {hi}]",
                            col.name
                        )));
                    }
                }
                (_, Some(_)) => {
                    return Err(Error::Schema(format!(
                        "plausible_range given for non-continuous column `{}`",
                        col.name
                    )))
                }
                _ => {}
            }
            if col.categories.is_some() && !col.is_coded() {
                return Err(Error::Schema(format!(
                    "categories given for column `{}` of kind {:?}",
                    col.name, col.kind
                )));
            }
        }
        let outcomes = self.of_kind(ColumnKind::BinaryOutcome).count();
        if outcomes != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one binary-outcome column, found {outcomes}"
            )));
        }
        if self.of_kind(ColumnKind::Sensitive).count() == 0 {
            return Err(Error::Schema("no sensitive column".into()));
        }
        Ok(())
    }

    pub fn of_kind(&self, kind: ColumnKind) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(move |c| c.kind == kind)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn outcome_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.kind == ColumnKind::BinaryOutcome)
            .expect("validated schema has an outcome column")
    }

    pub fn outcome_name(&self) -> &str {
        &self.columns[self.outcome_index()].name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Vec<ColumnSpec> {
        vec![
            ColumnSpec::continuous("age", 18.0, 100.0),
            ColumnSpec::sensitive("sex", &["1", "2"]),
            ColumnSpec::outcome("death"),
        ]
    }

    #[test]
    fn accepts_minimal_schema() {
        FeatureSchema::new(base()).unwrap();
    }

    #[test]
    fn rejects_two_outcomes() {
        let mut cols = base();
        cols.push(ColumnSpec::outcome("aki"));
        assert!(matches!(FeatureSchema::new(cols), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_missing_sensitive() {
        let cols = vec![ColumnSpec::continuous("age", 18.0, 100.0), ColumnSpec::outcome("death")];
        assert!(FeatureSchema::new(cols).is_err());
    }

    #[test]
    fn range_must_be_ordered_and_continuous_only() {
        let mut cols = base();
        cols[0].plausible_range = Some([5.0, 5.0]);
        assert!(FeatureSchema::new(cols).is_err());

        let mut cols = base();
        cols[1].plausible_range = Some([0.0, 1.0]);
        assert!(FeatureSchema::new(cols).is_err());

        let mut cols = base();
        cols[0].plausible_range = None;
        assert!(FeatureSchema::new(cols).is_err());
    }

    #[test]
    fn json_shape() {
        let schema = FeatureSchema::new(base()).unwrap();
        let text = serde_json::to_string(&schema).unwrap();
        assert!(text.contains("\"kind\":\"binary-outcome\""));
        let back: FeatureSchema = serde_json::from_str(&text).unwrap();
        assert_eq!(back, schema);
    }
}
