use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("header is missing schema columns: {}", .0.join(", "))]
    HeaderMismatch(Vec<String>),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("continuous column `{0}` has no observed values to impute from")]
    NothingToImpute(String),
    #[error("dataset is empty")]
    Empty,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error("perfect separation of the sensitive feature; top features: {}", .features.join(", "))]
    Separation { features: Vec<String> },
    #[error("no treated unit found a control within the caliper")]
    NoMatches,
    #[error("group `{0}` is absent from the evaluated records")]
    MissingGroup(String),
    #[error("unknown ASA code `{0}`")]
    UnknownAsa(String),
    #[error("stratum {0} is empty")]
    EmptyStratum(String),
    #[error("outcome rate target {target} is unreachable; achieved {achieved:.4}")]
    InfeasibleRate { target: f64, achieved: f64 },
    #[error("missing dictionary entry for {0}")]
    MissingLabel(String),
    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the CLI: 2 config, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) | Error::InvalidParameter(_) => 2,
            Error::Separation { .. } | Error::InfeasibleRate { .. } => 4,
            _ => 3,
        }
    }
}
