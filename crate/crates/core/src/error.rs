use std::path::PathBuf;

use thiserror::Error;

use crate::dsl::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("undeclared column `{column}`: {detail}")]
    UndeclaredColumn { column: String, detail: &'static str },

    #[error("missing label column `{0}`")]
    MissingLabel(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as {expected}")]
    CellParse {
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("split error: {0}")]
    Split(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("cannot resolve program: {0}")]
    Resolve(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("transformation `{0}` is not fitted")]
    Unfitted(String),

    #[error("column `{0}` already exists")]
    NameCollision(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("invalid learner spec: {0}")]
    LearnerSpec(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("island sampling error: {0}")]
    Sampling(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("island exhausted: every template for this island was already rejected")]
    IslandExhausted,

    #[error("unresolved column(s) after mapping: {}", .0.join(", "))]
    Unresolved(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
