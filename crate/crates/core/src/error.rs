//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the reading pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("schema error: missing or invalid field `{field}`{}", qid.as_ref().map(|q| format!(" (qid {q})")).unwrap_or_default())]
    Schema { field: String, qid: Option<String> },

    #[error("feature build failed for qid {qid}: {reason}")]
    FeatureBuild { qid: String, reason: String },

    #[error("dimension error in {op}: {detail}")]
    Shape { op: String, detail: String },

    #[error("index error in {what}: {detail}")]
    Index { what: String, detail: String },

    #[error("invalid label: {0}")]
    Label(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("scoring failed for qid {qid}: {reason}")]
    Scoring { qid: String, reason: String },

    #[error("window aggregation error: {0}")]
    Aggregation(String),

    #[error("threshold search error: {0}")]
    Search(String),

    #[error("answer extraction failed for qid {qid}: {reason}")]
    Extraction { qid: String, reason: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at step {step} (batch qids: {})", qids.join(", "))]
    NonFiniteLoss { step: usize, qids: Vec<String> },

    #[error("empty batch")]
    EmptyBatch,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            op: op.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn index(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Index {
            what: what.into(),
            detail: detail.into(),
        }
    }
}
