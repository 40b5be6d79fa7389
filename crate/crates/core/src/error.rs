use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A graph node received operands whose shapes it cannot combine.
    #[error("shape mismatch at node `{node}`: {detail}")]
    Shape { node: String, detail: String },

    /// An operation was called out of order (e.g. backward before forward).
    #[error("invalid state: {0}")]
    State(String),

    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown name `{0}`")]
    Missing(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: duplicate date {date}")]
    DuplicateDate { path: PathBuf, date: NaiveDate },

    #[error("invalid data: {0}")]
    Data(String),

    /// The transaction cost exceeds the gross return, so the log reward is undefined.
    #[error("infeasible turnover: log argument {argument} <= 0 (gross {gross}, cost {cost})")]
    InfeasibleTurnover { argument: f64, gross: f64, cost: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough samples: need {needed}, have {available}")]
    Underfilled { needed: usize, available: usize },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
