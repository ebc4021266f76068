use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}` in csv header")]
    MissingColumn(String),

    #[error("row {row}: cannot parse timestamp `{value}`")]
    TimestampParse { row: usize, value: String },

    #[error("case `{case_id}`: case attribute `{attribute}` varies within the trace")]
    InconsistentCaseAttribute { case_id: String, attribute: String },

    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("invalid schema configuration: {0}")]
    SchemaConfig(String),

    #[error("position {pos} out of range for trace of length {len}")]
    PositionOutOfRange { pos: usize, len: usize },

    #[error("cut leaves an empty trace for case `{0}`")]
    EmptyResult(String),

    #[error("no label for case `{0}`")]
    MissingLabel(String),

    #[error("both classes must be present")]
    SingleClass,

    #[error("prefix length {actual} does not match index encoding length {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("k-means needs at least {k} points, got {points}")]
    InsufficientPoints { k: usize, points: usize },

    #[error("k = {k} exceeds the {stored} stored instances")]
    KTooLarge { k: usize, stored: usize },

    #[error("feature width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("prefix log is empty")]
    EmptyPrefixLog,

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("temporal split leaves an empty side")]
    DegenerateSplit,

    #[error("formula parse error at byte {offset}: {message}")]
    FormulaParse { offset: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
