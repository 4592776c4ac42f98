use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model order R={r}, L={l} is too large for a series of length T={t}")]
    OrderTooLarge { r: usize, l: usize, t: usize },

    #[error("non-binary response {value} at row {row}, column {col}")]
    NonBinary { row: usize, col: usize, value: String },

    #[error("non-finite or unparsable value {value:?} at row {row}, column {col} of {file}")]
    BadValue { file: String, row: usize, col: usize, value: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular system; deficient columns: {}", .columns.join(", "))]
    Singular { columns: Vec<String> },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("probability {value} at index {index} is 0 or 1; clamp before taking logits")]
    DegenerateProbability { index: usize, value: f64 },

    #[error("model schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
