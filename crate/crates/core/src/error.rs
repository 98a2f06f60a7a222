use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("image too small: {height}x{width}, need at least {min}x{min}")]
    ImageTooSmall { height: usize, width: usize, min: usize },
    #[error("image too narrow for pairwise products: width {0}")]
    ImageTooNarrow(usize),
    #[error("intensity {value} at index {index} outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f64 },
    #[error("kernel radius must be at least 1 (got {rows}, {cols})")]
    InvalidRadius { rows: usize, cols: usize },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: (usize, usize), actual: (usize, usize) },
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("empty field")]
    EmptyField,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("class '{label}' has {count} samples, need at least {required}")]
    ClassTooSmall { label: String, count: usize, required: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("duplicate path in manifest: {0}")]
    DuplicatePath(String),
    #[error("unknown label '{label}' (declared: {declared})")]
    UnknownLabel { label: String, declared: String },
    #[error("filter produced an empty result: {0}")]
    EmptyResult(String),
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("feature order mismatch: expected '{expected}', found '{found}'")]
    FeatureOrderMismatch { expected: String, found: String },
    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
