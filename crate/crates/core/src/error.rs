use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpwError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpwError {
    #[error("grid data length {len} does not match {height}x{width}")]
    DataLength { height: usize, width: usize, len: usize },

    #[error("grid dimensions must be at least 1x1, got {height}x{width}")]
    EmptyGrid { height: usize, width: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("size {height}x{width} is not divisible by {factor} (required for {levels} pyramid levels)")]
    Divisibility { height: usize, width: usize, factor: usize, levels: usize },

    #[error("target {target_h}x{target_w} is smaller than source {source_h}x{source_w}")]
    TargetTooSmall { source_h: usize, source_w: usize, target_h: usize, target_w: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub(crate) fn shape_mismatch(expected: (usize, usize), actual: (usize, usize)) -> SpwError {
    SpwError::ShapeMismatch {
        expected: format!("{}x{}", expected.0, expected.1),
        actual: format!("{}x{}", actual.0, actual.1),
    }
}
