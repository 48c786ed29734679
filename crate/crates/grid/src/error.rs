use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("value {value} outside range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value map: min_db {min_db} must be less than max_db {max_db}")]
    InvalidValueMap { min_db: f64, max_db: f64 },

    #[error("grid size {size} exceeds the dense-matrix oracle cap {cap}")]
    Capacity { size: usize, cap: usize },

    #[error("operation unsupported for this degradation kind: {0}")]
    Unsupported(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, GridError>;
