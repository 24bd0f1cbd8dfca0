use thiserror::Error;

/// Errors surfaced by the solver and I/O layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),

    #[error("iterative solve did not converge: {0}")]
    NotConverged(String),

    #[error("non-finite value produced at bond {bond}: {context}")]
    NonFinite { bond: usize, context: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("voxel file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ndarray_linalg::error::LinalgError> for CoreError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        CoreError::Backend(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
