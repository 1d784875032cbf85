use thiserror::Error;

pub type Result<T, E = EstimateError> = std::result::Result<T, E>;

/// Errors raised by the estimators and geometric operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point id {id} out of range for a cloud of {len} points")]
    InvalidPointId { id: usize, len: usize },
    #[error("need at least {required} neighbors, got {found}")]
    InsufficientNeighbors { required: usize, found: usize },
    #[error("all neighbors of point {center} coincide with it (duplicate points)")]
    DuplicatePoints { center: usize },
    #[error("degenerate neighborhood: {0}")]
    DegenerateNeighborhood(String),
    #[error("bandwidth matrix is not positive definite after symmetrization and jitter")]
    NonPositiveBandwidth,
    #[error("no neighbor inside the varifold kernel support of point {center}")]
    EmptySupport { center: usize },
    #[error("missing per-point input: {0}")]
    MissingInput(&'static str),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("point is {distance:e} away from the surface")]
    OffSurface { distance: f64 },
}

impl EstimateError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        EstimateError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
