use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("degenerate triangle {cell} (area {area:e})")]
    DegenerateElement { cell: usize, area: f64 },

    #[error("singular system (estimated nullspace dimension {nullspace_dim})")]
    Singular { nullspace_dim: usize },

    #[error("training diverged at epoch {epoch}; last finite epoch: {last_finite_epoch:?}")]
    Divergence {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("incompatible artifacts: {0}")]
    Incompatible(String),

    #[error("mesh too large: {dofs} dofs exceeds limit {limit}")]
    MeshTooLarge { dofs: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::DegenerateElement { .. } => "degenerate-element",
            Error::Singular { .. } => "singular",
            Error::Divergence { .. } => "divergence",
            Error::Artifact(_) => "artifact",
            Error::Incompatible(_) => "incompatible",
            Error::MeshTooLarge { .. } => "mesh-too-large",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
