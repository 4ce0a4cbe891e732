//! Error type shared by all solver components.

/// Errors reported by meshing, assembly, factorization and iterative solves.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operands of a linear algebra operation have incompatible shapes.
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: String,
        right: String,
    },

    /// A pivot below the singularity threshold was met during LU elimination.
    #[error("matrix is numerically singular at column {column} (pivot {pivot:.3e})")]
    Singular { column: usize, pivot: f64 },

    /// A nonpositive pivot was met during a Cholesky factorization.
    #[error("matrix is not positive definite: pivot {pivot:.3e} at column {column}")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    /// A mesh violates a structural invariant (connectivity, orientation, ids).
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// The diffusion coefficient was sampled nonpositive on some element.
    #[error("diffusion coefficient must be positive, got {value:.3e} on element {element}")]
    NonpositiveCoefficient { element: usize, value: f64 },

    /// A user supplied function could not be evaluated.
    #[error("evaluation failed at {location}: {message}")]
    Evaluation { location: String, message: String },

    /// A numerical process produced NaN/Inf or failed a health check.
    #[error("numerical failure at iteration {iteration}: {message}")]
    NumericalFailure { iteration: usize, message: String },

    /// Dense diagnostics were requested beyond the configured size cap.
    #[error("diagnostics problem size {size} exceeds the dense cap {cap}")]
    DiagnosticsCapExceeded { size: usize, cap: usize },

    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// File input or output failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used by shape checks throughout the linear algebra layer.
    pub(crate) fn shape(
        context: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    ) -> Self {
        Error::DimensionMismatch {
            context,
            left: format!("{}x{}", left.0, left.1),
            right: format!("{}x{}", right.0, right.1),
        }
    }
}
