use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),

    /// The requested eigenvalue sits in a numerical multiplicity group and
    /// has no classical derivative; callers fall back to the semi-derivative.
    #[error("eigenvalue {index} is clustered (group {lo}..{hi})")]
    ClusteredEigenvalue { index: usize, lo: usize, hi: usize },

    #[error("sign reference nearly orthogonal for pair {index} (inner product {inner:.3e})")]
    NearOrthogonalReference { index: usize, inner: f64 },

    #[error("vector not normalized in the weighted inner product (deviation {deviation:.3e})")]
    NotNormalized { deviation: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("objective not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("projection did not converge: {0}")]
    ProjectionFailure(String),

    #[error("line search failed after {0} backtracks")]
    LineSearchFailure(usize),

    #[error("probe direction not admissible: {0}")]
    NonAdmissibleProbe(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Io(_) | Error::InvalidArg(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
