use thiserror::Error;

use crate::solver::Status;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    AsymmetricInput { asymmetry: f64 },
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("Gram matrix M*M^T is not positive definite (min eigenvalue {min_eig:.3e})")]
    SingularGram { min_eig: f64 },
    #[error("orthogonality violated: max |A*M^T| = {residual:.3e}")]
    OrthogonalityViolation { residual: f64 },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("parameter has length {got}, expected {expected}")]
    ParamDimensionMismatch { expected: usize, got: usize },
    #[error("solver hit numerical trouble: {0}")]
    NumericalTrouble(String),
    #[error("solver reached the iteration limit")]
    MaxIter,
    #[error("problem not solvable: status {status:?}")]
    NotSolvable { status: Status },
    #[error("witness violates {constraint} (residual {residual:.3e})")]
    InfeasibleWitness { constraint: String, residual: f64 },
    #[error("parameter lies outside the representable set")]
    OutsideTheta,
    #[error("map is undefined at this parameter")]
    UndefinedMap,
    #[error("no sample in the window belongs to the representable set")]
    WindowOutsideTheta,
    #[error("unsupported dimension {0} for this output")]
    UnsupportedDimension(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(what: &str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what: what.to_string(),
            expected,
            got,
        }
    }
}

impl Error {
    /// The validation check an error stands for, if any.
    pub fn check(&self) -> Option<crate::model::Check> {
        use crate::model::Check;
        match self {
            Error::SingularGram { .. } => Some(Check::SingularGram),
            Error::OrthogonalityViolation { .. } => Some(Check::OrthogonalityAM),
            _ => None,
        }
    }
}
