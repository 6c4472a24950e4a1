use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (failing pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is not symmetric (largest asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular design: column `{column}` (index {index}) is collinear with the preceding columns")]
    SingularDesign { column: String, index: usize },

    #[error("{what} did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { what: &'static str, iterations: usize, last_change: f64 },

    #[error("partial likelihood diverged: |beta| exceeded {limit} (monotone likelihood)")]
    Divergence { limit: f64 },

    #[error("no events in the survival data")]
    NoEvents,

    #[error("could not reach event rate {target}: achievable range {low}..{high}")]
    CalibrationBracket { target: f64, low: f64, high: f64 },

    #[error("{subjects} subjects cannot be split into {folds} folds")]
    TooFewSubjects { subjects: usize, folds: usize },
}

impl Error {
    /// `true` for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::SingularDesign { .. }
                | Error::NoConvergence { .. }
                | Error::Divergence { .. }
                | Error::CalibrationBracket { .. }
        )
    }
}
