use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric: relative asymmetry {asymmetry:e} exceeds tolerance {tol:e}")]
    NotSymmetric { asymmetry: f64, tol: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("sample too small: need at least {needed} items, found {found}")]
    SampleTooSmall { needed: usize, found: usize },

    #[error("{method} requires a single common bandwidth (got {b1} and {b2})")]
    UnequalBandwidth { method: &'static str, b1: f64, b2: f64 },

    #[error("degenerate variance estimate: {0}")]
    DegenerateVariance(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {subdivisions} subdivisions")]
    NonConvergence { estimate: f64, error: f64, subdivisions: usize },

    #[error("degenerate importance-sampling proposal: {0}")]
    DegenerateProposal(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("replicate {index} failed: {source}")]
    Replicate { index: usize, source: Box<Error> },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCountMismatch { row: usize, expected: usize, found: usize },

    #[error("row {row}: {source}")]
    Row { row: usize, source: Box<Error> },

    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse classification used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UnequalBandwidth { .. } | Error::InvalidParameter(_) | Error::InvalidScenario(_) => {
                ErrorClass::Usage
            }
            Error::Domain(_)
            | Error::Overflow(_)
            | Error::DegenerateVariance(_)
            | Error::NonConvergence { .. }
            | Error::DegenerateProposal(_) => ErrorClass::Numerical,
            Error::Replicate { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Domain(_) => "domain",
            Error::Overflow(_) => "overflow",
            Error::EmptySample => "empty_sample",
            Error::SampleTooSmall { .. } => "sample_too_small",
            Error::UnequalBandwidth { .. } => "unequal_bandwidth",
            Error::DegenerateVariance(_) => "degenerate_variance",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NonConvergence { .. } => "non_convergence",
            Error::DegenerateProposal(_) => "degenerate_proposal",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::Replicate { .. } => "replicate",
            Error::Parse { .. } => "parse",
            Error::ColumnCountMismatch { .. } => "column_count_mismatch",
            Error::Row { source, .. } => match **source {
                Error::NotPositiveDefinite { .. } => "not_positive_definite",
                Error::NotSymmetric { .. } => "not_symmetric",
                _ => "row",
            },
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
