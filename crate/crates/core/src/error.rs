use thiserror::Error;

/// Errors raised by structural validation and by layer-map evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("state coordinate {index} is not finite ({value})")]
    NonFiniteState { index: usize, value: f64 },

    #[error("invalid predicate `{label}`: {reason}")]
    InvalidPredicate { label: String, reason: String },

    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("invalid disk: {0}")]
    InvalidDisk(String),

    #[error("invalid finite map: {0}")]
    InvalidMap(String),

    #[error("invalid function: {0}")]
    InvalidFunction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("critical point of the Newton map at ({re}, {im}): |p'(z)| = {derivative_norm:e}")]
    CriticalPoint { re: f64, im: f64, derivative_norm: f64 },

    #[error("state value {0} is not an element of the finite set")]
    NotAnIndex(f64),

    #[error("evaluation overflowed to a non-finite value")]
    Overflow,

    #[error("no table entry for state {0:?}")]
    MissingTableEntry(Vec<f64>),

    #[error("iteration did not converge (residual {residual:e})")]
    NotConverged { residual: f64 },

    #[error("order of the core permutation exceeds 128 bits")]
    OrderOverflow,

    #[error("evaluation failed at sample {index} ({state:?}): {source}")]
    Sample {
        index: usize,
        state: Vec<f64>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Whether this error is an evaluation failure (as opposed to malformed input).
    pub fn is_evaluation(&self) -> bool {
        match self {
            Error::CriticalPoint { .. }
            | Error::NotAnIndex(_)
            | Error::Overflow
            | Error::MissingTableEntry(_)
            | Error::NotConverged { .. }
            | Error::OrderOverflow => true,
            Error::Sample { source, .. } => source.is_evaluation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
