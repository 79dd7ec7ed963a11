use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("nonpositive value {value} at sample {sample}, cell {cell}, marker {marker}")]
    NonPositive {
        sample: usize,
        cell: usize,
        marker: usize,
        value: f64,
    },

    #[error("nonpositive cutoff {value} at sample {sample}, marker {marker}")]
    NonPositiveCutoff {
        sample: usize,
        marker: usize,
        value: f64,
    },

    #[error("preprocessing removed every marker")]
    EmptyModel,

    #[error("anchor y values are not distinct; the system is singular")]
    SingularSystem,

    #[error("probability {0} is outside (0, 1)")]
    Domain(f64),

    #[error("sample {sample} has {found} distinct negative observed values, need at least 3")]
    InsufficientData { sample: usize, found: usize },

    #[error("invalid model state: {0}")]
    InvalidState(String),

    #[error("non-finite log-likelihood at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("cell {cell} of sample {sample} has zero likelihood in every draw")]
    ZeroLikelihood { sample: usize, cell: usize },

    #[error("trace is empty")]
    EmptyTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serialize(String),
}

impl Error {
    /// Process exit code by error category: 2 parse, 3 model, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::InvalidInput(_) => 2,
            Error::NonPositive { .. }
            | Error::NonPositiveCutoff { .. }
            | Error::EmptyModel
            | Error::SingularSystem
            | Error::Domain(_)
            | Error::InsufficientData { .. }
            | Error::InvalidState(_)
            | Error::ZeroLikelihood { .. }
            | Error::EmptyTrace => 3,
            Error::NonFinite { .. } | Error::Io(_) | Error::Serialize(_) => 4,
        }
    }
}
