use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("grid specifications differ")]
    GridMismatch,
    #[error("coordinate {value} outside axis {axis} bounds")]
    OutOfDomain { axis: usize, value: f64 },
    #[error("norm drifted by {drift:e} in a single step")]
    StabilityFailure { drift: f64 },
    #[error("eigenstate {level} did not converge (residual {residual:e})")]
    NoConvergence { level: usize, residual: f64 },
    #[error("trajectory reached a node of the wave function at t = {time}")]
    NodeEncounter { time: f64 },
    #[error("rejection sampler acceptance rate {rate:e} below 1e-4")]
    RejectionStall { rate: f64 },
    #[error("{aborted} of {total} members aborted (limit 0.1%)")]
    AbortFractionExceeded { aborted: usize, total: usize },
    #[error("conditional slice has norm {norm:e}")]
    NullSlice { norm: f64 },
    #[error("environment marginal has a single cluster")]
    NoBranches,
    #[error("pointer separation {separation} below {required} pointer widths")]
    InsufficientSeparation { separation: f64, required: f64 },
    #[error("stiffness parameter {value} exceeds stability bound {bound}")]
    StiffnessFailure { value: f64, bound: f64 },
    #[error("classical turning point inside the grid at alpha = {alpha}")]
    TurningPointInDomain { alpha: f64 },
    #[error("Hamiltonian constraint violated by {residual:e}")]
    ConstraintViolation { residual: f64 },
    #[error("proper-time ranges overlap only over {overlap}")]
    InsufficientOverlap { overlap: f64 },
    #[error("i/o: {0}")]
    Io(String),
    #[error("malformed data: {0}")]
    Format(String),
}

impl Error {
    /// Stable variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::NonFinite(_) => "NonFinite",
            Error::GridMismatch => "GridMismatch",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::StabilityFailure { .. } => "StabilityFailure",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NodeEncounter { .. } => "NodeEncounter",
            Error::RejectionStall { .. } => "RejectionStall",
            Error::AbortFractionExceeded { .. } => "AbortFractionExceeded",
            Error::NullSlice { .. } => "NullSlice",
            Error::NoBranches => "NoBranches",
            Error::InsufficientSeparation { .. } => "InsufficientSeparation",
            Error::StiffnessFailure { .. } => "StiffnessFailure",
            Error::TurningPointInDomain { .. } => "TurningPointInDomain",
            Error::ConstraintViolation { .. } => "ConstraintViolation",
            Error::InsufficientOverlap { .. } => "InsufficientOverlap",
            Error::Io(_) => "Io",
            Error::Format(_) => "Format",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
