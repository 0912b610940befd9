use thiserror::Error;

/// Everything that can go wrong inside the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol `{name}` at position {pos}")]
    UnknownSymbol { pos: usize, name: String },
    #[error("kinetic term must be quadratic in zt with a positive coefficient: {0}")]
    NonQuadraticKinetic(String),
    #[error("unsupported monomial {0}")]
    UnsupportedMixing(String),
    #[error("potential degree {degree} exceeds the configured maximum {max}")]
    DegreeTooHigh { degree: usize, max: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("effective kinetic coefficient {0} vanishes at this slope")]
    DegenerateKinetic(f64),
    #[error("operator ordering not supported: {0}")]
    UnsupportedOrdering(String),
    #[error("invalid lattice configuration: {0}")]
    InvalidConfig(String),
    #[error("covariance is not positive definite")]
    NonPositiveCovariance,
    #[error("grid spacing {dz} does not resolve width {sigma}")]
    GridUnresolved { sigma: f64, dz: f64 },
    #[error("mass 0 leaves an unbounded zero mode")]
    MasslessZeroMode,
    #[error("wavefunctionals live on different lattices")]
    ConfigMismatch,
    #[error("dimension {dim} exceeds the dense limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("Hamiltonian has cross terms; split-step integration is unavailable")]
    NonSeparableHamiltonian,
    #[error("linear solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },
    #[error("surface is not spacelike: link {link} has slope {slope}")]
    NotSpacelike { link: usize, slope: f64 },
    #[error("schedules do not share endpoints")]
    ScheduleMismatch,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{count} histories exceed the enumeration limit {max}")]
    EnumerationTooLarge { count: u128, max: u128 },
    #[error("two-time boundary problem is singular (condition estimate {condition:e})")]
    SingularBvp { condition: f64 },
    #[error("Newton iteration failed to converge (residual {residual:e})")]
    NewtonDivergence { residual: f64 },
    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed state file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
