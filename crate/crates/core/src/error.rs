use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not skew-symmetric (asymmetry {0:.3e})")]
    NonSkew(f64),

    #[error("not a rotation matrix: {0}")]
    InvalidRotation(String),

    #[error("left Jacobian is near-singular at angle {0}")]
    NearSingular(f64),

    #[error("covariance is not symmetric positive semidefinite: {0}")]
    NonPsd(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("normal matrix is rank deficient (condition number {0:.3e})")]
    RankDeficient(f64),

    #[error("per-measurement block {index} is singular (condition number {cond:.3e})")]
    SingularBlock { index: usize, cond: f64 },

    #[error("degenerate motion: {0}")]
    DegenerateMotion(String),

    #[error("no convergence after {iterations} iterations (last update {last_update:.3e})")]
    NoConvergence { iterations: usize, last_update: f64 },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("rotation averaging is ambiguous: solutions {0} and {1} differ by more than pi/2")]
    LogBranchAmbiguity(usize, usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {source}")]
    AtLine {
        path: String,
        line: usize,
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateMotion(_) | Error::RankDeficient(_) | Error::SingularBlock { .. } => 4,
            Error::NoConvergence { .. } => 5,
            Error::AtLine { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
