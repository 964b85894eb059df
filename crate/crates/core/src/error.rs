use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("point {point:?} lies outside the domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("derivative order {order} exceeds degree {degree}")]
    DerivativeOrder { order: usize, degree: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank-deficient least-squares system")]
    RankDeficient,

    #[error("singular regularized system (lambda = {lambda})")]
    SingularRegularized { lambda: f64 },

    #[error("C({m}, {n}) subsets exceeds the enumeration cap of {cap}")]
    CapExceeded { m: usize, n: usize, cap: u128 },

    #[error("refinement added no degrees of freedom for two consecutive levels (level {level})")]
    Stagnation { level: usize },

    #[error("cell {cell:?} at level {level} is not inside the refined subdomain")]
    Nesting { level: usize, cell: Vec<usize> },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 configuration, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidKnots(_)
            | Error::Dimension(_)
            | Error::InvalidArgument(_)
            | Error::DerivativeOrder { .. }
            | Error::Nesting { .. } => 1,
            Error::OutsideDomain { .. }
            | Error::RankDeficient
            | Error::SingularRegularized { .. }
            | Error::CapExceeded { .. }
            | Error::Stagnation { .. } => 2,
            Error::Parse { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 3,
        }
    }
}
