use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("factorization produced nonnumerical values")]
    FactorizationFailure,

    #[error("all twist pivots are NaN")]
    TwistFailure,

    #[error("eigenvector recurrence produced no numerical values")]
    GetvecFailure,

    #[error("no definite root representation found at either spectrum end")]
    RootFailure,

    #[error("matrix too large for the dense oracle (n = {n}, limit {limit})")]
    OracleLimit { n: usize, limit: usize },

    #[error("matrix file: {0}")]
    FileFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
