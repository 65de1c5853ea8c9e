use std::path::PathBuf;

/// Errors raised by the solver stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("fields live on different domains")]
    DomainMismatch,

    #[error("boundary data violates g >= 0, g != 0: {0}")]
    BoundaryData(String),

    #[error("numerical error: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    #[error("mu too large: t0 numerator {numerator:e} is not positive")]
    MuTooLarge { numerator: f64 },

    #[error("mu beyond the admissible fibering range: {0}")]
    MuBeyondRange(String),

    #[error("the N+ branch is empty at mu = 0")]
    BranchAbsent,

    #[error("degenerate seed: {0}")]
    DegenerateSeed(String),

    #[error("projection error: {0}")]
    Projection(String),

    #[error("seeding error: {0}")]
    Seeding(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("incomplete input: {0}")]
    Incomplete(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
