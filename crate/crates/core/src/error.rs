use thiserror::Error;

/// Errors raised by model construction, evaluation, fitting and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("evaluation failed at observation {observation}, species {species}: {reason}")]
    Evaluation {
        observation: usize,
        species: usize,
        reason: String,
    },

    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e})")]
    Integration { requested: f64, achieved: f64 },

    #[error("unsupported link function {0:?}; only the standard-normal link is implemented")]
    UnsupportedLink(crate::model::Link),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("Hessian is not positive definite; {0}")]
    NotPositiveDefinite(String),

    #[error("{path}:{line}: {reason}")]
    Csv {
        path: String,
        line: u64,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
