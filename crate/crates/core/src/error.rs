use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Markov reward process: {0}")]
    InvalidMrp(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid value: {0}")]
    Domain(String),

    #[error("{what} did not converge within {cap} iterations")]
    NoConvergence { what: &'static str, cap: usize },

    #[error("singular linear system: {0}")]
    Singular(&'static str),

    #[error("empty law")]
    EmptyLaw,

    #[error("transition is {found}, expected {expected}")]
    Centering {
        expected: &'static str,
        found: &'static str,
    },

    #[error("inadmissible step-size schedule: {0}")]
    Schedule(String),

    #[error("infeasible synchronous sample: {0}")]
    InfeasibleSample(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
