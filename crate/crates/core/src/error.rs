use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("eigen-solver failed to converge on time slice {slice}")]
    EigenNonConvergence { slice: usize },

    #[error("intensity overflow at time index {t}: the process is exploding")]
    SimulationOverflow { t: usize },

    #[error(
        "configuration still unstable after {iterations} expansions; \
         try a larger expansion factor or a different beta"
    )]
    ExpansionLimit { iterations: usize },

    #[error("objective is not finite at the initial point")]
    NonFiniteStart,

    #[error("draw sink failed: {0}")]
    Sink(String),
}

pub type Result<T> = std::result::Result<T, Error>;
