use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("utility domain error: h = {h} is outside the domain for beta = {beta}")]
    UtilityDomain { beta: f64, h: f64 },

    #[error("infeasible hit vector: {0}")]
    InfeasibleHits(String),

    #[error("infinite timer at position {position}: {detail}")]
    InfiniteTimer { position: usize, detail: String },

    #[error("routing error: {0}")]
    Routing(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("{algorithm} did not converge after {iterations} iterations: {detail}")]
    NonConvergence {
        algorithm: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("instance too large for brute force: {0} variables (limit 6)")]
    OracleRefused(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
