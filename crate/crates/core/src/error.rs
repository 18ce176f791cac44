use thiserror::Error;

/// Errors raised by the game primitives, equilibrium and oracle code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid product config: {0}")]
    InvalidConfig(String),
    #[error("invalid user type: {0}")]
    InvalidType(String),
    #[error("invalid price: {0}")]
    InvalidPrice(String),
    #[error("timestep {0} is not >= 1")]
    InvalidTimestep(u32),
    #[error("upgrade is not released at timestep {n} (release at {m})")]
    UpgradeNotReleased { n: u32, m: u32 },
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error("option not offered: {0}")]
    Unavailable(&'static str),
    #[error("horizon {horizon} too small, need at least {required}")]
    HorizonTooSmall { horizon: u32, required: u32 },
}

/// Top-level error for market evaluation, optimization and experiment runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("quadrature did not converge: {nodes} nodes give {coarse}, {fine} with doubled grid")]
    NonConvergence { nodes: usize, coarse: f64, fine: f64 },
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("optimizer error: {0}")]
    Optimizer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
