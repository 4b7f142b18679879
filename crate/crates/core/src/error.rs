use crate::metrics::TraceRow;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("internal state error: {0}")]
    InternalState(String),

    /// The iterate left the ball of radius 1e12 around the optimum (or
    /// became non-finite). The partial trace is attached.
    #[error("run diverged at iteration {iteration}: distance {distance:e}")]
    Diverged {
        iteration: usize,
        distance: f64,
        trace: Vec<TraceRow>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("failed to parse config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("failed to serialize: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
