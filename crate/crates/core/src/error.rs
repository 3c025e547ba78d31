use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    /// The simulated state stopped being finite.
    #[error("numeric failure at step {step}: {reason}")]
    Blowup { step: u64, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported sample size {n}: supported range is {min}..={max}")]
    UnsupportedSize { n: usize, min: usize, max: usize },

    #[error("replication {replication} (seed {seed}) failed: {source}")]
    Replication {
        replication: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by bad input rather than arithmetic.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Shape { .. } | Error::Usage(_) => true,
            Error::UnsupportedScheme(_) | Error::UnsupportedSize { .. } => true,
            Error::Replication { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
