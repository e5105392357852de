use thiserror::Error;

/// Errors surfaced by the library; the CLI maps these onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Convolution order outside the supported range.
    #[error("unsupported convolution order m={m}; supported range is 1..={max}")]
    UnsupportedOrder { m: u32, max: u32 },

    /// Argument outside its documented domain (index out of range, etc.).
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or infeasible configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Guard against runaway allocations (fine-grid overflow and the like).
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// Non-finite values or other numeric breakdown.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid observations or malformed input data.
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
