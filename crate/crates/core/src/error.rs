use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit codes: spec/config
/// problems exit 2, sampling shortages exit 3, backend failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    /// A trajectory ordering rule was violated (duplicate plan, unobserved
    /// action, non-monotone step index, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// An operation was called outside its contract (wrong environment kind,
    /// think prompt without the think flag, ...).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A prompt cannot be assembled within the token budget.
    #[error("budget error: {0}")]
    Budget(String),

    /// The backend rejected the request because the prompt exceeded its
    /// context window. Distinct from `Backend` so callers can re-truncate.
    #[error("context overflow: {0}")]
    ContextOverflow(String),

    /// Transport or protocol failure talking to a generation backend, after
    /// retries were exhausted.
    #[error("backend error: {0}")]
    Backend(String),

    /// A benchmark level does not have enough tasks in the universe.
    #[error("shortage at level {level}: need {needed} tasks, have {available}")]
    Shortage {
        level: u32,
        needed: usize,
        available: usize,
    },

    /// A trace file is corrupt or truncated. `line` is 1-based.
    #[error("trace error at line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 spec error, 3 shortage, 4 backend failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Shortage { .. } => 3,
            Error::Backend(_) | Error::ContextOverflow(_) => 4,
            _ => 2,
        }
    }
}
