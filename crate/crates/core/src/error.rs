use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the harness can surface.
///
/// Variants are grouped by the exit code the CLI maps them to, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    // configuration (exit 2)
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),

    // transport (exit 3)
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("no stub fixture for prompt {prompt_hash} run {run_index}")]
    FixtureMiss { prompt_hash: String, run_index: u32 },

    // data (exit 4)
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },
    #[error("score {0} is outside 0..=100")]
    OutOfRange(i64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("missing join keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("data error: {0}")]
    Data(String),
    #[error("statement {id}: {source}")]
    Statement {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wrap with the id of the statement being processed.
    pub fn for_statement(self, id: impl Into<String>) -> Self {
        Error::Statement {
            id: id.into(),
            source: Box::new(self),
        }
    }

    /// CLI exit code: 2 configuration, 3 transport, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 2,
            Error::Transport(_) | Error::Provider(_) | Error::FixtureMiss { .. } => 3,
            Error::Statement { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}

pub(crate) fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}
