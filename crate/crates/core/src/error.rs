use std::path::PathBuf;

/// Errors raised by every model in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema: {0}")]
    Schema(String),

    #[error("no valid rows in input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("insufficient or degenerate data: {0}")]
    Data(String),

    #[error("outside support: {0}")]
    Domain(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("grid covers only {covered:.6} of the conditional mass; widen it")]
    Coverage { covered: f64 },

    #[error("unknown key: {0}")]
    Lookup(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Optimization(_) => 3,
            Error::Numeric(_) => 4,
            _ => 2,
        }
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::EmptyInput => "empty_input",
            Error::Argument(_) => "argument",
            Error::Data(_) => "data",
            Error::Domain(_) => "domain",
            Error::Optimization(_) => "optimization",
            Error::Numeric(_) => "numeric",
            Error::Coverage { .. } => "coverage",
            Error::Lookup(_) => "lookup",
            Error::Io { .. } => "io",
        }
    }
}
