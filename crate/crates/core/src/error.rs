use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A device or simulation parameter violates its constraints.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A device state is inconsistent with its parameters.
    #[error("state error: {0}")]
    State(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("validation error: {0}")]
    Validation(String),
    /// Malformed input file. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("fit initialization error: {0}")]
    FitInit(String),
    #[error("config error: {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category used on the CLI diagnostic stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Parameter(_) => "parameter",
            Error::State(_) => "state",
            Error::Solver(_) => "solver",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::FitInit(_) => "fit-init",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
