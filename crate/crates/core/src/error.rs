use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("layout: {0}")]
    Layout(String),
    #[error("parameter: {0}")]
    Parameter(String),
    #[error("config: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("regime: {0}")]
    Regime(String),
    #[error("truncation: {0}")]
    Truncation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes, one per process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Solver,
    Regime,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Solver => 3,
            ErrorClass::Regime => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Solver => "solver",
            ErrorClass::Regime => "regime",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Layout(_) | Error::Parameter(_) | Error::Config(_) | Error::Io(_) => {
                ErrorClass::Config
            }
            Error::Solver(_) => ErrorClass::Solver,
            Error::Regime(_) | Error::Truncation(_) => ErrorClass::Regime,
        }
    }
}
