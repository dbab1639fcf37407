//! Library side of the `msrl` binary: command implementations, config
//! resolution, CSV/SVG reporting. The binary in `main.rs` only parses
//! arguments and maps [`AppError`] to exit codes (0 success, 2 usage,
//! 3 divergence, 4 unreliable selection).

pub mod commands;
pub mod config;
pub mod opts;
pub mod report;
pub mod svg;
pub mod table1;
pub mod table3;

use msrl::Error as LibError;

#[derive(Debug)]
pub enum AppError {
    /// Bad flags, config, or input files (exit 2).
    Usage(String),
    /// Training diverged (exit 3).
    Divergence(String),
    /// Dimension selection flagged unreliable (exit 4).
    UnreliableSelection(String),
    /// Anything else (exit 1).
    Other(String),
}

impl AppError {
    pub fn usage(msg: impl Into<String>) -> Self {
        AppError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Divergence(_) => 3,
            AppError::UnreliableSelection(_) => 4,
            AppError::Other(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            AppError::Usage(m)
            | AppError::Divergence(m)
            | AppError::UnreliableSelection(m)
            | AppError::Other(m) => m,
        }
    }
}

impl From<LibError> for AppError {
    fn from(e: LibError) -> Self {
        match e {
            LibError::Divergence(m) => AppError::Divergence(m),
            LibError::Config(m) => AppError::Usage(m),
            LibError::CsvParse { .. } => AppError::Usage(e.to_string()),
            LibError::Contract { .. } | LibError::Domain { .. } | LibError::ShapeMismatch { .. } => {
                AppError::Usage(e.to_string())
            }
            other => AppError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Other(e.to_string())
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message())
    }
}
