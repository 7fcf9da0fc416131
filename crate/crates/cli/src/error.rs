//! Errors surfaced by the command line and the HTTP service.

use ace_core::AceError;
use thiserror::Error;

/// Codes owned by the interface layer, on top of [`ace_core::ERROR_CODES`].
pub const INTERFACE_CODES: &[&str] =
    &["bad_request", "not_found", "method_not_allowed", "internal_error", "bind_error", "usage_error", "io_error"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Domain(#[from] AceError),
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("{0}")]
    Io(String),
    /// The reader of stdout went away, as with `ace ... | head`.
    #[error("output closed")]
    Closed,
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::BrokenPipe => CliError::Closed,
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Domain(e) => e.code(),
            CliError::Usage(_) => "usage_error",
            CliError::Config(_) => "config_error",
            CliError::Bind { .. } => "bind_error",
            CliError::Io(_) | CliError::Closed => "io_error",
        }
    }

    /// Process exit status: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
