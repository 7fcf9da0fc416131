//! HTTP service and command-line interface over the design engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod ops;

pub use error::{CliError, INTERFACE_CODES};
