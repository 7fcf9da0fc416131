//! Core library for iterative design of LLM-driven social robot behavior:
//! prompt elicitation, robot conversation runtime, transcript annotation,
//! feedback-driven refinement, prompt analysis and versioned history.

pub mod analyzer;
pub mod annotation;
pub mod clock;
pub mod elicitation;
pub mod engine;
pub mod error;
pub mod gateway;
pub mod history;
pub mod refinement;
pub mod runtime;
pub mod scenario;

pub use engine::Engine;
pub use error::{AceError, ERROR_CODES};

/// Schema version written into every persisted record.
pub const SCHEMA_VERSION: &str = "1";
