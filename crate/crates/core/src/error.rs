//! Crate-wide error with stable machine-readable codes.

use thiserror::Error;

use crate::analyzer::AnalyzerError;
use crate::annotation::AnnotationError;
use crate::elicitation::ElicitationError;
use crate::gateway::GatewayError;
use crate::history::HistoryError;
use crate::refinement::RefinementError;
use crate::runtime::RuntimeError;

#[derive(Debug, Error)]
pub enum AceError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Elicitation(#[from] ElicitationError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Refinement(#[from] RefinementError),
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Every code [`AceError::code`] can return. Frozen: clients match on these.
pub const ERROR_CODES: &[&str] = &[
    "replay_miss",
    "provider_error",
    "config_error",
    "invalid_request",
    "fixture_error",
    "unknown_session",
    "session_closed",
    "turn_in_flight",
    "malformed_agent_reply",
    "malformed_draft",
    "empty_prompt",
    "empty_user_text",
    "session_ended",
    "session_already_active",
    "unknown_transcript",
    "invalid_span",
    "unknown_tag",
    "empty_tag_set",
    "no_annotations",
    "transcript_open",
    "malformed_suggestions",
    "invalid_suggestions",
    "judge_parse_error",
    "ruleset_error",
    "empty_name",
    "duplicate_name",
    "unknown_project",
    "unknown_version",
    "unknown_parent",
    "second_root",
    "missing_root",
    "empty_body",
    "dangling_link",
    "cross_project_diff",
    "unknown_suggestion_set",
    "store_error",
    "invalid_input",
];

fn gateway_code(e: &GatewayError) -> (&'static str, u16) {
    match e {
        GatewayError::ReplayMiss { .. } => ("replay_miss", 502),
        GatewayError::Provider(_) => ("provider_error", 502),
        GatewayError::Config(_) => ("config_error", 500),
        GatewayError::InvalidRequest(_) => ("invalid_request", 500),
        GatewayError::Fixture(_) => ("fixture_error", 500),
    }
}

impl AceError {
    fn classify(&self) -> (&'static str, u16) {
        match self {
            AceError::Gateway(e) => gateway_code(e),
            AceError::Elicitation(e) => match e {
                ElicitationError::UnknownSession(_) => ("unknown_session", 404),
                ElicitationError::SessionClosed(_) => ("session_closed", 409),
                ElicitationError::TurnInFlight(_) => ("turn_in_flight", 409),
                ElicitationError::MalformedAgentReply(_) => ("malformed_agent_reply", 502),
                ElicitationError::MalformedDraft => ("malformed_draft", 502),
                ElicitationError::Gateway(g) => gateway_code(g),
            },
            AceError::Runtime(e) => match e {
                RuntimeError::EmptyPrompt => ("empty_prompt", 422),
                RuntimeError::EmptyUserText => ("empty_user_text", 422),
                RuntimeError::SessionEnded(_) => ("session_ended", 409),
                RuntimeError::SessionAlreadyActive(_) => ("session_already_active", 409),
                RuntimeError::UnknownSession(_) => ("unknown_session", 404),
                RuntimeError::TurnInFlight(_) => ("turn_in_flight", 409),
            },
            AceError::Annotation(e) => match e {
                AnnotationError::UnknownTranscript(_) => ("unknown_transcript", 404),
                AnnotationError::InvalidSpan(_) => ("invalid_span", 422),
                AnnotationError::UnknownTag(_) => ("unknown_tag", 422),
                AnnotationError::EmptyTagSet => ("empty_tag_set", 422),
                AnnotationError::NoAnnotations(_) => ("no_annotations", 422),
                AnnotationError::TranscriptOpen(_) => ("transcript_open", 409),
            },
            AceError::Refinement(e) => match e {
                RefinementError::MalformedSuggestions(_) => ("malformed_suggestions", 502),
                RefinementError::MalformedDraft => ("malformed_draft", 502),
                RefinementError::InvalidSuggestions(_) => ("invalid_suggestions", 422),
                RefinementError::Gateway(g) => gateway_code(g),
            },
            AceError::Analyzer(e) => match e {
                AnalyzerError::JudgeParse(_) => ("judge_parse_error", 502),
                AnalyzerError::Rules(_) => ("ruleset_error", 500),
                AnalyzerError::Gateway(g) => gateway_code(g),
            },
            AceError::History(e) => match e {
                HistoryError::EmptyName => ("empty_name", 422),
                HistoryError::DuplicateName(_) => ("duplicate_name", 409),
                HistoryError::UnknownProject(_) => ("unknown_project", 404),
                HistoryError::UnknownVersion(_) => ("unknown_version", 404),
                HistoryError::UnknownParent(_) => ("unknown_parent", 404),
                HistoryError::SecondRoot(_) => ("second_root", 409),
                HistoryError::MissingRoot(_) => ("missing_root", 409),
                HistoryError::EmptyBody => ("empty_body", 422),
                HistoryError::DanglingLink { .. } => ("dangling_link", 422),
                HistoryError::CrossProjectDiff(..) => ("cross_project_diff", 422),
                HistoryError::UnknownTranscript(_) => ("unknown_transcript", 404),
                HistoryError::UnknownSuggestionSet(_) => ("unknown_suggestion_set", 404),
                HistoryError::RevertMismatch | HistoryError::Store { .. } => ("store_error", 500),
            },
            AceError::InvalidInput(_) => ("invalid_input", 400),
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        self.classify().0
    }

    /// HTTP status the interface layer answers with.
    pub fn http_status(&self) -> u16 {
        self.classify().1
    }
}
