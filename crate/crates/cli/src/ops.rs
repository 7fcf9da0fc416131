//! Request bodies shared by the HTTP service and the CLI, and the engine
//! calls they resolve to. Both surfaces go through these functions.

use ace_core::analyzer::AnalysisMode;
use ace_core::annotation::Span;
use ace_core::history::{LineDiff, Links, NewVersion, Origin, PromptVersion};
use ace_core::refinement::{RefinedPromptDraft, SuggestionLists};
use ace_core::{AceError, Engine};
use serde::{Deserialize, Serialize};

/// Every engine operation with its HTTP route and CLI command.
pub const OPERATIONS: &[(&str, &str, &str)] = &[
    ("create_project", "POST /projects", "init"),
    ("projects", "GET /projects", "project list"),
    ("project", "GET /projects/{pid}", "project show"),
    ("start_elicitation", "POST /projects/{pid}/elicitation", "elicit start"),
    ("elicitation", "GET /projects/{pid}/elicitation/{sid}", "elicit show"),
    ("elicitation_message", "POST /projects/{pid}/elicitation/{sid}/messages", "elicit send"),
    ("finalize_elicitation", "POST /projects/{pid}/elicitation/{sid}/finalize", "elicit finalize"),
    ("abandon_elicitation", "POST /projects/{pid}/elicitation/{sid}/abandon", "elicit abandon"),
    ("start_session", "POST /projects/{pid}/sessions", "chat start"),
    ("session", "GET /sessions/{sid}", "chat show"),
    ("user_turn", "POST /sessions/{sid}/turns", "chat send"),
    ("end_session", "POST /sessions/{sid}/end", "chat end"),
    ("transcript", "GET /transcripts/{tid}", "transcript"),
    ("add_annotation", "POST /transcripts/{tid}/annotations", "annotate"),
    ("annotations", "GET /transcripts/{tid}/annotations", "annotations"),
    ("conflicts", "GET /transcripts/{tid}/conflicts", "conflicts"),
    ("digest", "GET /transcripts/{tid}/digest", "digest --json"),
    ("generate_suggestions", "POST /versions/{vid}/suggestions", "suggest"),
    ("suggestion_set", "GET /suggestions/{sid}", "suggestions show"),
    ("edit_suggestions", "POST /suggestions/{sid}/edit", "suggestions edit"),
    ("refine", "POST /versions/{vid}/refine", "refine"),
    ("commit_version", "POST /projects/{pid}/versions", "commit --body|--file"),
    ("commit_refinement", "POST /projects/{pid}/versions", "commit --draft"),
    ("versions", "GET /projects/{pid}/versions", "history versions"),
    ("version", "GET /versions/{vid}", "history show"),
    ("lineage", "GET /versions/{vid}/lineage", "history lineage"),
    ("design_cycles", "GET /projects/{pid}/cycles", "history cycles"),
    ("revert", "POST /versions/{vid}/revert", "revert"),
    ("diff", "GET /versions/{a}/diff/{b}", "diff --json"),
    ("analyze_version", "GET /versions/{vid}/analysis", "analyze --version"),
    ("analyze_text", "POST /analyze", "analyze --text|--file"),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateProject {
    pub name: String,
    #[serde(default)]
    pub brief: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextBody {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSession {
    pub prompt_version_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewAnnotation {
    pub span: Span,
    pub tags: Vec<String>,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestRequest {
    pub transcript_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineRequest {
    pub suggestion_set_id: String,
    #[serde(default)]
    pub edited: Option<SuggestionLists>,
}

/// Either a plain body (manual or elicited) or a refinement draft.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitRequest {
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub origin: Option<Origin>,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub links: Option<Links>,
    #[serde(default)]
    pub draft: Option<RefinedPromptDraft>,
    #[serde(default)]
    pub edited_body: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeRequest {
    pub text: String,
    #[serde(default)]
    pub mode: AnalysisMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestView {
    pub transcript_id: String,
    pub digest: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffView {
    pub diff: LineDiff,
    pub unified: String,
}

/// Commits a version. Without an explicit parent, a plain body is attached
/// to the project's current version (or becomes the root).
pub fn commit(engine: &Engine, project_id: &str, req: CommitRequest) -> Result<PromptVersion, AceError> {
    engine.project(project_id)?;
    if let Some(draft) = req.draft {
        if req.body.is_some() || req.origin.is_some() || req.parent_id.is_some() || req.links.is_some() {
            return Err(AceError::InvalidInput("a draft commit takes only draft and edited_body".into()));
        }
        let parent = engine.version(&draft.based_on_version_id)?;
        if parent.project_id != project_id {
            return Err(AceError::InvalidInput(format!("draft is based on {} from another project", parent.id)));
        }
        return engine.commit_refinement(&draft, req.edited_body.as_deref());
    }
    if req.edited_body.is_some() {
        return Err(AceError::InvalidInput("edited_body requires a draft".into()));
    }
    let body = req.body.ok_or_else(|| AceError::InvalidInput("body or draft is required".into()))?;
    let mut new = NewVersion::new(body, req.origin.unwrap_or(Origin::Manual)).links(req.links.unwrap_or_default());
    new.parent_id = match req.parent_id {
        Some(p) => Some(p),
        None => engine.store().current_version(project_id)?.map(|v| v.id),
    };
    engine.commit_version(project_id, new)
}

pub fn digest(engine: &Engine, transcript_id: &str) -> Result<DigestView, AceError> {
    let digest = engine.digest(transcript_id)?;
    Ok(DigestView {
        transcript_id: transcript_id.to_string(),
        hash: ace_core::annotation::digest_hash(&digest),
        digest,
    })
}

pub fn diff(engine: &Engine, a: &str, b: &str) -> Result<DiffView, AceError> {
    let diff = engine.diff(a, b)?;
    Ok(DiffView { unified: diff.render(), diff })
}

/// Starts a test session after checking the version belongs to the project.
pub fn start_session(
    engine: &Engine,
    project_id: &str,
    version_id: &str,
) -> Result<ace_core::engine::SessionView, AceError> {
    engine.project(project_id)?;
    let version = engine.version(version_id)?;
    if version.project_id != project_id {
        return Err(AceError::InvalidInput(format!("version {version_id} belongs to another project")));
    }
    engine.start_session(version_id)
}

/// Checks an elicitation session id against the project in the path.
pub fn elicitation_in_project(engine: &Engine, project_id: &str, session_id: &str) -> Result<(), AceError> {
    let session = engine.elicitation(session_id)?;
    if session.project_id != project_id {
        return Err(ace_core::elicitation::ElicitationError::UnknownSession(session_id.to_string()).into());
    }
    Ok(())
}
