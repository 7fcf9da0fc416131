//! Engine facade: every design-loop operation over one store and gateway.
//!
//! The HTTP service and the CLI both call into [`Engine`], so the two
//! surfaces stay behaviorally identical.

use std::collections::HashSet;
use std::sync::{Arc, Mutex, OnceLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::analyzer::{AnalysisMode, AnalysisReport, Analyzer};
use crate::annotation::{
    build_annotation, detect_conflicts, digest_hash, parse_tags, render_digest, Annotation, AnnotationError,
    AnnotationSet, Conflict, Span,
};
use crate::clock::Clock;
use crate::elicitation::{self, AgentResponse, ElicitationError, ElicitationSession};
use crate::error::AceError;
use crate::gateway::Gateway;
use crate::history::{
    DesignCycle, DocKind, IdKind, LineDiff, LineageEntry, LinkKind, Links, NewVersion, Origin, Project, PromptVersion,
    Store,
};
use crate::refinement::{
    generate_refined_body, generate_suggestions, normalize_lists, RefinedPromptDraft, RefinementError, SuggestionLists,
    SuggestionSet,
};
use crate::runtime::{
    compose_effective_prompt, joined_speech, robot_turn, RuntimeError, SessionStatus, Speaker, TestSession, Transcript,
    Utterance,
};
use crate::SCHEMA_VERSION;

pub type Result<T> = std::result::Result<T, AceError>;

/// Draft produced by finishing an elicitation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationDraft {
    pub session_id: String,
    pub project_id: String,
    pub body: String,
}

/// A test session with its transcript so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session: TestSession,
    pub transcript: Transcript,
}

/// Result of one user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub session_id: String,
    pub utterance: Utterance,
    pub calls: u32,
    pub fell_back: bool,
}

/// Marks a session as busy until dropped.
struct InFlight<'a> {
    set: &'a Mutex<HashSet<String>>,
    id: String,
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.set.lock().unwrap_or_else(|p| p.into_inner()).remove(&self.id);
    }
}

pub struct Engine {
    store: Store,
    gateway: Arc<Gateway>,
    clock: Arc<dyn Clock>,
    analyzer: OnceLock<Analyzer>,
    in_flight: Mutex<HashSet<String>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("store", &self.store.root()).field("gateway", &self.gateway).finish()
    }
}

impl Engine {
    pub fn new(store: Store, gateway: Arc<Gateway>, clock: Arc<dyn Clock>) -> Self {
        Self { store, gateway, clock, analyzer: OnceLock::new(), in_flight: Mutex::new(HashSet::new()) }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn claim(&self, id: &str) -> Option<InFlight<'_>> {
        let mut set = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        if !set.insert(id.to_string()) {
            return None;
        }
        Some(InFlight { set: &self.in_flight, id: id.to_string() })
    }

    // Projects and versions.

    pub fn create_project(&self, name: &str, brief: &str) -> Result<Project> {
        Ok(self.store.create_project(name, brief, self.now())?)
    }

    pub fn project(&self, project_id: &str) -> Result<Project> {
        Ok(self.store.project(project_id)?)
    }

    pub fn projects(&self) -> Result<Vec<Project>> {
        Ok(self.store.projects()?)
    }

    pub fn commit_version(&self, project_id: &str, new: NewVersion) -> Result<PromptVersion> {
        if new.origin == Some(Origin::Revert) {
            return Err(AceError::InvalidInput("use revert to create revert versions".into()));
        }
        if new.origin == Some(Origin::Refined) {
            return Err(AceError::InvalidInput("refined versions are committed from a refinement draft".into()));
        }
        Ok(self.store.commit_version(project_id, new, self.now())?)
    }

    pub fn version(&self, version_id: &str) -> Result<PromptVersion> {
        Ok(self.store.version(version_id)?)
    }

    pub fn versions(&self, project_id: &str) -> Result<Vec<PromptVersion>> {
        Ok(self.store.versions(project_id)?)
    }

    pub fn revert(&self, version_id: &str) -> Result<PromptVersion> {
        Ok(self.store.revert(version_id, self.now())?)
    }

    pub fn lineage(&self, version_id: &str) -> Result<Vec<LineageEntry>> {
        Ok(self.store.lineage(version_id)?)
    }

    pub fn diff(&self, a: &str, b: &str) -> Result<LineDiff> {
        Ok(self.store.diff(a, b)?)
    }

    pub fn design_cycles(&self, project_id: &str) -> Result<Vec<DesignCycle>> {
        Ok(self.store.design_cycles(project_id)?)
    }

    // Elicitation.

    fn load_elicitation(&self, session_id: &str) -> Result<ElicitationSession> {
        let unknown = || ElicitationError::UnknownSession(session_id.to_string());
        let project_id = self.store.locate(DocKind::Elicitations, session_id)?.ok_or_else(unknown)?;
        Ok(self.store.get_doc(&project_id, DocKind::Elicitations, session_id)?.ok_or_else(unknown)?)
    }

    fn save_elicitation(&self, session: &ElicitationSession) -> Result<()> {
        Ok(self.store.put_doc(&session.project_id, DocKind::Elicitations, &session.id, session)?)
    }

    pub fn start_elicitation(&self, project_id: &str) -> Result<ElicitationSession> {
        let project = self.store.project(project_id)?;
        let id = self.store.next_id(IdKind::Elicitation)?;
        let session = elicitation::start(&self.gateway, id, project.id, &project.brief, self.now())?;
        self.save_elicitation(&session)?;
        Ok(session)
    }

    pub fn elicitation(&self, session_id: &str) -> Result<ElicitationSession> {
        self.load_elicitation(session_id)
    }

    pub fn elicitation_message(&self, session_id: &str, text: &str) -> Result<AgentResponse> {
        let _busy = self.claim(session_id).ok_or_else(|| ElicitationError::TurnInFlight(session_id.to_string()))?;
        let mut session = self.load_elicitation(session_id)?;
        let response = elicitation::designer_message(&self.gateway, &mut session, text)?;
        self.save_elicitation(&session)?;
        Ok(response)
    }

    pub fn finalize_elicitation(&self, session_id: &str) -> Result<ElicitationDraft> {
        let _busy = self.claim(session_id).ok_or_else(|| ElicitationError::TurnInFlight(session_id.to_string()))?;
        let mut session = self.load_elicitation(session_id)?;
        let body = elicitation::finalize(&self.gateway, &mut session)?;
        self.save_elicitation(&session)?;
        Ok(ElicitationDraft { session_id: session.id, project_id: session.project_id, body })
    }

    pub fn abandon_elicitation(&self, session_id: &str) -> Result<ElicitationSession> {
        let _busy = self.claim(session_id).ok_or_else(|| ElicitationError::TurnInFlight(session_id.to_string()))?;
        let mut session = self.load_elicitation(session_id)?;
        elicitation::abandon(&mut session)?;
        self.save_elicitation(&session)?;
        Ok(session)
    }

    // Test sessions.

    fn load_session(&self, session_id: &str) -> Result<TestSession> {
        let unknown = || RuntimeError::UnknownSession(session_id.to_string());
        let project_id = self.store.locate(DocKind::Sessions, session_id)?.ok_or_else(unknown)?;
        Ok(self.store.get_doc(&project_id, DocKind::Sessions, session_id)?.ok_or_else(unknown)?)
    }

    pub fn session(&self, session_id: &str) -> Result<SessionView> {
        let session = self.load_session(session_id)?;
        let transcript = self.store.transcript(&session.transcript_id)?;
        Ok(SessionView { session, transcript })
    }

    /// Starts a test session; the robot's greeting becomes utterance 0.
    pub fn start_session(&self, version_id: &str) -> Result<SessionView> {
        let version = self.store.version(version_id)?;
        let effective = compose_effective_prompt(&version.body)?;
        let lock = self.store.project_lock(&version.project_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let sessions: Vec<TestSession> = self.store.list_docs(&version.project_id, DocKind::Sessions)?;
        if sessions.iter().any(|s| s.status == SessionStatus::Active) {
            return Err(RuntimeError::SessionAlreadyActive(version.project_id.clone()).into());
        }
        let turn = robot_turn(&self.gateway, &effective, Vec::new())?;
        let now = self.now();
        let mut transcript = Transcript {
            schema_version: SCHEMA_VERSION.into(),
            id: self.store.next_id(IdKind::Transcript)?,
            project_id: version.project_id.clone(),
            prompt_version_id: version.id.clone(),
            utterances: Vec::new(),
            idle_behaviors: crate::runtime::IdleBehavior::ALL.to_vec(),
            started_at: now,
            ended_at: None,
        };
        transcript.push(Speaker::Robot, turn.segments.clone(), joined_speech(&turn.segments), now);
        let session = TestSession {
            schema_version: SCHEMA_VERSION.into(),
            id: self.store.next_id(IdKind::TestSession)?,
            project_id: version.project_id.clone(),
            prompt_version_id: version.id.clone(),
            transcript_id: transcript.id.clone(),
            status: SessionStatus::Active,
            started_at: now,
            ended_at: None,
        };
        self.store.put_transcript(&transcript)?;
        self.store.put_doc(&session.project_id, DocKind::Sessions, &session.id, &session)?;
        Ok(SessionView { session, transcript })
    }

    pub fn user_turn(&self, session_id: &str, text: &str) -> Result<TurnOutcome> {
        let _busy = self.claim(session_id).ok_or_else(|| RuntimeError::TurnInFlight(session_id.to_string()))?;
        let session = self.load_session(session_id)?;
        if session.status == SessionStatus::Ended {
            return Err(RuntimeError::SessionEnded(session_id.to_string()).into());
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(RuntimeError::EmptyUserText.into());
        }
        let version = self.store.version(&session.prompt_version_id)?;
        let effective = compose_effective_prompt(&version.body)?;
        let mut transcript = self.store.transcript(&session.transcript_id)?;
        transcript.push(Speaker::User, Vec::new(), text.to_string(), self.now());
        let turn = robot_turn(&self.gateway, &effective, transcript.history_messages())?;
        transcript.push(Speaker::Robot, turn.segments.clone(), joined_speech(&turn.segments), self.now());
        self.store.put_transcript(&transcript)?;
        let utterance = transcript.utterances.last().cloned().expect("robot utterance was pushed");
        Ok(TurnOutcome { session_id: session.id, utterance, calls: turn.calls, fell_back: turn.fell_back })
    }

    /// Seals the transcript and links it to the tested version.
    pub fn end_session(&self, session_id: &str) -> Result<Transcript> {
        let _busy = self.claim(session_id).ok_or_else(|| RuntimeError::TurnInFlight(session_id.to_string()))?;
        let mut session = self.load_session(session_id)?;
        if session.status == SessionStatus::Ended {
            return Err(RuntimeError::SessionEnded(session_id.to_string()).into());
        }
        let now = self.now();
        let mut transcript = self.store.transcript(&session.transcript_id)?;
        transcript.ended_at = Some(now);
        self.store.put_transcript(&transcript)?;
        session.status = SessionStatus::Ended;
        session.ended_at = Some(now);
        self.store.put_doc(&session.project_id, DocKind::Sessions, &session.id, &session)?;
        self.store.link(&session.prompt_version_id, LinkKind::Transcript, &transcript.id)?;
        Ok(transcript)
    }

    pub fn transcript(&self, transcript_id: &str) -> Result<Transcript> {
        self.store.transcript(transcript_id).map_err(|e| match e {
            crate::history::HistoryError::UnknownTranscript(id) => AnnotationError::UnknownTranscript(id).into(),
            other => other.into(),
        })
    }

    // Annotations.

    pub fn add_annotation(
        &self,
        transcript_id: &str,
        span: Span,
        tags: &[String],
        comment: Option<String>,
    ) -> Result<Annotation> {
        let transcript = self.transcript(transcript_id)?;
        if transcript.ended_at.is_none() {
            return Err(AnnotationError::TranscriptOpen(transcript_id.to_string()).into());
        }
        let tags = parse_tags(tags)?;
        let lock = self.store.project_lock(&transcript.project_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        // validate before spending an id
        build_annotation(&transcript, String::new(), span, &tags, comment.clone(), self.now())?;
        let id = self.store.next_id(IdKind::Annotation)?;
        let annotation = build_annotation(&transcript, id, span, &tags, comment, self.now())?;
        let mut set = self.store.annotation_set(&transcript)?;
        set.annotations.push(annotation.clone());
        self.store.put_annotation_set(&set)?;
        Ok(annotation)
    }

    pub fn annotations(&self, transcript_id: &str) -> Result<AnnotationSet> {
        let transcript = self.transcript(transcript_id)?;
        Ok(self.store.annotation_set(&transcript)?)
    }

    pub fn conflicts(&self, transcript_id: &str) -> Result<Vec<Conflict>> {
        Ok(detect_conflicts(&self.annotations(transcript_id)?.annotations))
    }

    pub fn digest(&self, transcript_id: &str) -> Result<String> {
        let transcript = self.transcript(transcript_id)?;
        let set = self.store.annotation_set(&transcript)?;
        Ok(render_digest(&transcript, &set.annotations)?)
    }

    // Refinement.

    pub fn generate_suggestions(&self, version_id: &str, transcript_id: &str) -> Result<SuggestionSet> {
        let version = self.store.version(version_id)?;
        let transcript = self.transcript(transcript_id)?;
        if transcript.prompt_version_id != version.id {
            return Err(AceError::InvalidInput(format!(
                "transcript {} was recorded on version {}, not {}",
                transcript.id, transcript.prompt_version_id, version.id
            )));
        }
        let set = self.store.annotation_set(&transcript)?;
        let digest = render_digest(&transcript, &set.annotations)?;
        let (lists, truncated) = generate_suggestions(&self.gateway, &version.body, &transcript, &digest)?;
        let suggestion_set = SuggestionSet {
            schema_version: SCHEMA_VERSION.into(),
            id: self.store.next_id(IdKind::SuggestionSet)?,
            project_id: version.project_id.clone(),
            prompt_version_id: version.id.clone(),
            source_transcript_id: transcript.id.clone(),
            source_annotation_digest_hash: digest_hash(&digest),
            lists,
            truncated,
            designer_edited: false,
            edited_from: None,
            created_at: self.now(),
        };
        self.store.put_suggestion_set(&suggestion_set)?;
        Ok(suggestion_set)
    }

    pub fn suggestion_set(&self, id: &str) -> Result<SuggestionSet> {
        Ok(self.store.suggestion_set(id)?)
    }

    /// Stores designer-edited bullets as a new set derived from `id`.
    pub fn edit_suggestions(&self, id: &str, lists: SuggestionLists) -> Result<SuggestionSet> {
        let original = self.store.suggestion_set(id)?;
        let (lists, truncated) = normalize_lists(lists).map_err(RefinementError::InvalidSuggestions)?;
        if lists == original.lists {
            return Ok(original);
        }
        let edited = SuggestionSet {
            id: self.store.next_id(IdKind::SuggestionSet)?,
            lists,
            truncated,
            designer_edited: true,
            edited_from: Some(original.id.clone()),
            created_at: self.now(),
            ..original
        };
        self.store.put_suggestion_set(&edited)?;
        Ok(edited)
    }

    /// Produces an uncommitted refined prompt. Edited bullets, when given,
    /// are stored first and the draft points at the edited set.
    pub fn refine(
        &self,
        version_id: &str,
        suggestion_set_id: &str,
        edited: Option<SuggestionLists>,
    ) -> Result<RefinedPromptDraft> {
        let version = self.store.version(version_id)?;
        let mut set = self.store.suggestion_set(suggestion_set_id)?;
        if set.prompt_version_id != version.id {
            return Err(AceError::InvalidInput(format!(
                "suggestion set {} was generated for version {}, not {}",
                set.id, set.prompt_version_id, version.id
            )));
        }
        if let Some(lists) = edited {
            set = self.edit_suggestions(&set.id, lists)?;
        }
        let body = generate_refined_body(&self.gateway, &version.body, &set.lists)?;
        Ok(RefinedPromptDraft { body, based_on_version_id: version.id, suggestion_set_id: set.id })
    }

    /// Commits a refinement draft with its full rationale chain.
    pub fn commit_refinement(&self, draft: &RefinedPromptDraft, edited_body: Option<&str>) -> Result<PromptVersion> {
        let parent = self.store.version(&draft.based_on_version_id)?;
        let set = self.store.suggestion_set(&draft.suggestion_set_id)?;
        if set.project_id != parent.project_id {
            return Err(AceError::InvalidInput(format!("suggestion set {} belongs to another project", set.id)));
        }
        let (body, edited) = match edited_body {
            Some(b) => (b.to_string(), b != draft.body),
            None => (draft.body.clone(), false),
        };
        let mut links = Links {
            transcript_ids: vec![set.source_transcript_id.clone()],
            annotation_set_ids: vec![set.source_transcript_id.clone()],
            suggestion_set_ids: vec![set.id.clone()],
        };
        if let Some(original) = &set.edited_from {
            links.suggestion_set_ids.push(original.clone());
        }
        let new = NewVersion::new(body, Origin::Refined).parent(parent.id).links(links).designer_edited(edited);
        Ok(self.store.commit_version(&set.project_id, new, self.now())?)
    }

    // Analysis.

    pub fn analyze_text(&self, text: &str, mode: AnalysisMode) -> Result<AnalysisReport> {
        Ok(self.analyzer.get_or_init(Analyzer::default).analyze_with(text, mode, Some(&self.gateway))?)
    }

    pub fn analyze_version(&self, version_id: &str, mode: AnalysisMode) -> Result<AnalysisReport> {
        let version = self.store.version(version_id)?;
        self.analyze_text(&version.body, mode)
    }
}
