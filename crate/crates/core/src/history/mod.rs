//! Versioned store of projects, prompt versions, transcripts, annotation sets
//! and suggestion sets, kept as one JSON document per entity.
//!
//! Layout under the store root:
//!
//! ```text
//! counters.json
//! projects/<project_id>/project.json
//! projects/<project_id>/prompts/<version_id>.json
//! projects/<project_id>/transcripts/<transcript_id>.json
//! projects/<project_id>/annotations/<transcript_id>.json
//! projects/<project_id>/suggestions/<suggestion_set_id>.json
//! projects/<project_id>/sessions/<session_id>.json
//! projects/<project_id>/elicitations/<session_id>.json
//! ```
//!
//! Every write goes through a temporary file and a rename. Mutations of one
//! project are serialized by a per-project lock; id allocation and project
//! creation share a store-wide lock.

mod diff;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{DiffLine, Hunk, LineDiff, LineKind, PatchError, CONTEXT_LINES};

use crate::annotation::AnnotationSet;
use crate::refinement::SuggestionSet;
use crate::runtime::Transcript;
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("project name is empty")]
    EmptyName,
    #[error("a project named {0:?} already exists")]
    DuplicateName(String),
    #[error("unknown project {0}")]
    UnknownProject(String),
    #[error("unknown prompt version {0}")]
    UnknownVersion(String),
    #[error("unknown parent version {0}")]
    UnknownParent(String),
    #[error("project {0} already has a root version; pass a parent")]
    SecondRoot(String),
    #[error("project {0} has no versions yet; the first commit cannot have a parent")]
    MissingRoot(String),
    #[error("prompt body is empty")]
    EmptyBody,
    #[error("{kind} {id} does not exist in project {project_id}")]
    DanglingLink { kind: LinkKind, id: String, project_id: String },
    #[error("versions {0} and {1} belong to different projects")]
    CrossProjectDiff(String, String),
    #[error("unknown transcript {0}")]
    UnknownTranscript(String),
    #[error("unknown suggestion set {0}")]
    UnknownSuggestionSet(String),
    #[error("revert target body does not match")]
    RevertMismatch,
    #[error("store error at {path}: {message}")]
    Store { path: PathBuf, message: String },
}

impl HistoryError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HistoryError::Store { path: path.to_path_buf(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub schema_version: String,
    pub id: String,
    pub name: String,
    pub brief: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Elicited,
    Manual,
    Refined,
    Revert,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Elicited => "elicited",
            Origin::Manual => "manual",
            Origin::Refined => "refined",
            Origin::Revert => "revert",
        }
    }
}

impl std::str::FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "elicited" => Ok(Origin::Elicited),
            "manual" => Ok(Origin::Manual),
            "refined" => Ok(Origin::Refined),
            "revert" => Ok(Origin::Revert),
            other => Err(format!("unknown origin {other:?} (expected elicited, manual, refined or revert)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Transcript,
    AnnotationSet,
    SuggestionSet,
}

impl std::fmt::Display for LinkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkKind::Transcript => "transcript",
            LinkKind::AnnotationSet => "annotation set",
            LinkKind::SuggestionSet => "suggestion set",
        })
    }
}

/// Rationale links of a version. Annotation sets are keyed by transcript id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Links {
    #[serde(default)]
    pub transcript_ids: Vec<String>,
    #[serde(default)]
    pub annotation_set_ids: Vec<String>,
    #[serde(default)]
    pub suggestion_set_ids: Vec<String>,
}

impl Links {
    pub fn is_empty(&self) -> bool {
        self.transcript_ids.is_empty() && self.annotation_set_ids.is_empty() && self.suggestion_set_ids.is_empty()
    }

    fn add(&mut self, kind: LinkKind, id: &str) {
        let list = match kind {
            LinkKind::Transcript => &mut self.transcript_ids,
            LinkKind::AnnotationSet => &mut self.annotation_set_ids,
            LinkKind::SuggestionSet => &mut self.suggestion_set_ids,
        };
        if !list.iter().any(|x| x == id) {
            list.push(id.to_string());
        }
    }

    fn iter(&self) -> impl Iterator<Item = (LinkKind, &String)> {
        self.transcript_ids
            .iter()
            .map(|id| (LinkKind::Transcript, id))
            .chain(self.annotation_set_ids.iter().map(|id| (LinkKind::AnnotationSet, id)))
            .chain(self.suggestion_set_ids.iter().map(|id| (LinkKind::SuggestionSet, id)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVersion {
    pub schema_version: String,
    pub id: String,
    pub project_id: String,
    /// Position in commit order within the project, from 1.
    pub seq: u64,
    pub parent_id: Option<String>,
    pub body: String,
    pub origin: Origin,
    pub designer_edited: bool,
    pub links: Links,
    pub revert_of: Option<String>,
    pub created_at: DateTime<Utc>,
}

/// Input to [`Store::commit_version`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NewVersion {
    pub body: String,
    pub origin: Option<Origin>,
    pub parent_id: Option<String>,
    pub links: Links,
    pub designer_edited: bool,
}

impl NewVersion {
    pub fn new(body: impl Into<String>, origin: Origin) -> Self {
        Self { body: body.into(), origin: Some(origin), ..Default::default() }
    }

    pub fn parent(mut self, parent_id: impl Into<String>) -> Self {
        self.parent_id = Some(parent_id.into());
        self
    }

    pub fn links(mut self, links: Links) -> Self {
        self.links = links;
        self
    }

    pub fn designer_edited(mut self, edited: bool) -> Self {
        self.designer_edited = edited;
        self
    }
}

/// A version with its rationale links resolved to documents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineageEntry {
    pub version: PromptVersion,
    pub transcripts: Vec<Transcript>,
    pub annotation_sets: Vec<AnnotationSet>,
    pub suggestion_sets: Vec<SuggestionSet>,
    /// Ancestry of the revert target when this version is a revert.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revert_target_lineage: Option<Vec<String>>,
}

/// Read-only view of one design cycle around a version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DesignCycle {
    pub version_id: String,
    pub transcripts_tested: Vec<String>,
    pub annotations_made: usize,
    pub suggestion_sets: Vec<String>,
    pub child_versions: Vec<String>,
}

/// Every document of one project, for structural comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectSnapshot {
    pub project: Project,
    pub versions: Vec<PromptVersion>,
    pub transcripts: Vec<Transcript>,
    pub annotation_sets: Vec<AnnotationSet>,
    pub suggestion_sets: Vec<SuggestionSet>,
}

/// Kinds of sequentially numbered ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdKind {
    Project,
    Version,
    Transcript,
    Annotation,
    SuggestionSet,
    TestSession,
    Elicitation,
}

impl IdKind {
    fn prefix(self) -> &'static str {
        match self {
            IdKind::Project => "proj",
            IdKind::Version => "ver",
            IdKind::Transcript => "tr",
            IdKind::Annotation => "ann",
            IdKind::SuggestionSet => "sug",
            IdKind::TestSession => "ses",
            IdKind::Elicitation => "eli",
        }
    }
}

/// Per-kind document directories inside a project.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocKind {
    Prompts,
    Transcripts,
    Annotations,
    Suggestions,
    Sessions,
    Elicitations,
}

impl DocKind {
    fn dir(self) -> &'static str {
        match self {
            DocKind::Prompts => "prompts",
            DocKind::Transcripts => "transcripts",
            DocKind::Annotations => "annotations",
            DocKind::Suggestions => "suggestions",
            DocKind::Sessions => "sessions",
            DocKind::Elicitations => "elicitations",
        }
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    global: Mutex<()>,
    project_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Serializes `value` as pretty JSON and renames it into place.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), HistoryError> {
    let dir = path.parent().ok_or_else(|| HistoryError::io(path, "path has no parent directory"))?;
    fs::create_dir_all(dir).map_err(|e| HistoryError::io(dir, e))?;
    let mut body = serde_json::to_string_pretty(value).map_err(|e| HistoryError::io(path, e))?;
    body.push('\n');
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HistoryError::io(dir, e))?;
    tmp.write_all(body.as_bytes()).map_err(|e| HistoryError::io(path, e))?;
    tmp.persist(path).map_err(|e| HistoryError::io(path, e.error))?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, HistoryError> {
    match fs::read_to_string(path) {
        Ok(raw) => serde_json::from_str(&raw).map(Some).map_err(|e| HistoryError::io(path, e)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(HistoryError::io(path, e)),
    }
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>, HistoryError> {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(HistoryError::io(dir, e)),
    };
    let mut out = Vec::new();
    for entry in entries {
        out.push(entry.map_err(|e| HistoryError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

impl Store {
    /// Opens (creating if needed) a store and checks that it is writable.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, HistoryError> {
        let root = root.as_ref().to_path_buf();
        let projects = root.join("projects");
        fs::create_dir_all(&projects).map_err(|e| HistoryError::io(&projects, e))?;
        tempfile::NamedTempFile::new_in(&root)
            .map_err(|e| HistoryError::io(&root, format!("store is not writable: {e}")))?;
        Ok(Self { root, global: Mutex::new(()), project_locks: Mutex::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn project_dir(&self, project_id: &str) -> PathBuf {
        self.root.join("projects").join(project_id)
    }

    /// Path of a document inside a project.
    pub fn doc_path(&self, project_id: &str, kind: DocKind, id: &str) -> PathBuf {
        self.project_dir(project_id).join(kind.dir()).join(format!("{id}.json"))
    }

    /// Lock serializing mutations of one project.
    pub fn project_lock(&self, project_id: &str) -> Arc<Mutex<()>> {
        lock(&self.project_locks).entry(project_id.to_string()).or_default().clone()
    }

    /// Allocates the next id of a kind, e.g. `ver-0007`.
    pub fn next_id(&self, kind: IdKind) -> Result<String, HistoryError> {
        let _guard = lock(&self.global);
        self.next_id_locked(kind)
    }

    fn next_id_locked(&self, kind: IdKind) -> Result<String, HistoryError> {
        let path = self.root.join("counters.json");
        let mut counters: BTreeMap<String, u64> = read_json(&path)?.unwrap_or_default();
        let n = counters.entry(kind.prefix().to_string()).or_insert(0);
        *n += 1;
        let id = format!("{}-{:04}", kind.prefix(), n);
        write_json_atomic(&path, &counters)?;
        Ok(id)
    }

    pub fn create_project(&self, name: &str, brief: &str, now: DateTime<Utc>) -> Result<Project, HistoryError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(HistoryError::EmptyName);
        }
        let _guard = lock(&self.global);
        if self.projects()?.iter().any(|p| p.name == name) {
            return Err(HistoryError::DuplicateName(name.to_string()));
        }
        let id = self.next_id_locked(IdKind::Project)?;
        let project = Project {
            schema_version: SCHEMA_VERSION.into(),
            id: id.clone(),
            name: name.to_string(),
            brief: brief.trim().to_string(),
            created_at: now,
        };
        write_json_atomic(&self.project_dir(&id).join("project.json"), &project)?;
        Ok(project)
    }

    pub fn projects(&self) -> Result<Vec<Project>, HistoryError> {
        let mut out = Vec::new();
        for dir in list_dir(&self.root.join("projects"))? {
            if let Some(p) = read_json::<Project>(&dir.join("project.json"))? {
                out.push(p);
            }
        }
        Ok(out)
    }

    pub fn project(&self, project_id: &str) -> Result<Project, HistoryError> {
        if project_id.is_empty() || project_id.contains(['/', '\\', '.']) {
            return Err(HistoryError::UnknownProject(project_id.to_string()));
        }
        read_json(&self.project_dir(project_id).join("project.json"))?
            .ok_or_else(|| HistoryError::UnknownProject(project_id.to_string()))
    }

    /// Reads a document of a project, if present.
    pub fn get_doc<T: DeserializeOwned>(
        &self,
        project_id: &str,
        kind: DocKind,
        id: &str,
    ) -> Result<Option<T>, HistoryError> {
        if id.is_empty() || id.contains(['/', '\\', '.']) {
            return Ok(None);
        }
        read_json(&self.doc_path(project_id, kind, id))
    }

    pub fn put_doc<T: Serialize>(
        &self,
        project_id: &str,
        kind: DocKind,
        id: &str,
        value: &T,
    ) -> Result<(), HistoryError> {
        write_json_atomic(&self.doc_path(project_id, kind, id), value)
    }

    /// All documents of a kind in one project, ordered by id.
    pub fn list_docs<T: DeserializeOwned>(&self, project_id: &str, kind: DocKind) -> Result<Vec<T>, HistoryError> {
        let mut out = Vec::new();
        for path in list_dir(&self.project_dir(project_id).join(kind.dir()))? {
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(doc) = read_json(&path)? {
                    out.push(doc);
                }
            }
        }
        Ok(out)
    }

    /// Finds the project owning a document id.
    pub fn locate(&self, kind: DocKind, id: &str) -> Result<Option<String>, HistoryError> {
        if id.is_empty() || id.contains(['/', '\\', '.']) {
            return Ok(None);
        }
        for dir in list_dir(&self.root.join("projects"))? {
            if dir.join(kind.dir()).join(format!("{id}.json")).is_file() {
                return Ok(dir.file_name().and_then(|n| n.to_str()).map(str::to_string));
            }
        }
        Ok(None)
    }

    pub fn version(&self, version_id: &str) -> Result<PromptVersion, HistoryError> {
        let unknown = || HistoryError::UnknownVersion(version_id.to_string());
        let project_id = self.locate(DocKind::Prompts, version_id)?.ok_or_else(unknown)?;
        self.get_doc(&project_id, DocKind::Prompts, version_id)?.ok_or_else(unknown)
    }

    /// Versions of a project in commit order.
    pub fn versions(&self, project_id: &str) -> Result<Vec<PromptVersion>, HistoryError> {
        self.project(project_id)?;
        let mut versions: Vec<PromptVersion> = self.list_docs(project_id, DocKind::Prompts)?;
        versions.sort_by_key(|v| v.seq);
        Ok(versions)
    }

    /// Most recently committed version of a project.
    pub fn current_version(&self, project_id: &str) -> Result<Option<PromptVersion>, HistoryError> {
        Ok(self.versions(project_id)?.pop())
    }

    fn check_links(&self, project_id: &str, links: &Links) -> Result<(), HistoryError> {
        for (kind, id) in links.iter() {
            let doc = match kind {
                LinkKind::Transcript => DocKind::Transcripts,
                LinkKind::AnnotationSet => DocKind::Annotations,
                LinkKind::SuggestionSet => DocKind::Suggestions,
            };
            if id.contains(['/', '\\', '.']) || !self.doc_path(project_id, doc, id).is_file() {
                return Err(HistoryError::DanglingLink { kind, id: id.clone(), project_id: project_id.to_string() });
            }
        }
        Ok(())
    }

    /// Appends a version to a project's tree.
    pub fn commit_version(
        &self,
        project_id: &str,
        new: NewVersion,
        now: DateTime<Utc>,
    ) -> Result<PromptVersion, HistoryError> {
        let project_lock = self.project_lock(project_id);
        let _guard = lock(&project_lock);
        self.commit_locked(project_id, new, None, now)
    }

    fn commit_locked(
        &self,
        project_id: &str,
        new: NewVersion,
        revert_of: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<PromptVersion, HistoryError> {
        let existing = self.versions(project_id)?;
        if new.body.trim().is_empty() {
            return Err(HistoryError::EmptyBody);
        }
        match (&new.parent_id, existing.is_empty()) {
            (None, false) => return Err(HistoryError::SecondRoot(project_id.to_string())),
            (Some(_), true) => return Err(HistoryError::MissingRoot(project_id.to_string())),
            (Some(parent), false) if !existing.iter().any(|v| &v.id == parent) => {
                return Err(HistoryError::UnknownParent(parent.clone()));
            }
            _ => {}
        }
        self.check_links(project_id, &new.links)?;
        let origin = new.origin.unwrap_or(Origin::Manual);
        if origin == Origin::Revert && revert_of.is_none() {
            return Err(HistoryError::Store {
                path: self.project_dir(project_id),
                message: "revert versions are created through revert".into(),
            });
        }
        let version = PromptVersion {
            schema_version: SCHEMA_VERSION.into(),
            id: self.next_id(IdKind::Version)?,
            project_id: project_id.to_string(),
            seq: existing.last().map_or(1, |v| v.seq + 1),
            parent_id: new.parent_id,
            body: new.body,
            origin,
            designer_edited: new.designer_edited,
            links: new.links,
            revert_of,
            created_at: now,
        };
        self.put_doc(project_id, DocKind::Prompts, &version.id, &version)?;
        Ok(version)
    }

    /// New child of the current leaf carrying the target's body.
    pub fn revert(&self, version_id: &str, now: DateTime<Utc>) -> Result<PromptVersion, HistoryError> {
        let target = self.version(version_id)?;
        let project_lock = self.project_lock(&target.project_id);
        let _guard = lock(&project_lock);
        let leaf = self
            .current_version(&target.project_id)?
            .ok_or_else(|| HistoryError::UnknownVersion(version_id.to_string()))?;
        let new = NewVersion::new(target.body.clone(), Origin::Revert).parent(leaf.id);
        let version = self.commit_locked(&target.project_id, new, Some(target.id.clone()), now)?;
        if version.body != target.body {
            return Err(HistoryError::RevertMismatch);
        }
        Ok(version)
    }

    /// Adds a rationale link to an existing version. Bodies never change.
    pub fn link(&self, version_id: &str, kind: LinkKind, id: &str) -> Result<PromptVersion, HistoryError> {
        let project_id = self
            .locate(DocKind::Prompts, version_id)?
            .ok_or_else(|| HistoryError::UnknownVersion(version_id.to_string()))?;
        let project_lock = self.project_lock(&project_id);
        let _guard = lock(&project_lock);
        let mut version = self.version(version_id)?;
        let mut extra = Links::default();
        extra.add(kind, id);
        self.check_links(&project_id, &extra)?;
        version.links.add(kind, id);
        self.put_doc(&project_id, DocKind::Prompts, version_id, &version)?;
        Ok(version)
    }

    /// Root-to-version path with rationale links resolved.
    pub fn lineage(&self, version_id: &str) -> Result<Vec<LineageEntry>, HistoryError> {
        let version = self.version(version_id)?;
        let all: HashMap<String, PromptVersion> =
            self.versions(&version.project_id)?.into_iter().map(|v| (v.id.clone(), v)).collect();
        let chain = ancestry(&all, version_id)?;
        let mut out = Vec::with_capacity(chain.len());
        for id in chain.iter().rev() {
            let v = all[id].clone();
            let project_id = &v.project_id;
            let mut transcripts = Vec::new();
            for t in &v.links.transcript_ids {
                transcripts.push(self.transcript_in(project_id, t)?);
            }
            let mut annotation_sets = Vec::new();
            for t in &v.links.annotation_set_ids {
                annotation_sets.push(
                    self.get_doc(project_id, DocKind::Annotations, t)?
                        .ok_or_else(|| HistoryError::UnknownTranscript(t.clone()))?,
                );
            }
            let mut suggestion_sets = Vec::new();
            for s in &v.links.suggestion_set_ids {
                suggestion_sets.push(
                    self.get_doc(project_id, DocKind::Suggestions, s)?
                        .ok_or_else(|| HistoryError::UnknownSuggestionSet(s.clone()))?,
                );
            }
            let revert_target_lineage = match &v.revert_of {
                Some(target) => {
                    let mut path = ancestry(&all, target)?;
                    path.reverse();
                    Some(path)
                }
                None => None,
            };
            out.push(LineageEntry { version: v, transcripts, annotation_sets, suggestion_sets, revert_target_lineage });
        }
        Ok(out)
    }

    pub fn diff(&self, a: &str, b: &str) -> Result<LineDiff, HistoryError> {
        let va = self.version(a)?;
        let vb = self.version(b)?;
        if va.project_id != vb.project_id {
            return Err(HistoryError::CrossProjectDiff(va.id, vb.id));
        }
        Ok(LineDiff::compute(&va.id, &va.body, &vb.id, &vb.body))
    }

    fn transcript_in(&self, project_id: &str, id: &str) -> Result<Transcript, HistoryError> {
        self.get_doc(project_id, DocKind::Transcripts, id)?
            .ok_or_else(|| HistoryError::UnknownTranscript(id.to_string()))
    }

    pub fn transcript(&self, id: &str) -> Result<Transcript, HistoryError> {
        let project_id =
            self.locate(DocKind::Transcripts, id)?.ok_or_else(|| HistoryError::UnknownTranscript(id.to_string()))?;
        self.transcript_in(&project_id, id)
    }

    pub fn put_transcript(&self, transcript: &Transcript) -> Result<(), HistoryError> {
        self.put_doc(&transcript.project_id, DocKind::Transcripts, &transcript.id, transcript)
    }

    /// Annotation set of a transcript; empty when none were made yet.
    pub fn annotation_set(&self, transcript: &Transcript) -> Result<AnnotationSet, HistoryError> {
        Ok(self
            .get_doc(&transcript.project_id, DocKind::Annotations, &transcript.id)?
            .unwrap_or_else(|| AnnotationSet::new(&transcript.id, &transcript.project_id)))
    }

    pub fn put_annotation_set(&self, set: &AnnotationSet) -> Result<(), HistoryError> {
        self.put_doc(&set.project_id, DocKind::Annotations, &set.transcript_id, set)
    }

    pub fn suggestion_set(&self, id: &str) -> Result<SuggestionSet, HistoryError> {
        let unknown = || HistoryError::UnknownSuggestionSet(id.to_string());
        let project_id = self.locate(DocKind::Suggestions, id)?.ok_or_else(unknown)?;
        self.get_doc(&project_id, DocKind::Suggestions, id)?.ok_or_else(unknown)
    }

    pub fn put_suggestion_set(&self, set: &SuggestionSet) -> Result<(), HistoryError> {
        self.put_doc(&set.project_id, DocKind::Suggestions, &set.id, set)
    }

    /// One cycle per version: what was tested on it and what came out of it.
    pub fn design_cycles(&self, project_id: &str) -> Result<Vec<DesignCycle>, HistoryError> {
        let versions = self.versions(project_id)?;
        let transcripts: Vec<Transcript> = self.list_docs(project_id, DocKind::Transcripts)?;
        let annotation_sets: Vec<AnnotationSet> = self.list_docs(project_id, DocKind::Annotations)?;
        let suggestion_sets: Vec<SuggestionSet> = self.list_docs(project_id, DocKind::Suggestions)?;
        Ok(versions
            .iter()
            .map(|v| {
                let tested: Vec<String> =
                    transcripts.iter().filter(|t| t.prompt_version_id == v.id).map(|t| t.id.clone()).collect();
                let tested_set: BTreeSet<&String> = tested.iter().collect();
                DesignCycle {
                    version_id: v.id.clone(),
                    annotations_made: annotation_sets
                        .iter()
                        .filter(|s| tested_set.contains(&s.transcript_id))
                        .map(|s| s.annotations.len())
                        .sum(),
                    suggestion_sets: suggestion_sets
                        .iter()
                        .filter(|s| s.prompt_version_id == v.id)
                        .map(|s| s.id.clone())
                        .collect(),
                    child_versions: versions
                        .iter()
                        .filter(|c| c.parent_id.as_deref() == Some(v.id.as_str()))
                        .map(|c| c.id.clone())
                        .collect(),
                    transcripts_tested: tested,
                }
            })
            .collect())
    }

    /// Number of versions that were tested at least once.
    pub fn cycle_count(&self, project_id: &str) -> Result<usize, HistoryError> {
        Ok(self.design_cycles(project_id)?.iter().filter(|c| !c.transcripts_tested.is_empty()).count())
    }

    pub fn snapshot(&self, project_id: &str) -> Result<ProjectSnapshot, HistoryError> {
        Ok(ProjectSnapshot {
            project: self.project(project_id)?,
            versions: self.versions(project_id)?,
            transcripts: self.list_docs(project_id, DocKind::Transcripts)?,
            annotation_sets: self.list_docs(project_id, DocKind::Annotations)?,
            suggestion_sets: self.list_docs(project_id, DocKind::Suggestions)?,
        })
    }

    /// Checks single root, parent resolution, acyclicity, revert bodies and links.
    pub fn check_invariants(&self, project_id: &str) -> Result<(), String> {
        let versions = self.versions(project_id).map_err(|e| e.to_string())?;
        let by_id: HashMap<String, PromptVersion> = versions.iter().map(|v| (v.id.clone(), v.clone())).collect();
        let roots = versions.iter().filter(|v| v.parent_id.is_none()).count();
        if !versions.is_empty() && roots != 1 {
            return Err(format!("expected one root, found {roots}"));
        }
        for v in &versions {
            if v.project_id != project_id {
                return Err(format!("{} claims project {}", v.id, v.project_id));
            }
            ancestry(&by_id, &v.id).map_err(|e| e.to_string())?;
            if let Some(p) = &v.parent_id {
                if by_id[p].seq >= v.seq {
                    return Err(format!("{} is older than its parent {p}", v.id));
                }
            }
            match (v.origin, &v.revert_of) {
                (Origin::Revert, Some(target)) => {
                    let t = by_id.get(target).ok_or_else(|| format!("{} reverts unknown {target}", v.id))?;
                    if t.body != v.body {
                        return Err(format!("{} body differs from revert target {target}", v.id));
                    }
                }
                (Origin::Revert, None) => return Err(format!("{} is a revert without a target", v.id)),
                (_, Some(_)) => return Err(format!("{} has revert_of but origin {}", v.id, v.origin.as_str())),
                _ => {}
            }
            self.check_links(project_id, &v.links).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// Ids from `id` up to the root. Fails on a missing parent or a cycle.
fn ancestry(all: &HashMap<String, PromptVersion>, id: &str) -> Result<Vec<String>, HistoryError> {
    let mut chain = Vec::new();
    let mut seen = BTreeSet::new();
    let mut cursor = Some(id.to_string());
    while let Some(current) = cursor {
        if !seen.insert(current.clone()) {
            return Err(HistoryError::Store { path: PathBuf::new(), message: format!("cycle through {current}") });
        }
        let v = all.get(&current).ok_or_else(|| HistoryError::UnknownParent(current.clone()))?;
        chain.push(current);
        cursor = v.parent_id.clone();
    }
    Ok(chain)
}
