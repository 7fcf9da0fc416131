//! Random commit/revert/link sequences checked against an in-memory model.

use ace_core::annotation::AnnotationSet;
use ace_core::clock::{Clock, FixedClock};
use ace_core::history::{HistoryError, LineDiff, LinkKind, Links, NewVersion, Origin, PromptVersion, Store};
use ace_core::refinement::{SuggestionLists, SuggestionSet};
use ace_core::runtime::{IdleBehavior, Transcript};
use chrono::{DateTime, Utc};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

const BODIES: &[&str] = &[
    "Be kind.\n",
    "Be kind.",
    "Line one\nLine two\n",
    "Ünïcode 🚀 body\nsecond line\n",
    "A\nB\nC\nD\n",
    "A\nB\nX\nD\nE\n",
];

#[derive(Debug, Clone)]
pub enum HistoryOp {
    /// Commit a body under an existing version (or as root when empty).
    Commit {
        parent: prop::sample::Index,
        body: usize,
    },
    Revert {
        target: prop::sample::Index,
    },
    Link {
        version: prop::sample::Index,
        kind: usize,
    },
    /// Invalid operations that must leave the tree unchanged.
    SecondRoot,
    UnknownParent,
    EmptyBody,
    DanglingLink {
        version: prop::sample::Index,
    },
    Reopen,
}

pub fn history_ops() -> impl Strategy<Value = Vec<HistoryOp>> {
    let op = prop_oneof![
        6 => (any::<prop::sample::Index>(), 0..BODIES.len()).prop_map(|(parent, body)| HistoryOp::Commit { parent, body }),
        3 => any::<prop::sample::Index>().prop_map(|target| HistoryOp::Revert { target }),
        3 => (any::<prop::sample::Index>(), 0..3usize).prop_map(|(version, kind)| HistoryOp::Link { version, kind }),
        1 => Just(HistoryOp::SecondRoot),
        1 => Just(HistoryOp::UnknownParent),
        1 => Just(HistoryOp::EmptyBody),
        1 => any::<prop::sample::Index>().prop_map(|version| HistoryOp::DanglingLink { version }),
        1 => Just(HistoryOp::Reopen),
    ];
    prop::collection::vec(op, 1..14)
}

#[derive(Debug, Clone, PartialEq)]
struct ModelVersion {
    id: String,
    parent_id: Option<String>,
    body: String,
    origin: Origin,
    revert_of: Option<String>,
    links: Links,
}

fn now() -> DateTime<Utc> {
    FixedClock::parse("2025-01-01T00:00:00Z").unwrap().now()
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

/// Seeds one transcript, its annotation set and a suggestion set to link to.
fn seed_docs(store: &Store, project_id: &str) -> Result<[String; 3], HistoryError> {
    let transcript = Transcript {
        schema_version: "1".into(),
        id: "tr-0001".into(),
        project_id: project_id.into(),
        prompt_version_id: "ver-0000".into(),
        utterances: Vec::new(),
        idle_behaviors: IdleBehavior::ALL.to_vec(),
        started_at: now(),
        ended_at: Some(now()),
    };
    store.put_transcript(&transcript)?;
    store.put_annotation_set(&AnnotationSet::new(&transcript.id, project_id))?;
    let set = SuggestionSet {
        schema_version: "1".into(),
        id: "sug-0001".into(),
        project_id: project_id.into(),
        prompt_version_id: "ver-0000".into(),
        source_transcript_id: transcript.id.clone(),
        source_annotation_digest_hash: "0".repeat(64),
        lists: SuggestionLists::default(),
        truncated: Vec::new(),
        designer_edited: false,
        edited_from: None,
        created_at: now(),
    };
    store.put_suggestion_set(&set)?;
    Ok([transcript.id.clone(), transcript.id, set.id])
}

fn link_kind(k: usize) -> LinkKind {
    [LinkKind::Transcript, LinkKind::AnnotationSet, LinkKind::SuggestionSet][k]
}

fn add_link(links: &mut Links, kind: LinkKind, id: &str) {
    let list = match kind {
        LinkKind::Transcript => &mut links.transcript_ids,
        LinkKind::AnnotationSet => &mut links.annotation_set_ids,
        LinkKind::SuggestionSet => &mut links.suggestion_set_ids,
    };
    if !list.iter().any(|x| x == id) {
        list.push(id.to_string());
    }
}

fn compare(store: &Store, project_id: &str, model: &[ModelVersion]) -> Result<(), TestCaseError> {
    let stored: Vec<PromptVersion> = store.versions(project_id).map_err(fail)?;
    prop_assert_eq!(stored.len(), model.len());
    for (i, (s, m)) in stored.iter().zip(model).enumerate() {
        prop_assert_eq!(s.seq, i as u64 + 1);
        prop_assert_eq!(&s.id, &m.id);
        prop_assert_eq!(&s.parent_id, &m.parent_id);
        prop_assert_eq!(s.body.as_bytes(), m.body.as_bytes());
        prop_assert_eq!(s.origin, m.origin);
        prop_assert_eq!(&s.revert_of, &m.revert_of);
        prop_assert_eq!(&s.links, &m.links);
    }
    let current = store.current_version(project_id).map_err(fail)?.map(|v| v.id);
    prop_assert_eq!(current, model.last().map(|v| v.id.clone()));
    store.check_invariants(project_id).map_err(fail)?;
    Ok(())
}

/// Runs one sequence in a fresh store and checks it step by step.
pub fn check_history_sequence(ops: &[HistoryOp]) -> Result<(), TestCaseError> {
    let dir = tempfile::tempdir().map_err(fail)?;
    let mut store = Store::open(dir.path()).map_err(fail)?;
    let project = store.create_project("model", "", now()).map_err(fail)?;
    let pid = project.id.clone();
    let docs = seed_docs(&store, &pid).map_err(fail)?;
    let mut model: Vec<ModelVersion> = Vec::new();

    for op in ops {
        match op {
            HistoryOp::Commit { parent, body } => {
                let parent_id = (!model.is_empty()).then(|| model[parent.index(model.len())].id.clone());
                let mut new = NewVersion::new(BODIES[*body], Origin::Manual);
                new.parent_id = parent_id.clone();
                let v = store.commit_version(&pid, new, now()).map_err(fail)?;
                model.push(ModelVersion {
                    id: v.id,
                    parent_id,
                    body: BODIES[*body].into(),
                    origin: Origin::Manual,
                    revert_of: None,
                    links: Links::default(),
                });
            }
            HistoryOp::Revert { target } => {
                if model.is_empty() {
                    continue;
                }
                let t = model[target.index(model.len())].clone();
                let leaf = model.last().unwrap().id.clone();
                let v = store.revert(&t.id, now()).map_err(fail)?;
                prop_assert_eq!(v.body.as_bytes(), t.body.as_bytes());
                model.push(ModelVersion {
                    id: v.id,
                    parent_id: Some(leaf),
                    body: t.body,
                    origin: Origin::Revert,
                    revert_of: Some(t.id),
                    links: Links::default(),
                });
            }
            HistoryOp::Link { version, kind } => {
                if model.is_empty() {
                    continue;
                }
                let i = version.index(model.len());
                let kind_v = link_kind(*kind);
                store.link(&model[i].id, kind_v, &docs[*kind]).map_err(fail)?;
                add_link(&mut model[i].links, kind_v, &docs[*kind]);
            }
            HistoryOp::SecondRoot => {
                let r = store.commit_version(&pid, NewVersion::new("root again", Origin::Manual), now());
                if model.is_empty() {
                    let v = r.map_err(fail)?;
                    model.push(ModelVersion {
                        id: v.id,
                        parent_id: None,
                        body: "root again".into(),
                        origin: Origin::Manual,
                        revert_of: None,
                        links: Links::default(),
                    });
                } else {
                    prop_assert!(matches!(r, Err(HistoryError::SecondRoot(_))), "{:?}", r);
                }
            }
            HistoryOp::UnknownParent => {
                let r = store.commit_version(&pid, NewVersion::new("x", Origin::Manual).parent("ver-9999"), now());
                prop_assert!(
                    matches!(r, Err(HistoryError::UnknownParent(_) | HistoryError::MissingRoot(_))),
                    "{:?}",
                    r
                );
            }
            HistoryOp::EmptyBody => {
                let mut new = NewVersion::new("  \n", Origin::Manual);
                new.parent_id = model.last().map(|v| v.id.clone());
                let r = store.commit_version(&pid, new, now());
                prop_assert!(matches!(r, Err(HistoryError::EmptyBody)), "{:?}", r);
            }
            HistoryOp::DanglingLink { version } => {
                if model.is_empty() {
                    continue;
                }
                let id = &model[version.index(model.len())].id;
                let r = store.link(id, LinkKind::Transcript, "tr-9999");
                prop_assert!(matches!(r, Err(HistoryError::DanglingLink { .. })), "{:?}", r);
            }
            HistoryOp::Reopen => {
                let before = store.snapshot(&pid).map_err(fail)?;
                store = Store::open(dir.path()).map_err(fail)?;
                prop_assert_eq!(store.snapshot(&pid).map_err(fail)?, before);
            }
        }
        compare(&store, &pid, &model)?;
    }

    // persistence round-trip and diff consistency on the final tree
    let before = store.snapshot(&pid).map_err(fail)?;
    let reopened = Store::open(dir.path()).map_err(fail)?;
    prop_assert_eq!(reopened.snapshot(&pid).map_err(fail)?, before);
    if let (Some(first), Some(last)) = (model.first(), model.last()) {
        let diff: LineDiff = reopened.diff(&first.id, &last.id).map_err(fail)?;
        prop_assert_eq!(diff.apply(&first.body).map_err(fail)?, last.body.clone());
    }
    Ok(())
}
