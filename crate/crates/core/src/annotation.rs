//! Span annotations on transcripts, conflict detection, and the feedback
//! digest that feeds refinement.
//!
//! Spans are measured in Unicode scalar values and never cross an utterance
//! boundary. Annotations may overlap or nest; contradictory ones are reported
//! by [`detect_conflicts`] but never rejected.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::runtime::Transcript;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("unknown transcript {0}")]
    UnknownTranscript(String),
    #[error("invalid span: {0}")]
    InvalidSpan(String),
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("an annotation needs at least one tag")]
    EmptyTagSet,
    #[error("transcript {0} has no annotations")]
    NoAnnotations(String),
    #[error("transcript {0} belongs to a session that is still running")]
    TranscriptOpen(String),
}

/// Feedback tags, declared in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Liked,
    Disliked,
    Necessary,
    Unnecessary,
    Clear,
    Ambiguous,
    Informative,
    Redundant,
    Concise,
    Wordy,
    OnTopic,
    OffTopic,
    Helpful,
    Confusing,
}

impl Tag {
    pub const ALL: [Tag; 14] = [
        Tag::Liked,
        Tag::Disliked,
        Tag::Necessary,
        Tag::Unnecessary,
        Tag::Clear,
        Tag::Ambiguous,
        Tag::Informative,
        Tag::Redundant,
        Tag::Concise,
        Tag::Wordy,
        Tag::OnTopic,
        Tag::OffTopic,
        Tag::Helpful,
        Tag::Confusing,
    ];

    /// Opposing pairs, positive tag first.
    pub const ANTONYMS: [(Tag, Tag); 7] = [
        (Tag::Liked, Tag::Disliked),
        (Tag::Necessary, Tag::Unnecessary),
        (Tag::Clear, Tag::Ambiguous),
        (Tag::Informative, Tag::Redundant),
        (Tag::Concise, Tag::Wordy),
        (Tag::OnTopic, Tag::OffTopic),
        (Tag::Helpful, Tag::Confusing),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Liked => "liked",
            Tag::Disliked => "disliked",
            Tag::Necessary => "necessary",
            Tag::Unnecessary => "unnecessary",
            Tag::Clear => "clear",
            Tag::Ambiguous => "ambiguous",
            Tag::Informative => "informative",
            Tag::Redundant => "redundant",
            Tag::Concise => "concise",
            Tag::Wordy => "wordy",
            Tag::OnTopic => "on_topic",
            Tag::OffTopic => "off_topic",
            Tag::Helpful => "helpful",
            Tag::Confusing => "confusing",
        }
    }

    pub fn antonym(self) -> Tag {
        Tag::ANTONYMS
            .iter()
            .find_map(|&(a, b)| {
                if a == self {
                    Some(b)
                } else if b == self {
                    Some(a)
                } else {
                    None
                }
            })
            .expect("every tag has an antonym")
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Tag::ALL.into_iter().find(|t| t.as_str() == norm).ok_or_else(|| AnnotationError::UnknownTag(s.to_string()))
    }
}

/// Parses tag names, returning them deduplicated in canonical order.
pub fn parse_tags<S: AsRef<str>>(names: &[S]) -> Result<Vec<Tag>, AnnotationError> {
    let mut tags = names.iter().map(|n| n.as_ref().parse()).collect::<Result<Vec<Tag>, _>>()?;
    tags.sort();
    tags.dedup();
    if tags.is_empty() {
        return Err(AnnotationError::EmptyTagSet);
    }
    Ok(tags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub utterance_index: usize,
    /// Inclusive, in Unicode scalar values.
    pub start: usize,
    /// Exclusive, in Unicode scalar values.
    pub end: usize,
}

impl Span {
    pub fn new(utterance_index: usize, start: usize, end: usize) -> Self {
        Self { utterance_index, start, end }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.utterance_index == other.utterance_index && self.start < other.end && other.start < self.end
    }

    /// Checks the span against the transcript and returns the covered text.
    pub fn excerpt<'t>(&self, transcript: &'t Transcript) -> Result<&'t str, AnnotationError> {
        let utterance = transcript.utterances.get(self.utterance_index).ok_or_else(|| {
            AnnotationError::InvalidSpan(format!(
                "utterance {} does not exist (transcript has {})",
                self.utterance_index,
                transcript.utterances.len()
            ))
        })?;
        let text = utterance.text.as_str();
        let len = text.chars().count();
        if self.start >= self.end || self.end > len {
            return Err(AnnotationError::InvalidSpan(format!(
                "{}..{} is not a non-empty range within 0..{len}",
                self.start, self.end
            )));
        }
        Ok(slice_chars(text, self.start, self.end))
    }
}

/// Slices `text` by scalar-value offsets. Callers ensure the range is valid.
pub fn slice_chars(text: &str, start: usize, end: usize) -> &str {
    let mut idx = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let s = idx.nth(start).unwrap_or(text.len());
    let e = if end > start { idx.nth(end - start - 1).unwrap_or(text.len()) } else { s };
    &text[s..e]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub transcript_id: String,
    pub span: Span,
    /// Non-empty, canonical order, no duplicates.
    pub tags: Vec<Tag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub created_at: DateTime<Utc>,
}

/// All annotations on one transcript, persisted as one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub schema_version: String,
    pub transcript_id: String,
    pub project_id: String,
    pub annotations: Vec<Annotation>,
}

impl AnnotationSet {
    pub fn new(transcript_id: &str, project_id: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            transcript_id: transcript_id.into(),
            project_id: project_id.into(),
            annotations: Vec::new(),
        }
    }
}

/// Builds a validated annotation; the caller assigns the id and persists it.
pub fn build_annotation(
    transcript: &Transcript,
    id: String,
    span: Span,
    tags: &[Tag],
    comment: Option<String>,
    created_at: DateTime<Utc>,
) -> Result<Annotation, AnnotationError> {
    span.excerpt(transcript)?;
    let mut tags = tags.to_vec();
    tags.sort();
    tags.dedup();
    if tags.is_empty() {
        return Err(AnnotationError::EmptyTagSet);
    }
    let comment = comment.map(|c| c.trim().to_string()).filter(|c| !c.is_empty());
    Ok(Annotation { id, transcript_id: transcript.id.clone(), span, tags, comment, created_at })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    /// Lexicographically smaller annotation id.
    pub first: String,
    pub second: String,
    /// Opposing tag pairs present across the two annotations, positive tag first.
    pub pairs: Vec<(Tag, Tag)>,
}

fn opposing_pairs(a: &Annotation, b: &Annotation) -> Vec<(Tag, Tag)> {
    Tag::ANTONYMS
        .iter()
        .copied()
        .filter(|&(p, n)| (a.tags.contains(&p) && b.tags.contains(&n)) || (a.tags.contains(&n) && b.tags.contains(&p)))
        .collect()
}

/// Pairs of overlapping annotations carrying opposing tags. Each unordered
/// pair is reported once; the result is sorted by annotation ids.
pub fn detect_conflicts(annotations: &[Annotation]) -> Vec<Conflict> {
    let mut out = Vec::new();
    for (i, a) in annotations.iter().enumerate() {
        for b in &annotations[i + 1..] {
            if !a.span.overlaps(&b.span) {
                continue;
            }
            let pairs = opposing_pairs(a, b);
            if pairs.is_empty() {
                continue;
            }
            let (first, second) = if a.id <= b.id { (a, b) } else { (b, a) };
            out.push(Conflict { first: first.id.clone(), second: second.id.clone(), pairs });
        }
    }
    out.sort_by(|x, y| (&x.first, &x.second).cmp(&(&y.first, &y.second)));
    out
}

fn digest_order(a: &Annotation, b: &Annotation) -> Ordering {
    a.span
        .cmp(&b.span)
        .then_with(|| a.tags.cmp(&b.tags))
        .then_with(|| a.comment.cmp(&b.comment))
        .then_with(|| a.id.cmp(&b.id))
}

/// Renders the plain-text feedback digest for one transcript.
///
/// Annotations appear in span order and are numbered from 1; conflicts refer
/// to those numbers. Ids and timestamps are left out so the digest depends
/// only on the annotated content.
pub fn render_digest(transcript: &Transcript, annotations: &[Annotation]) -> Result<String, AnnotationError> {
    if annotations.is_empty() {
        return Err(AnnotationError::NoAnnotations(transcript.id.clone()));
    }
    let mut ordered: Vec<&Annotation> = annotations.iter().collect();
    ordered.sort_by(|a, b| digest_order(a, b));

    let mut out = format!("Annotated feedback ({} annotations)\n", ordered.len());
    for (n, a) in ordered.iter().enumerate() {
        let utterance = &transcript.utterances[a.span.utterance_index];
        let excerpt = a.span.excerpt(transcript)?;
        let tags: Vec<&str> = a.tags.iter().map(|t| t.as_str()).collect();
        out.push_str(&format!(
            "\n[{}] {} utterance {}, characters {}-{}\n    excerpt: \"{}\"\n    tags: {}\n",
            n + 1,
            utterance.speaker.as_str(),
            a.span.utterance_index,
            a.span.start,
            a.span.end,
            excerpt,
            tags.join(", ")
        ));
        if let Some(comment) = &a.comment {
            out.push_str(&format!("    comment: {comment}\n"));
        }
    }

    let ordered_owned: Vec<Annotation> = ordered.iter().map(|a| (*a).clone()).collect();
    let number = |id: &str| ordered.iter().position(|a| a.id == id).map(|i| i + 1).unwrap_or(0);
    let mut conflicts: Vec<(usize, usize, String)> = detect_conflicts(&ordered_owned)
        .into_iter()
        .map(|c| {
            let (x, y) = (number(&c.first), number(&c.second));
            let pairs: Vec<String> = c.pairs.iter().map(|(p, n)| format!("{p}/{n}")).collect();
            (x.min(y), x.max(y), pairs.join(", "))
        })
        .collect();
    conflicts.sort();
    out.push_str("\nConflicting feedback:\n");
    if conflicts.is_empty() {
        out.push_str("- none\n");
    }
    for (x, y, pairs) in conflicts {
        out.push_str(&format!("- [{x}] and [{y}] overlap with opposing tags: {pairs}\n"));
    }
    Ok(out)
}

pub fn digest_hash(digest: &str) -> String {
    hex::encode(Sha256::digest(digest.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{RobotSegment, Speaker, Utterance};

    fn ts() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z").unwrap().with_timezone(&Utc)
    }

    pub(crate) fn transcript(texts: &[&str]) -> Transcript {
        Transcript {
            schema_version: SCHEMA_VERSION.into(),
            id: "tr-1".into(),
            project_id: "proj-1".into(),
            prompt_version_id: "ver-1".into(),
            utterances: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Utterance {
                    index: i,
                    speaker: if i % 2 == 0 { Speaker::Robot } else { Speaker::User },
                    text: t.to_string(),
                    segments: if i % 2 == 0 { vec![RobotSegment::fallback(t)] } else { vec![] },
                    timestamp: ts(),
                })
                .collect(),
            idle_behaviors: crate::runtime::IdleBehavior::ALL.to_vec(),
            started_at: ts(),
            ended_at: Some(ts()),
        }
    }

    fn ann(t: &Transcript, id: &str, span: Span, tags: &[Tag], comment: Option<&str>) -> Annotation {
        build_annotation(t, id.into(), span, tags, comment.map(String::from), ts()).unwrap()
    }

    #[test]
    fn test_taxonomy() {
        assert_eq!(Tag::ALL.len(), 14);
        for t in Tag::ALL {
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<Tag>(&json).unwrap(), t);
            assert_eq!(t.as_str().parse::<Tag>().unwrap(), t);
            assert_eq!(t.antonym().antonym(), t);
        }
        assert_eq!("off-topic".parse::<Tag>().unwrap(), Tag::OffTopic);
        for removed in ["polite", "rude", "other"] {
            assert_eq!(removed.parse::<Tag>(), Err(AnnotationError::UnknownTag(removed.into())));
        }
        assert_eq!(parse_tags::<&str>(&[]), Err(AnnotationError::EmptyTagSet));
        assert_eq!(parse_tags(&["necessary", "liked", "liked"]).unwrap(), vec![Tag::Liked, Tag::Necessary]);
    }

    #[test]
    fn test_add_annotation_formative_example() {
        let t = transcript(&["I'm so sorry to hear that you're feeling unwell. Let's go through your symptoms."]);
        let start = 7;
        let excerpt = "sorry to hear that you're feeling unwell";
        let span = Span::new(0, start, start + excerpt.chars().count());
        assert_eq!(span.excerpt(&t).unwrap(), excerpt);
        let a = ann(&t, "ann-1", span, &[Tag::Necessary, Tag::Liked], Some("builds rapport through sympathy"));
        assert_eq!(a.tags, vec![Tag::Liked, Tag::Necessary]);
    }

    #[test]
    fn test_invalid_spans() {
        let t = transcript(&["héllo"]);
        for span in [Span::new(0, 2, 2), Span::new(0, 3, 1), Span::new(0, 0, 6), Span::new(1, 0, 1)] {
            assert!(matches!(span.excerpt(&t), Err(AnnotationError::InvalidSpan(_))), "{span:?}");
        }
        assert_eq!(Span::new(0, 1, 5).excerpt(&t).unwrap(), "éllo");
        let err = build_annotation(&t, "a".into(), Span::new(0, 0, 1), &[], None, ts());
        assert_eq!(err, Err(AnnotationError::EmptyTagSet));
    }

    #[test]
    fn test_conflicts() {
        let t = transcript(&["Knock knock, who is there? A comet!", "ha", "Next fact."]);
        let disjoint = [
            ann(&t, "a", Span::new(0, 0, 5), &[Tag::Liked], None),
            ann(&t, "b", Span::new(0, 6, 10), &[Tag::Disliked], None),
        ];
        assert!(detect_conflicts(&disjoint).is_empty());

        let other_utterance = [
            ann(&t, "a", Span::new(0, 0, 5), &[Tag::Liked], None),
            ann(&t, "b", Span::new(2, 0, 5), &[Tag::Disliked], None),
        ];
        assert!(detect_conflicts(&other_utterance).is_empty());

        let same = [
            ann(&t, "b", Span::new(0, 0, 5), &[Tag::Disliked], None),
            ann(&t, "a", Span::new(0, 0, 5), &[Tag::Liked], None),
        ];
        let c = detect_conflicts(&same);
        assert_eq!(
            c,
            vec![Conflict { first: "a".into(), second: "b".into(), pairs: vec![(Tag::Liked, Tag::Disliked)] }]
        );

        // three mutually overlapping annotations: liked, disliked, wordy
        let three = [
            ann(&t, "a", Span::new(0, 0, 20), &[Tag::Liked], None),
            ann(&t, "b", Span::new(0, 5, 25), &[Tag::Disliked], None),
            ann(&t, "c", Span::new(0, 10, 30), &[Tag::Wordy], None),
        ];
        assert_eq!(detect_conflicts(&three).len(), 1);
    }

    #[test]
    fn test_digest_rendering() {
        let t = transcript(&["Did you know Saturn could float in a bathtub?", "why", "Because it is light!"]);
        let anns = vec![
            ann(&t, "ann-2", Span::new(2, 0, 7), &[Tag::Confusing], Some("needs a reason")),
            ann(&t, "ann-1", Span::new(0, 13, 44), &[Tag::Informative, Tag::Liked], None),
            ann(&t, "ann-3", Span::new(2, 0, 7), &[Tag::Helpful], None),
        ];
        let digest = render_digest(&t, &anns).unwrap();
        let expected = "\
Annotated feedback (3 annotations)

[1] robot utterance 0, characters 13-44
    excerpt: \"Saturn could float in a bathtub\"
    tags: liked, informative

[2] robot utterance 2, characters 0-7
    excerpt: \"Because\"
    tags: helpful

[3] robot utterance 2, characters 0-7
    excerpt: \"Because\"
    tags: confusing
    comment: needs a reason

Conflicting feedback:
- [2] and [3] overlap with opposing tags: helpful/confusing
";
        assert_eq!(digest, expected);
        let mut reversed = anns.clone();
        reversed.reverse();
        assert_eq!(render_digest(&t, &reversed).unwrap(), digest);
        assert_eq!(render_digest(&t, &[]), Err(AnnotationError::NoAnnotations("tr-1".into())));
        assert_eq!(digest_hash(&digest).len(), 64);
    }

    #[test]
    fn test_slice_chars() {
        assert_eq!(slice_chars("a🚀b", 1, 2), "🚀");
        assert_eq!(slice_chars("a🚀b", 0, 3), "a🚀b");
        assert_eq!(slice_chars("abc", 3, 3), "");
    }
}
