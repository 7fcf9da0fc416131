//! Random transcripts with annotations, and the checks run against them.

use ace_core::annotation::{build_annotation, detect_conflicts, render_digest, Annotation, Span, Tag};
use ace_core::clock::{Clock, FixedClock};
use ace_core::runtime::{IdleBehavior, RobotSegment, Speaker, Transcript, Utterance};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// One generated case: transcript, annotations and a permutation seed.
#[derive(Debug, Clone)]
pub struct AnnotationCase {
    pub transcript: Transcript,
    pub annotations: Vec<Annotation>,
    pub swaps: Vec<prop::sample::Index>,
}

fn transcript(texts: &[String]) -> Transcript {
    let ts = FixedClock::parse("2025-01-01T00:00:00Z").unwrap().now();
    Transcript {
        schema_version: "1".into(),
        id: "tr-0001".into(),
        project_id: "proj-0001".into(),
        prompt_version_id: "ver-0001".into(),
        utterances: texts
            .iter()
            .enumerate()
            .map(|(i, t)| Utterance {
                index: i,
                speaker: if i % 2 == 0 { Speaker::Robot } else { Speaker::User },
                text: t.clone(),
                segments: if i % 2 == 0 { vec![RobotSegment::fallback(t)] } else { vec![] },
                timestamp: ts,
            })
            .collect(),
        idle_behaviors: IdleBehavior::ALL.to_vec(),
        started_at: ts,
        ended_at: Some(ts),
    }
}

pub fn annotation_case() -> impl Strategy<Value = AnnotationCase> {
    prop::collection::vec("[a-zé🚀 ]{1,16}", 1..5)
        .prop_flat_map(|texts| {
            let lens: Vec<usize> = texts.iter().map(|t| t.chars().count()).collect();
            let n = texts.len();
            let raw = (0..n).prop_flat_map(move |u| {
                let len = lens[u];
                (Just(u), 0..len, prop::sample::subsequence(Tag::ALL.to_vec(), 1..4), any::<bool>()).prop_flat_map(
                    move |(u, start, tags, c)| (Just(u), Just(start), (start + 1)..=len, Just(tags), Just(c)),
                )
            });
            (Just(texts), prop::collection::vec(raw, 1..10), prop::collection::vec(any::<prop::sample::Index>(), 10))
        })
        .prop_map(|(texts, raw, swaps)| {
            let transcript = transcript(&texts);
            let ts = FixedClock::parse("2025-01-01T00:00:00Z").unwrap().now();
            let annotations = raw
                .into_iter()
                .enumerate()
                .map(|(i, (u, s, e, tags, c))| {
                    let comment = c.then(|| format!("note {}", i % 3));
                    build_annotation(&transcript, format!("ann-{i:04}"), Span::new(u, s, e), &tags, comment, ts)
                        .unwrap()
                })
                .collect();
            AnnotationCase { transcript, annotations, swaps }
        })
}

/// All-pairs reference for conflict detection.
pub fn conflict_oracle(annotations: &[Annotation]) -> Vec<(String, String, usize)> {
    let mut out = Vec::new();
    for a in annotations {
        for b in annotations {
            if a.id >= b.id || a.span.utterance_index != b.span.utterance_index {
                continue;
            }
            let overlap = a.span.start < b.span.end && b.span.start < a.span.end;
            let pairs = Tag::ANTONYMS
                .iter()
                .filter(|(p, n)| {
                    (a.tags.contains(p) && b.tags.contains(n)) || (a.tags.contains(n) && b.tags.contains(p))
                })
                .count();
            if overlap && pairs > 0 {
                out.push((a.id.clone(), b.id.clone(), pairs));
            }
        }
    }
    out.sort();
    out
}

pub fn check_digest_permutation(case: &AnnotationCase) -> Result<(), TestCaseError> {
    let mut shuffled = case.annotations.clone();
    for (i, ix) in case.swaps.iter().enumerate().take(shuffled.len()) {
        let j = ix.index(shuffled.len());
        shuffled.swap(i, j);
    }
    let expected =
        render_digest(&case.transcript, &case.annotations).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let got = render_digest(&case.transcript, &shuffled).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(got, expected);
    Ok(())
}

pub fn check_conflicts(case: &AnnotationCase) -> Result<(), TestCaseError> {
    let found: Vec<(String, String, usize)> =
        detect_conflicts(&case.annotations).into_iter().map(|c| (c.first, c.second, c.pairs.len())).collect();
    prop_assert_eq!(found, conflict_oracle(&case.annotations));
    Ok(())
}

pub fn check_excerpts(case: &AnnotationCase) -> Result<(), TestCaseError> {
    for a in &case.annotations {
        let text = &case.transcript.utterances[a.span.utterance_index].text;
        let expected: String = text.chars().skip(a.span.start).take(a.span.end - a.span.start).collect();
        prop_assert_eq!(a.span.excerpt(&case.transcript).unwrap(), expected.as_str());
    }
    Ok(())
}
