//! Heuristic analyzer against the hand-scored golden prompts.

use std::fs;
use std::path::PathBuf;

use ace_core::analyzer::{Analyzer, ClaritySlots};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct Expected {
    slots: ClaritySlots,
    clarity: u8,
    descriptive_words: Vec<String>,
    constraints: Vec<String>,
    examples: usize,
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/analyzer")
}

#[test]
fn golden_prompts_match_exactly() {
    let analyzer = Analyzer::default();
    let mut names: Vec<_> = fs::read_dir(golden_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".txt"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 12);
    for name in names {
        let text = fs::read_to_string(golden_dir().join(&name)).unwrap();
        let expected: Expected = serde_json::from_str(
            &fs::read_to_string(golden_dir().join(name.replace(".txt", ".expected.json"))).unwrap(),
        )
        .unwrap();
        let report = analyzer.analyze(&text);
        assert_eq!(report.clarity.slots, expected.slots, "{name}: slots");
        assert_eq!(report.clarity.score, expected.clarity, "{name}: clarity");
        let words: Vec<String> = report
            .specificity
            .descriptive_words
            .evidence
            .iter()
            .map(|e| e.text.to_lowercase().replace('’', "'"))
            .collect();
        assert_eq!(words, expected.descriptive_words, "{name}: descriptive words");
        let constraints: Vec<&str> = report.specificity.constraints.evidence.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(constraints, expected.constraints, "{name}: constraints");
        assert_eq!(report.specificity.examples.count, expected.examples, "{name}: examples");
    }
}
