//! Lexicons and clarity cue sets, shipped as plain-text assets.
//!
//! Every file is one entry per line; blank lines and lines starting with `#`
//! are ignored. Clarity cue lines are case-insensitive phrases matched on
//! word boundaries, or regular expressions when prefixed with `re:`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use regex::Regex;

use super::{AnalyzerError, ClaritySlot};

const DESCRIPTIVE_LEXICON: &str = include_str!("../../assets/analyzer/descriptive_lexicon.txt");
const LY_STOPLIST: &str = include_str!("../../assets/analyzer/ly_stoplist.txt");
const DIRECTIVE_VERBS: &str = include_str!("../../assets/analyzer/directive_verbs.txt");
const CLARITY_TASK: &str = include_str!("../../assets/analyzer/clarity_task.txt");
const CLARITY_CONTEXT: &str = include_str!("../../assets/analyzer/clarity_context.txt");
const CLARITY_ROLE: &str = include_str!("../../assets/analyzer/clarity_role.txt");
const CLARITY_AUDIENCE: &str = include_str!("../../assets/analyzer/clarity_audience.txt");
const CLARITY_STYLE: &str = include_str!("../../assets/analyzer/clarity_style.txt");

/// File name of each asset inside a rules directory.
pub const ASSET_FILES: [&str; 8] = [
    "descriptive_lexicon.txt",
    "ly_stoplist.txt",
    "directive_verbs.txt",
    "clarity_task.txt",
    "clarity_context.txt",
    "clarity_role.txt",
    "clarity_audience.txt",
    "clarity_style.txt",
];

/// Markers that make a unit a constraint wherever they occur in it.
pub const DIRECTIVE_MARKERS: [&str; 12] = [
    "must", "should", "always", "never", "do not", "don't", "avoid", "ensure", "keep", "limit", "only use", "use only",
];

#[derive(Debug, Clone)]
pub struct Cue {
    pub source: String,
    pub regex: Regex,
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    pub descriptive: HashSet<String>,
    pub ly_stoplist: HashSet<String>,
    pub directive_verbs: HashSet<String>,
    cues: [Vec<Cue>; 5],
}

impl RuleSet {
    pub fn builtin() -> Self {
        Self::from_sources([
            DESCRIPTIVE_LEXICON,
            LY_STOPLIST,
            DIRECTIVE_VERBS,
            CLARITY_TASK,
            CLARITY_CONTEXT,
            CLARITY_ROLE,
            CLARITY_AUDIENCE,
            CLARITY_STYLE,
        ])
        .expect("bundled analyzer rules compile")
    }

    /// Loads an edited rule set from a directory holding the [`ASSET_FILES`].
    pub fn from_dir(dir: &Path) -> Result<Self, AnalyzerError> {
        let mut sources = Vec::with_capacity(ASSET_FILES.len());
        for name in ASSET_FILES {
            let path = dir.join(name);
            sources
                .push(fs::read_to_string(&path).map_err(|e| AnalyzerError::Rules(format!("{}: {e}", path.display())))?);
        }
        let refs: [&str; 8] = std::array::from_fn(|i| sources[i].as_str());
        Self::from_sources(refs)
    }

    fn from_sources(src: [&str; 8]) -> Result<Self, AnalyzerError> {
        let set = |s: &str| entries(s).map(str::to_lowercase).collect::<HashSet<_>>();
        let cues = |s: &str| entries(s).map(compile_cue).collect::<Result<Vec<_>, _>>();
        Ok(Self {
            descriptive: set(src[0]),
            ly_stoplist: set(src[1]),
            directive_verbs: set(src[2]),
            cues: [cues(src[3])?, cues(src[4])?, cues(src[5])?, cues(src[6])?, cues(src[7])?],
        })
    }

    pub fn cues(&self, slot: ClaritySlot) -> &[Cue] {
        &self.cues[slot as usize]
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::builtin()
    }
}

fn entries(src: &str) -> impl Iterator<Item = &str> {
    src.lines().map(str::trim_end).filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub(crate) fn compile_cue(line: &str) -> Result<Cue, AnalyzerError> {
    let pattern = match line.strip_prefix("re:") {
        Some(re) => format!("(?i){re}"),
        None => {
            let body = regex::escape(line).replace('\'', "['’]");
            let pre = if line.starts_with(is_word_char) { r"\b" } else { "" };
            let post = if line.ends_with(is_word_char) { r"\b" } else { "" };
            format!("(?i){pre}{body}{post}")
        }
    };
    let regex = Regex::new(&pattern).map_err(|e| AnalyzerError::Rules(format!("cue {line:?}: {e}")))?;
    Ok(Cue { source: line.to_string(), regex })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_builtin_rules_load() {
        let rules = RuleSet::builtin();
        assert!(rules.descriptive.contains("age-appropriate"));
        assert!(rules.ly_stoplist.contains("family"));
        assert!(rules.directive_verbs.contains("greet"));
        for slot in ClaritySlot::ALL {
            assert!(!rules.cues(slot).is_empty(), "{slot:?}");
        }
    }

    #[test]
    fn test_phrase_cue_word_boundaries() {
        let cue = compile_cue("kid").unwrap();
        assert!(cue.regex.is_match("Talk to the Kid now"));
        assert!(!cue.regex.is_match("kidney beans"));
        let cue = compile_cue("you're").unwrap();
        assert!(cue.regex.is_match("You’re a robot"));
    }

    #[test]
    fn test_from_dir_matches_builtin() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/analyzer");
        let loaded = RuleSet::from_dir(&dir).unwrap();
        let builtin = RuleSet::builtin();
        assert_eq!(loaded.descriptive, builtin.descriptive);
        assert_eq!(loaded.directive_verbs, builtin.directive_verbs);
        assert!(RuleSet::from_dir(Path::new("/nonexistent")).is_err());
    }
}
