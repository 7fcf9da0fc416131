//! Prompt-quality analysis: a five-slot clarity rubric and three
//! specificity counts.
//!
//! Heuristic mode is a pure function of the text driven by the rule assets in
//! `assets/analyzer/`. It is this crate's own operationalization of the
//! measures (reports carry [`RULESET_ID`]), not a reproduction of human
//! coding. Judge mode asks the LLM gateway for the five clarity booleans.
//!
//! All evidence offsets are counted in Unicode scalar values.

mod rules;
mod units;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::gateway::{
    complete_with_repair, strip_code_fence, ChatMessage, CompletionRequest, Gateway, GatewayError, RepairOutcome,
    GENERATOR_TEMPERATURE,
};

pub use rules::{RuleSet, ASSET_FILES, DIRECTIVE_MARKERS};
pub use units::units;

pub const RULESET_ID: &str = "ace-heuristic-v1";

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("judge reply could not be parsed: {0}")]
    JudgeParse(String),
    #[error("analyzer rules: {0}")]
    Rules(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaritySlot {
    Task = 0,
    Context = 1,
    Role = 2,
    Audience = 3,
    OutputStyle = 4,
}

impl ClaritySlot {
    pub const ALL: [ClaritySlot; 5] =
        [ClaritySlot::Task, ClaritySlot::Context, ClaritySlot::Role, ClaritySlot::Audience, ClaritySlot::OutputStyle];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisMode {
    #[default]
    Heuristic,
    Judge,
}

impl std::str::FromStr for AnalysisMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(Self::Heuristic),
            "judge" => Ok(Self::Judge),
            other => Err(format!("unknown analysis mode {other:?}")),
        }
    }
}

/// A matched piece of the input. `start..end` are scalar-value offsets and
/// re-slice the input to `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaritySlots {
    pub task: bool,
    pub context: bool,
    pub role: bool,
    pub audience: bool,
    pub output_style: bool,
}

impl ClaritySlots {
    pub fn get(&self, slot: ClaritySlot) -> bool {
        match slot {
            ClaritySlot::Task => self.task,
            ClaritySlot::Context => self.context,
            ClaritySlot::Role => self.role,
            ClaritySlot::Audience => self.audience,
            ClaritySlot::OutputStyle => self.output_style,
        }
    }

    fn set(&mut self, slot: ClaritySlot, value: bool) {
        match slot {
            ClaritySlot::Task => self.task = value,
            ClaritySlot::Context => self.context = value,
            ClaritySlot::Role => self.role = value,
            ClaritySlot::Audience => self.audience = value,
            ClaritySlot::OutputStyle => self.output_style = value,
        }
    }

    pub fn count(&self) -> u8 {
        ClaritySlot::ALL.iter().filter(|s| self.get(**s)).count() as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarityReport {
    pub slots: ClaritySlots,
    pub score: u8,
    pub evidence: BTreeMap<ClaritySlot, Vec<Evidence>>,
    pub mode: AnalysisMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountReport {
    pub count: usize,
    pub evidence: Vec<Evidence>,
}

impl CountReport {
    fn from_evidence(evidence: Vec<Evidence>) -> Self {
        Self { count: evidence.len(), evidence }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecificityReport {
    pub descriptive_words: CountReport,
    pub constraints: CountReport,
    pub examples: CountReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub ruleset: String,
    pub clarity: ClarityReport,
    pub specificity: SpecificityReport,
}

impl AnalysisReport {
    /// Short human-readable rendering used by the CLI.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("ruleset: {} (mode: {:?})\n", self.ruleset, self.clarity.mode).to_lowercase());
        out.push_str(&format!("clarity: {}/5\n", self.clarity.score));
        for slot in ClaritySlot::ALL {
            let mark = if self.clarity.slots.get(slot) { "x" } else { " " };
            let name = serde_json::to_value(slot).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let ev: Vec<&str> = self
                .clarity
                .evidence
                .get(&slot)
                .map(|v| v.iter().map(|e| e.text.as_str()).collect())
                .unwrap_or_default();
            out.push_str(&format!("  [{mark}] {name}"));
            if !ev.is_empty() {
                out.push_str(&format!(": {}", ev.join(", ")));
            }
            out.push('\n');
        }
        out.push_str(&format!("descriptive words: {}\n", self.specificity.descriptive_words.count));
        out.push_str(&format!("constraints: {}\n", self.specificity.constraints.count));
        out.push_str(&format!("examples: {}\n", self.specificity.examples.count));
        out
    }
}

/// Converts byte offsets of one text into scalar-value offsets.
struct CharOffsets<'a> {
    text: &'a str,
    starts: Vec<usize>,
}

impl<'a> CharOffsets<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, starts: text.char_indices().map(|(b, _)| b).collect() }
    }

    fn to_char(&self, byte: usize) -> usize {
        self.starts.partition_point(|&b| b < byte)
    }

    fn evidence(&self, start: usize, end: usize) -> Evidence {
        Evidence { text: self.text[start..end].to_string(), start: self.to_char(start), end: self.to_char(end) }
    }
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let alts: Vec<String> = DIRECTIVE_MARKERS.iter().map(|m| regex::escape(m)).collect();
        Regex::new(&format!(r"\b(?:{})\b", alts.join("|"))).unwrap()
    })
}

fn example_regexes() -> &'static [Regex; 3] {
    static RE: OnceLock<[Regex; 3]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            Regex::new(r"(?i)\b(?:for example|for instance|such as)\b|\be\.g\.|\bexample:").unwrap(),
            Regex::new(
                r"(?im)^[ \t]*(?:[-*•][ \t]+)?(?:sample dialogue|example (?:dialogue|conversation|exchange|\d+))[ \t]*:",
            )
            .unwrap(),
            Regex::new(r"(?im)^[ \t]*```[^\n]*example").unwrap(),
        ]
    })
}

#[derive(Debug, Clone, Default)]
pub struct Analyzer {
    rules: Arc<RuleSet>,
}

impl Analyzer {
    pub fn new(rules: RuleSet) -> Self {
        Self { rules: Arc::new(rules) }
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn clarity(&self, text: &str) -> ClarityReport {
        let offsets = CharOffsets::new(text);
        let mut slots = ClaritySlots::default();
        let mut evidence = BTreeMap::new();
        for slot in ClaritySlot::ALL {
            let mut spans: Vec<(usize, usize)> = self
                .rules
                .cues(slot)
                .iter()
                .flat_map(|cue| cue.regex.find_iter(text).map(|m| (m.start(), m.end())))
                .filter(|(s, e)| s < e)
                .collect();
            spans.sort_unstable();
            spans.dedup();
            if !spans.is_empty() {
                slots.set(slot, true);
                evidence.insert(slot, spans.into_iter().map(|(s, e)| offsets.evidence(s, e)).collect());
            }
        }
        ClarityReport { score: slots.count(), slots, evidence, mode: AnalysisMode::Heuristic }
    }

    /// Adjectives and adverbs: lexicon entries plus `-ly` words outside the
    /// stoplist. Hyphenated compounds are one token.
    pub fn descriptive_words(&self, text: &str) -> CountReport {
        let offsets = CharOffsets::new(text);
        let mut tokens: Vec<(usize, usize)> = Vec::new();
        for (start, word) in text.unicode_word_indices() {
            let end = start + word.len();
            match tokens.last_mut() {
                Some(last) if last.1 + 1 == start && text[last.1..start] == *"-" => last.1 = end,
                _ => tokens.push((start, end)),
            }
        }
        let evidence = tokens
            .into_iter()
            .filter(|&(s, e)| self.is_descriptive(&text[s..e]))
            .map(|(s, e)| offsets.evidence(s, e))
            .collect();
        CountReport::from_evidence(evidence)
    }

    fn is_descriptive(&self, token: &str) -> bool {
        let word = token.to_lowercase().replace('’', "'");
        if self.rules.descriptive.contains(&word) {
            return true;
        }
        word.ends_with("ly")
            && word.chars().count() >= 3
            && word.chars().filter(|c| *c != '-').all(char::is_alphabetic)
            && !self.rules.ly_stoplist.contains(&word)
    }

    /// Units containing a directive marker or opening with a directive verb.
    pub fn constraints(&self, text: &str) -> CountReport {
        let offsets = CharOffsets::new(text);
        let evidence = units(text)
            .into_iter()
            .filter(|r| self.is_constraint(&text[r.clone()]))
            .map(|r| offsets.evidence(r.start, r.end))
            .collect();
        CountReport::from_evidence(evidence)
    }

    fn is_constraint(&self, unit: &str) -> bool {
        let low = unit.to_lowercase().replace('’', "'");
        if marker_regex().is_match(&low) {
            return true;
        }
        let mut words = low.split(|c: char| !(c.is_ascii_lowercase() || c == '\'')).filter(|w| !w.is_empty());
        let first = match words.next() {
            Some("please") => words.next(),
            other => other,
        };
        first.is_some_and(|w| self.rules.directive_verbs.contains(w))
    }

    /// Exemplar markers, labeled sample-dialogue lines, and fenced blocks
    /// whose opening fence mentions "example".
    pub fn examples(&self, text: &str) -> CountReport {
        let offsets = CharOffsets::new(text);
        let mut spans: Vec<(usize, usize)> =
            example_regexes().iter().flat_map(|re| re.find_iter(text).map(|m| (m.start(), m.end()))).collect();
        spans.sort_unstable();
        CountReport::from_evidence(spans.into_iter().map(|(s, e)| offsets.evidence(s, e)).collect())
    }

    pub fn specificity(&self, text: &str) -> SpecificityReport {
        SpecificityReport {
            descriptive_words: self.descriptive_words(text),
            constraints: self.constraints(text),
            examples: self.examples(text),
        }
    }

    /// Heuristic-mode report.
    pub fn analyze(&self, text: &str) -> AnalysisReport {
        AnalysisReport { ruleset: RULESET_ID.into(), clarity: self.clarity(text), specificity: self.specificity(text) }
    }

    /// Full report in either mode. Judge mode needs a gateway; specificity
    /// counts stay heuristic in both modes.
    pub fn analyze_with(
        &self,
        text: &str,
        mode: AnalysisMode,
        gateway: Option<&Gateway>,
    ) -> Result<AnalysisReport, AnalyzerError> {
        let clarity = match mode {
            AnalysisMode::Heuristic => self.clarity(text),
            AnalysisMode::Judge => {
                let gateway =
                    gateway.ok_or_else(|| AnalyzerError::JudgeParse("judge mode requires an LLM gateway".into()))?;
                judge_clarity(gateway, text)?
            }
        };
        Ok(AnalysisReport { ruleset: RULESET_ID.into(), clarity, specificity: self.specificity(text) })
    }
}

const JUDGE_INSTRUCTIONS: &str = "\
You rate robot behavior prompts for clarity. Award one point for each of the \
following that the prompt describes: the robot's task (task), relevant task \
context (context), the robot's role (role), the audience (audience), and the \
desired output style (output_style).
Reply with only a JSON object with exactly these boolean fields: \
{\"task\": bool, \"context\": bool, \"role\": bool, \"audience\": bool, \"output_style\": bool}";

pub fn judge_request(text: &str) -> CompletionRequest {
    let body = if text.trim().is_empty() { "(empty prompt)" } else { text };
    CompletionRequest::new(
        "analyze.judge",
        GENERATOR_TEMPERATURE,
        vec![ChatMessage::system(JUDGE_INSTRUCTIONS), ChatMessage::user(format!("Prompt to rate:\n\n{body}"))],
    )
    .with_max_tokens(200)
}

pub fn parse_judge_reply(reply: &str) -> Result<ClaritySlots, String> {
    serde_json::from_str::<ClaritySlots>(strip_code_fence(reply)).map_err(|e| e.to_string())
}

pub fn judge_clarity(gateway: &Gateway, text: &str) -> Result<ClarityReport, AnalyzerError> {
    match complete_with_repair(gateway, judge_request(text), 1, parse_judge_reply)? {
        RepairOutcome::Valid { value, .. } => Ok(ClarityReport {
            score: value.count(),
            slots: value,
            evidence: BTreeMap::new(),
            mode: AnalysisMode::Judge,
        }),
        RepairOutcome::Exhausted { error, .. } => Err(AnalyzerError::JudgeParse(error)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(report: &CountReport) -> Vec<&str> {
        report.evidence.iter().map(|e| e.text.as_str()).collect()
    }

    #[test]
    fn test_empty_prompt_all_zero() {
        let report = Analyzer::default().analyze("");
        assert_eq!(report.clarity.score, 0);
        assert_eq!(report.clarity.slots, ClaritySlots::default());
        assert!(report.clarity.evidence.is_empty());
        assert_eq!(report.specificity.descriptive_words.count, 0);
        assert_eq!(report.specificity.constraints.count, 0);
        assert_eq!(report.specificity.examples.count, 0);
    }

    #[test]
    fn test_descriptive_words_example() {
        let a = Analyzer::default();
        let r = a.descriptive_words("fun, engaging, and age-appropriate facts delivered cheerfully");
        assert_eq!(words(&r), vec!["fun", "engaging", "age-appropriate", "cheerfully"]);
        assert_eq!(r.count, 4);
    }

    #[test]
    fn test_ly_stoplist() {
        let a = Analyzer::default();
        assert_eq!(a.descriptive_words("Reply to the family in July").count, 0);
        assert_eq!(words(&a.descriptive_words("Speak slowly and kid-friendly")), vec!["slowly", "kid-friendly"]);
    }

    #[test]
    fn test_constraint_example() {
        let a = Analyzer::default();
        let r = a.constraints("Always greet the child. Avoid jargon. Space is big.");
        assert_eq!(words(&r), vec!["Always greet the child.", "Avoid jargon."]);
    }

    #[test]
    fn test_constraint_please_and_curly_apostrophe() {
        let a = Analyzer::default();
        assert_eq!(a.constraints("Please greet everyone.").count, 1);
        assert_eq!(a.constraints("You don’t interrupt.").count, 1);
        assert_eq!(a.constraints("Shouldn't matter.").count, 0);
    }

    #[test]
    fn test_example_markers() {
        let a = Analyzer::default();
        assert_eq!(a.examples("e.g., Saturn's rings; for instance, moon dust").count, 2);
        assert_eq!(a.examples("ensuring every response adds education value. For example, ...").count, 1);
        assert_eq!(a.examples("For example: a comet.").count, 1);
        assert_eq!(a.examples("Example: a comet.").count, 1);
        assert_eq!(a.examples("```example\nRobot: hi\n```\nExample 2: hey").count, 2);
    }

    #[test]
    fn test_evidence_offsets_are_scalar_values() {
        let a = Analyzer::default();
        let text = "🚀 café kids, e.g. «Mars»";
        let report = a.analyze(text);
        let chars: Vec<char> = text.chars().collect();
        let all = report.clarity.evidence.values().flatten().chain(report.specificity.examples.evidence.iter());
        for ev in all {
            let slice: String = chars[ev.start..ev.end].iter().collect();
            assert_eq!(slice, ev.text);
        }
        assert!(report.clarity.slots.audience);
    }

    #[test]
    fn test_clarity_full_prompt() {
        let a = Analyzer::default();
        let r = a.clarity(
            "You are Luna, a friendly robot at a science museum. Your task is to share fun facts with children aged 4 to 6 in a cheerful tone.",
        );
        assert_eq!(r.score, 5);
        for slot in ClaritySlot::ALL {
            assert!(!r.evidence[&slot].is_empty());
        }
    }

    #[test]
    fn test_judge_reply_parsing() {
        let ok = parse_judge_reply(
            "```json\n{\"task\":true,\"context\":false,\"role\":true,\"audience\":true,\"output_style\":false}\n```",
        )
        .unwrap();
        assert_eq!(ok.count(), 3);
        assert!(parse_judge_reply("{\"task\":true}").is_err());
        assert!(parse_judge_reply(
            "{\"task\":true,\"context\":false,\"role\":true,\"audience\":true,\"output_style\":false,\"extra\":true}"
        )
        .is_err());
    }
}
