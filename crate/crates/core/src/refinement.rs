//! Two-stage refinement: feedback digest to four suggestion lists, then
//! reviewed suggestions to a full replacement prompt.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    complete_with_repair, strip_code_fence, ChatMessage, CompletionRequest, Gateway, GatewayError, RepairOutcome,
    GENERATOR_TEMPERATURE,
};
use crate::runtime::Transcript;

pub const MAX_BULLET_CHARS: usize = 280;

/// Prompt-writing practices given to every prompt-generating stage.
pub const PROMPT_PRACTICES: &str = "\
Prompt-writing practices to follow:
1. Clear and specific: state the desired behaviors affirmatively, with measurable targets where possible, instead of vague prohibitions.
2. Positive exemplars: include at least one short example of the speech you want.
3. Reduce imprecision: name concrete constraints, inputs and outputs rather than broad descriptions.
4. Cover the robot's task, the task context, the robot's role, the audience, and the desired output style.";

#[derive(Debug, Error)]
pub enum RefinementError {
    #[error("suggestions reply could not be parsed: {0}")]
    MalformedSuggestions(String),
    #[error("refined prompt draft is empty")]
    MalformedDraft,
    #[error("invalid suggestion set: {0}")]
    InvalidSuggestions(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionCategory {
    Maintain,
    ReduceAvoid,
    PositiveCues,
    Adjustments,
}

impl SuggestionCategory {
    pub const ALL: [SuggestionCategory; 4] = [
        SuggestionCategory::Maintain,
        SuggestionCategory::ReduceAvoid,
        SuggestionCategory::PositiveCues,
        SuggestionCategory::Adjustments,
    ];

    pub fn title(self) -> &'static str {
        match self {
            SuggestionCategory::Maintain => "Essential Behaviors to Maintain",
            SuggestionCategory::ReduceAvoid => "Behaviors to Reduce or Avoid",
            SuggestionCategory::PositiveCues => "Positive Engagement Cues",
            SuggestionCategory::Adjustments => "Recommended Adjustments",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            SuggestionCategory::Maintain => "maintain",
            SuggestionCategory::ReduceAvoid => "reduce_avoid",
            SuggestionCategory::PositiveCues => "positive_cues",
            SuggestionCategory::Adjustments => "adjustments",
        }
    }
}

/// The four bullet lists. Deserialization rejects missing, extra or renamed
/// categories.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestionLists {
    pub maintain: Vec<String>,
    pub reduce_avoid: Vec<String>,
    pub positive_cues: Vec<String>,
    pub adjustments: Vec<String>,
}

impl SuggestionLists {
    pub fn get(&self, category: SuggestionCategory) -> &[String] {
        match category {
            SuggestionCategory::Maintain => &self.maintain,
            SuggestionCategory::ReduceAvoid => &self.reduce_avoid,
            SuggestionCategory::PositiveCues => &self.positive_cues,
            SuggestionCategory::Adjustments => &self.adjustments,
        }
    }

    fn get_mut(&mut self, category: SuggestionCategory) -> &mut Vec<String> {
        match category {
            SuggestionCategory::Maintain => &mut self.maintain,
            SuggestionCategory::ReduceAvoid => &mut self.reduce_avoid,
            SuggestionCategory::PositiveCues => &mut self.positive_cues,
            SuggestionCategory::Adjustments => &mut self.adjustments,
        }
    }

    pub fn bullet_count(&self) -> usize {
        SuggestionCategory::ALL.iter().map(|c| self.get(*c).len()).sum()
    }

    /// Titled bullet lists, as shown to the designer and the prompt writer.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in SuggestionCategory::ALL {
            out.push_str(c.title());
            out.push_str(":\n");
            let bullets = self.get(c);
            if bullets.is_empty() {
                out.push_str("- (none)\n");
            }
            for b in bullets {
                out.push_str(&format!("- {b}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncatedBullet {
    pub category: SuggestionCategory,
    pub index: usize,
}

/// Trims bullets, shortens overlong ones at a word boundary, and checks
/// that no bullet is empty and at least one exists.
pub fn normalize_lists(mut lists: SuggestionLists) -> Result<(SuggestionLists, Vec<TruncatedBullet>), String> {
    let mut truncated = Vec::new();
    for category in SuggestionCategory::ALL {
        for (index, bullet) in lists.get_mut(category).iter_mut().enumerate() {
            let trimmed = bullet.trim();
            if trimmed.is_empty() {
                return Err(format!("{} bullet {} is empty", category.key(), index + 1));
            }
            let (text, cut) = truncate_bullet(trimmed);
            if cut {
                truncated.push(TruncatedBullet { category, index });
            }
            *bullet = text;
        }
    }
    if lists.bullet_count() == 0 {
        return Err("at least one bullet is required across the four lists".into());
    }
    Ok((lists, truncated))
}

/// Cuts a bullet to at most [`MAX_BULLET_CHARS`] characters, ellipsis included.
pub fn truncate_bullet(text: &str) -> (String, bool) {
    if text.chars().count() <= MAX_BULLET_CHARS {
        return (text.to_string(), false);
    }
    let head: String = text.chars().take(MAX_BULLET_CHARS - 1).collect();
    let cut = match head.rfind(char::is_whitespace) {
        Some(i) if i > 0 => head[..i].trim_end(),
        _ => head.as_str(),
    };
    (format!("{cut}…"), true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionSet {
    pub schema_version: String,
    pub id: String,
    pub project_id: String,
    pub prompt_version_id: String,
    pub source_transcript_id: String,
    pub source_annotation_digest_hash: String,
    #[serde(flatten)]
    pub lists: SuggestionLists,
    #[serde(default)]
    pub truncated: Vec<TruncatedBullet>,
    #[serde(default)]
    pub designer_edited: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_from: Option<String>,
    pub created_at: DateTime<Utc>,
}

/// Uncommitted output of the second refinement stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedPromptDraft {
    pub body: String,
    pub based_on_version_id: String,
    pub suggestion_set_id: String,
}

const SUGGESTIONS_INSTRUCTIONS: &str = "\
You help a designer refine the behavior prompt of a conversational social robot. \
You receive the current prompt, the transcript of a test conversation, and the designer's annotations on that transcript. \
Turn the feedback into concise, actionable suggestions grouped into four lists:
- \"maintain\": Essential Behaviors to Maintain
- \"reduce_avoid\": Behaviors to Reduce or Avoid
- \"positive_cues\": Positive Engagement Cues
- \"adjustments\": Recommended Adjustments
Each bullet is one short sentence of at most 280 characters, grounded in the annotations and comments. \
When annotations contradict each other, point this out in \"adjustments\".
Reply with only a JSON object with exactly the keys \"maintain\", \"reduce_avoid\", \"positive_cues\" and \"adjustments\", \
each an array of strings. A list may be empty, but at least one bullet is required overall.";

const REFINE_INSTRUCTIONS: &str = "\
You rewrite the behavior prompt of a conversational social robot using suggestions the designer has reviewed. \
Write a complete replacement prompt that:
- keeps every behavior under \"Essential Behaviors to Maintain\";
- turns each item under \"Behaviors to Reduce or Avoid\" into an affirmative instruction describing what to do instead, wherever possible;
- applies the \"Positive Engagement Cues\" and \"Recommended Adjustments\";
- includes at least one short example of the desired speech when the suggestions concern content or style.";

pub fn render_transcript(transcript: &Transcript) -> String {
    transcript
        .utterances
        .iter()
        .map(|u| format!("[{}] {}: {}", u.index, u.speaker.as_str(), u.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn suggestions_request(prompt_body: &str, transcript: &Transcript, digest: &str) -> CompletionRequest {
    let user = format!(
        "Current behavior prompt:\n<<<\n{}\n>>>\n\nTest conversation transcript:\n{}\n\nDesigner feedback:\n{}",
        prompt_body.trim(),
        render_transcript(transcript),
        digest
    );
    CompletionRequest::new(
        "refine.suggestions",
        GENERATOR_TEMPERATURE,
        vec![ChatMessage::system(SUGGESTIONS_INSTRUCTIONS), ChatMessage::user(user)],
    )
    .with_max_tokens(1200)
}

pub fn parse_suggestions(reply: &str) -> Result<(SuggestionLists, Vec<TruncatedBullet>), String> {
    let lists: SuggestionLists = serde_json::from_str(strip_code_fence(reply)).map_err(|e| {
        format!(
            "reply must be a JSON object with exactly the keys \"maintain\", \"reduce_avoid\", \"positive_cues\" and \"adjustments\" ({e})"
        )
    })?;
    normalize_lists(lists)
}

pub fn generate_suggestions(
    gateway: &Gateway,
    prompt_body: &str,
    transcript: &Transcript,
    digest: &str,
) -> Result<(SuggestionLists, Vec<TruncatedBullet>), RefinementError> {
    let request = suggestions_request(prompt_body, transcript, digest);
    match complete_with_repair(gateway, request, 1, parse_suggestions)? {
        RepairOutcome::Valid { value, .. } => Ok(value),
        RepairOutcome::Exhausted { error, .. } => Err(RefinementError::MalformedSuggestions(error)),
    }
}

pub fn refine_request(prompt_body: &str, lists: &SuggestionLists) -> CompletionRequest {
    let system = format!(
        "{REFINE_INSTRUCTIONS}\n\n{PROMPT_PRACTICES}\n\nReply with only the new prompt text, without commentary or code fences."
    );
    let user = format!(
        "Current behavior prompt:\n<<<\n{}\n>>>\n\nReviewed suggestions:\n{}",
        prompt_body.trim(),
        lists.render()
    );
    CompletionRequest::new(
        "refine.prompt",
        GENERATOR_TEMPERATURE,
        vec![ChatMessage::system(system), ChatMessage::user(user)],
    )
    .with_max_tokens(2000)
}

pub(crate) fn parse_prompt_body(reply: &str) -> Result<String, String> {
    let body = strip_code_fence(reply);
    if body.is_empty() {
        Err("the prompt text is empty".into())
    } else {
        Ok(body.to_string())
    }
}

pub fn generate_refined_body(
    gateway: &Gateway,
    prompt_body: &str,
    lists: &SuggestionLists,
) -> Result<String, RefinementError> {
    match complete_with_repair(gateway, refine_request(prompt_body, lists), 1, parse_prompt_body)? {
        RepairOutcome::Valid { value, .. } => Ok(value),
        RepairOutcome::Exhausted { .. } => Err(RefinementError::MalformedDraft),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_parse_four_categories() {
        let (lists, truncated) = parse_suggestions(
            r#"{"maintain":["Keep greeting warmly"],"reduce_avoid":[],"positive_cues":["Kids laughed at the Moon jokes"],
               "adjustments":["Replace off-topic humor with relevant, light-hearted comments that relate to the subject matter"]}"#,
        )
        .unwrap();
        assert_eq!(lists.bullet_count(), 3);
        assert!(truncated.is_empty());
    }

    #[test]
    fn test_missing_extra_or_renamed_category_rejected() {
        assert!(parse_suggestions(r#"{"maintain":["a"],"reduce_avoid":[],"adjustments":[]}"#).is_err());
        assert!(parse_suggestions(
            r#"{"maintain":["a"],"reduce_avoid":[],"positive_cues":[],"adjustments":[],"other":[]}"#
        )
        .is_err());
        assert!(parse_suggestions(r#"{"keep":["a"],"reduce_avoid":[],"positive_cues":[],"adjustments":[]}"#).is_err());
    }

    #[test]
    fn test_empty_bullets_rejected() {
        assert!(parse_suggestions(r#"{"maintain":[],"reduce_avoid":[],"positive_cues":[],"adjustments":[]}"#).is_err());
        assert!(
            parse_suggestions(r#"{"maintain":["  "],"reduce_avoid":[],"positive_cues":[],"adjustments":[]}"#).is_err()
        );
    }

    #[test]
    fn test_liked_only_feedback_keeps_reduce_empty() {
        let (lists, _) = parse_suggestions(
            r#"{"maintain":["Keep the playful tone"],"reduce_avoid":[],"positive_cues":[],"adjustments":[]}"#,
        )
        .unwrap();
        assert!(lists.reduce_avoid.is_empty());
        assert_eq!(lists.maintain.len(), 1);
    }

    #[test]
    fn test_overlong_bullet_truncated_and_flagged() {
        let long = "word ".repeat(100);
        let json = serde_json::json!({"maintain": [long], "reduce_avoid": [], "positive_cues": [], "adjustments": []});
        let (lists, truncated) = parse_suggestions(&json.to_string()).unwrap();
        let b = &lists.maintain[0];
        assert!(b.chars().count() <= MAX_BULLET_CHARS);
        assert!(b.ends_with("word…"));
        assert_eq!(truncated, vec![TruncatedBullet { category: SuggestionCategory::Maintain, index: 0 }]);
        let (exact, cut) = truncate_bullet(&"x".repeat(MAX_BULLET_CHARS));
        assert!(!cut);
        assert_eq!(exact.len(), MAX_BULLET_CHARS);
        let (nospace, cut) = truncate_bullet(&"y".repeat(400));
        assert!(cut);
        assert_eq!(nospace.chars().count(), MAX_BULLET_CHARS);
    }

    #[test]
    fn test_render_has_four_titles() {
        let rendered = SuggestionLists { maintain: vec!["a".into()], ..Default::default() }.render();
        for c in SuggestionCategory::ALL {
            assert!(rendered.contains(&format!("{}:\n", c.title())));
        }
        assert_eq!(rendered.matches("(none)").count(), 3);
    }

    #[test]
    fn test_suggestion_set_json_has_category_arrays() {
        let set = SuggestionSet {
            schema_version: "1".into(),
            id: "sug-1".into(),
            project_id: "proj-1".into(),
            prompt_version_id: "ver-1".into(),
            source_transcript_id: "tr-1".into(),
            source_annotation_digest_hash: "00".into(),
            lists: SuggestionLists { adjustments: vec!["x".into()], ..Default::default() },
            truncated: vec![],
            designer_edited: false,
            edited_from: None,
            created_at: Utc::now(),
        };
        let v = serde_json::to_value(&set).unwrap();
        for c in SuggestionCategory::ALL {
            assert!(v[c.key()].is_array());
        }
        let back: SuggestionSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn test_parse_prompt_body() {
        assert_eq!(parse_prompt_body("```\nYou are Luna.\n```").unwrap(), "You are Luna.");
        assert!(parse_prompt_body("   ").is_err());
    }
}
