//! Simulated social-robot test sessions.
//!
//! The designer's behavior prompt is followed by a fixed robot-compatibility
//! block that asks for a JSON array of speech segments, each with a facial
//! expression and a head position from closed banks. Replies are parsed
//! strictly; invalid replies are re-asked up to twice, and after that the
//! reply text is kept as one segment with neutral defaults.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    complete_with_repair, strip_code_fence, ChatMessage, CompletionRequest, Gateway, GatewayError, RepairOutcome,
    CONVERSATION_TEMPERATURE,
};

/// Appended verbatim to every behavior prompt.
pub const ROBOT_COMPAT_PROMPT: &str = include_str!("../../assets/robot_compat_prompt.txt");

/// Re-asks allowed after the first reply of a turn.
pub const MAX_REPAIRS: u32 = 2;

pub const FALLBACK_FACIAL: FacialExpression = FacialExpression::Interested;
pub const FALLBACK_HEAD: HeadPosition = HeadPosition::LookAtScreen;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("behavior prompt is empty")]
    EmptyPrompt,
    #[error("user text is empty")]
    EmptyUserText,
    #[error("session {0} has ended")]
    SessionEnded(String),
    #[error("project {0} already has an active test session")]
    SessionAlreadyActive(String),
    #[error("unknown test session {0}")]
    UnknownSession(String),
    #[error("session {0} already has a turn in flight")]
    TurnInFlight(String),
}

macro_rules! bank {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }

            pub fn parse(token: &str) -> Option<Self> {
                match token {
                    $($token => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

bank!(FacialExpression {
    Happy => "happy",
    Satisfied => "satisfied",
    Excited => "excited",
    Interested => "interested",
    Surprised => "surprised",
    Thinking => "thinking",
});

bank!(HeadPosition {
    LeftGaze => "left_gaze",
    RightGaze => "right_gaze",
    LookAtScreen => "look_at_screen",
    LeftNod => "left_nod",
    RightNod => "right_nod",
    Thinking => "thinking",
});

bank!(
    /// Ambient behaviors attached to a whole session.
    IdleBehavior {
        Breathing => "breathing",
        Blinking => "blinking",
    }
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotSegment {
    pub speech: String,
    pub facial_expression: FacialExpression,
    pub head_position: HeadPosition,
}

impl RobotSegment {
    /// One segment carrying `text` with the neutral fallback expression.
    pub fn fallback(text: &str) -> Self {
        let speech = normalize_speech(text);
        Self {
            speech: if speech.is_empty() { "...".into() } else { speech },
            facial_expression: FALLBACK_FACIAL,
            head_position: FALLBACK_HEAD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Robot,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "user",
            Speaker::Robot => "robot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default)]
    pub segments: Vec<RobotSegment>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub schema_version: String,
    pub id: String,
    pub project_id: String,
    pub prompt_version_id: String,
    pub utterances: Vec<Utterance>,
    pub idle_behaviors: Vec<IdleBehavior>,
    pub started_at: DateTime<Utc>,
    pub ended_at: Option<DateTime<Utc>>,
}

impl Transcript {
    pub fn push(&mut self, speaker: Speaker, segments: Vec<RobotSegment>, text: String, at: DateTime<Utc>) {
        let index = self.utterances.len();
        self.utterances.push(Utterance { index, speaker, text, segments, timestamp: at });
    }

    /// Chat history as seen by the robot model.
    pub fn history_messages(&self) -> Vec<ChatMessage> {
        self.utterances
            .iter()
            .map(|u| match u.speaker {
                Speaker::User => ChatMessage::user(u.text.clone()),
                Speaker::Robot => {
                    ChatMessage::assistant(serde_json::to_string(&u.segments).expect("segments serialize"))
                }
            })
            .collect()
    }

    /// Checks the structural invariants of a transcript.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, u) in self.utterances.iter().enumerate() {
            if u.index != i {
                return Err(format!("utterance at position {i} has index {}", u.index));
            }
            match u.speaker {
                Speaker::User if !u.segments.is_empty() => {
                    return Err(format!("user utterance {i} has segments"));
                }
                Speaker::Robot => {
                    if u.segments.is_empty() {
                        return Err(format!("robot utterance {i} has no segments"));
                    }
                    if let Some(s) = u.segments.iter().find(|s| s.speech.is_empty() || s.speech.contains('\n')) {
                        return Err(format!("robot utterance {i} has malformed speech {:?}", s.speech));
                    }
                    if joined_speech(&u.segments) != u.text {
                        return Err(format!("robot utterance {i} text differs from its segments"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Ended,
}

/// A test run of one prompt version; the transcript is stored separately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSession {
    pub schema_version: String,
    pub id: String,
    pub project_id: String,
    pub prompt_version_id: String,
    pub transcript_id: String,
    pub status: SessionStatus,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended_at: Option<DateTime<Utc>>,
}

pub fn joined_speech(segments: &[RobotSegment]) -> String {
    segments.iter().map(|s| s.speech.as_str()).collect::<Vec<_>>().join(" ")
}

fn normalize_speech(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Behavior prompt followed by the robot-compatibility block.
pub fn compose_effective_prompt(behavior_prompt: &str) -> Result<String, RuntimeError> {
    if behavior_prompt.trim().is_empty() {
        return Err(RuntimeError::EmptyPrompt);
    }
    Ok(format!("{}\n\n{}", behavior_prompt.trim_end(), ROBOT_COMPAT_PROMPT))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    speech: String,
    facial_expression: String,
    head_position: String,
}

fn bank_list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Strictly parses a robot reply; the error names the first violation.
pub fn parse_robot_reply(reply: &str) -> Result<Vec<RobotSegment>, String> {
    let raw: Vec<RawSegment> = serde_json::from_str(strip_code_fence(reply)).map_err(|e| {
        format!(
            "reply must be a JSON array of objects with exactly the keys \"speech\", \"facial_expression\" and \"head_position\" ({e})"
        )
    })?;
    if raw.is_empty() {
        return Err("reply must contain at least one segment".into());
    }
    raw.into_iter()
        .enumerate()
        .map(|(i, s)| {
            let n = i + 1;
            let speech = normalize_speech(&s.speech);
            if speech.is_empty() {
                return Err(format!("segment {n}: speech is empty"));
            }
            let facial_expression = FacialExpression::parse(s.facial_expression.trim()).ok_or_else(|| {
                format!(
                    "segment {n}: facial_expression {:?} is not one of: {}",
                    s.facial_expression,
                    bank_list(FacialExpression::ALL)
                )
            })?;
            let head_position = HeadPosition::parse(s.head_position.trim()).ok_or_else(|| {
                format!(
                    "segment {n}: head_position {:?} is not one of: {}",
                    s.head_position,
                    bank_list(HeadPosition::ALL)
                )
            })?;
            Ok(RobotSegment { speech, facial_expression, head_position })
        })
        .collect()
}

/// Fallback when every attempt failed: keep what the robot said as one
/// neutral segment. Speech fields are salvaged from JSON-looking replies.
pub fn fallback_segments(reply: &str) -> Vec<RobotSegment> {
    let body = strip_code_fence(reply);
    if let Ok(serde_json::Value::Array(items)) = serde_json::from_str::<serde_json::Value>(body) {
        let speech: Vec<&str> = items.iter().filter_map(|v| v.get("speech").and_then(|s| s.as_str())).collect();
        if !speech.is_empty() {
            return vec![RobotSegment::fallback(&speech.join(" "))];
        }
    }
    vec![RobotSegment::fallback(body)]
}

/// Outcome of one robot turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotTurn {
    pub segments: Vec<RobotSegment>,
    /// Gateway calls spent on this turn (1..=3).
    pub calls: u32,
    pub fell_back: bool,
}

/// Asks the robot for its next utterance. `history` must not include the
/// system prompt; an empty history requests the opening greeting.
pub fn robot_turn(
    gateway: &Gateway,
    effective_prompt: &str,
    history: Vec<ChatMessage>,
) -> Result<RobotTurn, GatewayError> {
    let label = if history.is_empty() { "robot.greeting" } else { "robot.turn" };
    let mut messages = vec![ChatMessage::system(effective_prompt)];
    messages.extend(history);
    let request = CompletionRequest::new(label, CONVERSATION_TEMPERATURE, messages).with_max_tokens(600);
    Ok(match complete_with_repair(gateway, request, MAX_REPAIRS, parse_robot_reply)? {
        RepairOutcome::Valid { value, calls } => RobotTurn { segments: value, calls, fell_back: false },
        RepairOutcome::Exhausted { last_reply, calls, error } => {
            tracing::warn!(%error, "robot reply still invalid after repairs, using fallback segment");
            RobotTurn { segments: fallback_segments(&last_reply), calls, fell_back: true }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_banks_are_closed() {
        assert_eq!(FacialExpression::ALL.len(), 6);
        assert_eq!(HeadPosition::ALL.len(), 6);
        assert_eq!(IdleBehavior::ALL.len(), 2);
        assert_eq!(FacialExpression::parse("curious"), None);
        assert_eq!(HeadPosition::parse("look_at_screen"), Some(HeadPosition::LookAtScreen));
        for f in FacialExpression::ALL {
            assert_eq!(serde_json::to_value(f).unwrap(), f.as_str());
        }
        for h in HeadPosition::ALL {
            assert_eq!(serde_json::to_value(h).unwrap(), h.as_str());
        }
    }

    #[test]
    fn test_compose_appends_fixed_block() {
        let a = compose_effective_prompt("Tell space facts.").unwrap();
        let b = compose_effective_prompt("Be a pirate.\n\n").unwrap();
        assert!(a.ends_with(ROBOT_COMPAT_PROMPT));
        assert!(a.starts_with("Tell space facts.\n\n"));
        assert_eq!(&a[a.len() - ROBOT_COMPAT_PROMPT.len()..], &b[b.len() - ROBOT_COMPAT_PROMPT.len()..]);
        assert_eq!(compose_effective_prompt("  \n"), Err(RuntimeError::EmptyPrompt));
    }

    #[test]
    fn test_vocabulary_lists_each_token_once() {
        let vocab: Vec<&str> =
            ROBOT_COMPAT_PROMPT.split("VOCABULARY\n").nth(1).expect("vocabulary section").lines().collect();
        let tokens = |key: &str| -> Vec<String> {
            let line = vocab.iter().find(|l| l.starts_with(key)).unwrap();
            line[key.len()..].split(',').map(|t| t.trim().to_string()).collect()
        };
        let facial = tokens("facial_expression:");
        let head = tokens("head_position:");
        let expected_facial: Vec<String> = FacialExpression::ALL.iter().map(|f| f.to_string()).collect();
        let expected_head: Vec<String> = HeadPosition::ALL.iter().map(|h| h.to_string()).collect();
        assert_eq!(facial, expected_facial);
        assert_eq!(head, expected_head);
        for t in &expected_facial {
            assert_eq!(facial.iter().filter(|x| *x == t).count(), 1);
        }
    }

    #[test]
    fn test_parse_valid_reply() {
        let reply = r#"```json
[{"speech": "Wow, playing badminton\n sounds like so much fun!", "facial_expression": "excited", "head_position": "right_nod"},
 {"speech": "Do you think you could play badminton on the Moon?", "facial_expression": "interested", "head_position": "look_at_screen"}]
```"#;
        let segs = parse_robot_reply(reply).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].speech, "Wow, playing badminton sounds like so much fun!");
        assert_eq!(segs[0].facial_expression, FacialExpression::Excited);
    }

    #[test]
    fn test_parse_names_first_violation() {
        let err = parse_robot_reply(
            r#"[{"speech":"Hi","facial_expression":"curious","head_position":"left_nod"},{"speech":"","facial_expression":"x","head_position":"y"}]"#,
        )
        .unwrap_err();
        assert!(err.starts_with("segment 1: facial_expression \"curious\""), "{err}");
        assert!(parse_robot_reply("Hello there!").is_err());
        assert!(parse_robot_reply("[]").is_err());
        assert!(parse_robot_reply(
            r#"[{"speech":"a","facial_expression":"happy","head_position":"left_nod","mood":"x"}]"#
        )
        .is_err());
    }

    #[test]
    fn test_fallback_segments() {
        let segs = fallback_segments("Hello there,\nfriend!");
        assert_eq!(
            segs,
            vec![RobotSegment {
                speech: "Hello there, friend!".into(),
                facial_expression: FacialExpression::Interested,
                head_position: HeadPosition::LookAtScreen,
            }]
        );
        let salvaged = fallback_segments(r#"[{"speech":"One."},{"speech":"Two.","facial_expression":"curious"}]"#);
        assert_eq!(salvaged[0].speech, "One. Two.");
        assert_eq!(fallback_segments("")[0].speech, "...");
    }
}
