//! Dialogue agent that co-writes the first behavior prompt with a designer.
//!
//! The agent fills five slots in a fixed order, asks about the first empty
//! one on every turn, and writes a draft prompt once the designer signals
//! they are done.

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;
use thiserror::Error;

use crate::gateway::{
    complete_with_repair, strip_code_fence, ChatMessage, CompletionRequest, Gateway, GatewayError, RepairOutcome,
    GENERATOR_TEMPERATURE,
};
use crate::refinement::{parse_prompt_body, PROMPT_PRACTICES};
use crate::SCHEMA_VERSION;

/// Turns (agent and designer) after which the session moves to drafting.
pub const MAX_TURNS: usize = 40;

pub const GENERIC_GREETING: &str = "Hello! I'm here to help you design how your robot talks. \
To start, what would you like the robot to do?";

const DRAFTING_ACK: &str = "Thanks! I have what I need and will draft the prompt now.";

/// Phrases that end the elicitation when the intent check is unavailable.
pub const COMPLETION_PHRASES: [&str; 5] = ["done", "good", "that's it", "finish", "looks good"];

#[derive(Debug, Error)]
pub enum ElicitationError {
    #[error("unknown elicitation session {0}")]
    UnknownSession(String),
    #[error("elicitation session {0} is closed")]
    SessionClosed(String),
    #[error("elicitation session {0} already has a turn in flight")]
    TurnInFlight(String),
    #[error("agent reply could not be parsed: {0}")]
    MalformedAgentReply(String),
    #[error("drafted prompt is empty")]
    MalformedDraft,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotName {
    TaskGoal,
    TaskContext,
    RobotRole,
    Audience,
    StylePreferences,
}

impl SlotName {
    /// Fixed questioning order.
    pub const ORDER: [SlotName; 5] = [
        SlotName::TaskGoal,
        SlotName::TaskContext,
        SlotName::RobotRole,
        SlotName::Audience,
        SlotName::StylePreferences,
    ];

    pub fn key(self) -> &'static str {
        match self {
            SlotName::TaskGoal => "task_goal",
            SlotName::TaskContext => "task_context",
            SlotName::RobotRole => "robot_role",
            SlotName::Audience => "audience",
            SlotName::StylePreferences => "style_preferences",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SlotName::TaskGoal => "Task goal",
            SlotName::TaskContext => "Task context",
            SlotName::RobotRole => "Robot role",
            SlotName::Audience => "Audience",
            SlotName::StylePreferences => "Style preferences",
        }
    }

    fn topic(self) -> &'static str {
        match self {
            SlotName::TaskGoal => "what the robot should accomplish",
            SlotName::TaskContext => "the setting and the content the robot will work with",
            SlotName::RobotRole => "the role or persona the robot should take on",
            SlotName::Audience => "who the robot will be talking to",
            SlotName::StylePreferences => "how the robot should speak, such as tone and length",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Slot {
    pub text: Option<String>,
    pub confirmed: bool,
}

impl Slot {
    pub fn is_filled(&self) -> bool {
        self.text.as_deref().is_some_and(|t| !t.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotState {
    pub task_goal: Slot,
    pub task_context: Slot,
    pub robot_role: Slot,
    pub audience: Slot,
    pub style_preferences: Slot,
}

impl SlotState {
    pub fn get(&self, name: SlotName) -> &Slot {
        match name {
            SlotName::TaskGoal => &self.task_goal,
            SlotName::TaskContext => &self.task_context,
            SlotName::RobotRole => &self.robot_role,
            SlotName::Audience => &self.audience,
            SlotName::StylePreferences => &self.style_preferences,
        }
    }

    fn get_mut(&mut self, name: SlotName) -> &mut Slot {
        match name {
            SlotName::TaskGoal => &mut self.task_goal,
            SlotName::TaskContext => &mut self.task_context,
            SlotName::RobotRole => &mut self.robot_role,
            SlotName::Audience => &mut self.audience,
            SlotName::StylePreferences => &mut self.style_preferences,
        }
    }

    /// First slot without text, in questioning order.
    pub fn next_unfilled(&self) -> Option<SlotName> {
        SlotName::ORDER.into_iter().find(|s| !self.get(*s).is_filled())
    }

    pub fn filled_count(&self) -> usize {
        SlotName::ORDER.iter().filter(|s| self.get(**s).is_filled()).count()
    }

    pub fn confirmed_count(&self) -> usize {
        SlotName::ORDER.iter().filter(|s| self.get(**s).confirmed).count()
    }

    /// Applies extracted slots. Confirmed slots are frozen, filled slots never
    /// go back to empty, and a confirmation needs text.
    pub fn merge(&self, extracted: &ExtractedSlots) -> Result<SlotState, String> {
        let mut next = self.clone();
        for name in SlotName::ORDER {
            let Some(update) = extracted.get(name) else { continue };
            let current = next.get_mut(name);
            if current.confirmed {
                continue;
            }
            let text = update.text.as_deref().map(str::trim).unwrap_or("");
            if text.is_empty() {
                if update.confirmed && !current.is_filled() {
                    return Err(format!("slot \"{}\" is marked confirmed but has no text", name.key()));
                }
                current.confirmed |= update.confirmed;
                continue;
            }
            current.text = Some(text.to_string());
            current.confirmed = update.confirmed;
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractedSlot {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractedSlots {
    #[serde(default)]
    pub task_goal: Option<ExtractedSlot>,
    #[serde(default)]
    pub task_context: Option<ExtractedSlot>,
    #[serde(default)]
    pub robot_role: Option<ExtractedSlot>,
    #[serde(default)]
    pub audience: Option<ExtractedSlot>,
    #[serde(default)]
    pub style_preferences: Option<ExtractedSlot>,
}

impl ExtractedSlots {
    fn get(&self, name: SlotName) -> Option<&ExtractedSlot> {
        match name {
            SlotName::TaskGoal => self.task_goal.as_ref(),
            SlotName::TaskContext => self.task_context.as_ref(),
            SlotName::RobotRole => self.robot_role.as_ref(),
            SlotName::Audience => self.audience.as_ref(),
            SlotName::StylePreferences => self.style_preferences.as_ref(),
        }
    }
}

/// Structured agent reply as returned by the model.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAgentReply {
    pub slots: ExtractedSlots,
    pub next_slot: Option<SlotName>,
    pub reply: String,
    #[serde(default)]
    pub suggestions: Vec<String>,
}

/// A validated agent reply merged into the slot state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentReply {
    pub slots: SlotState,
    pub next_slot: Option<SlotName>,
    pub reply: String,
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElicitationStatus {
    Active,
    Drafting,
    Completed,
    Abandoned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Participant {
    Agent,
    Designer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationTurn {
    pub speaker: Participant,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationSession {
    pub schema_version: String,
    pub id: String,
    pub project_id: String,
    pub brief: String,
    pub turns: Vec<ElicitationTurn>,
    pub slots: SlotState,
    pub status: ElicitationStatus,
    /// Ideas offered with the latest agent question.
    #[serde(default)]
    pub suggestions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl ElicitationSession {
    fn push(&mut self, speaker: Participant, text: impl Into<String>) {
        self.turns.push(ElicitationTurn { speaker, text: text.into() });
    }

    fn ensure_open(&self) -> Result<(), ElicitationError> {
        match self.status {
            ElicitationStatus::Completed | ElicitationStatus::Abandoned => {
                Err(ElicitationError::SessionClosed(self.id.clone()))
            }
            _ => Ok(()),
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.turns.first().map(|t| t.speaker) != Some(Participant::Agent) {
            return Err("first turn must be the agent greeting".into());
        }
        if self.turns.windows(2).any(|w| w[0].speaker == Participant::Agent && w[1].speaker == Participant::Agent) {
            return Err("agent turns are consecutive".into());
        }
        for name in SlotName::ORDER {
            let slot = self.slots.get(name);
            if slot.confirmed && !slot.is_filled() {
                return Err(format!("{} is confirmed without text", name.key()));
            }
        }
        if self.status == ElicitationStatus::Completed && self.draft.as_deref().is_none_or(|d| d.trim().is_empty()) {
            return Err("completed session has no draft".into());
        }
        Ok(())
    }
}

/// Result of one designer message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub reply: String,
    pub status: ElicitationStatus,
    pub next_slot: Option<SlotName>,
    pub suggestions: Vec<String>,
    pub slots: SlotState,
}

impl AgentResponse {
    fn from_session(session: &ElicitationSession, reply: String) -> Self {
        Self {
            reply,
            status: session.status,
            next_slot: session.slots.next_unfilled(),
            suggestions: session.suggestions.clone(),
            slots: session.slots.clone(),
        }
    }
}

const GREETING_INSTRUCTIONS: &str = "\
You are a prompt-design assistant helping a designer write the behavior prompt for a conversational social robot. \
Write your opening message: greet the designer in one or two friendly sentences, say you are ready to help define \
what the robot does and how it talks, and ask what the robot should accomplish. Do not restate or invent details \
of the project. Reply with the message text only.";

const INTENT_INSTRUCTIONS: &str = "\
You judge one message from a designer who is describing a social robot to a prompt-design assistant. \
Decide whether the designer is saying that the description is complete and the assistant should write the prompt now \
(for example \"done\", \"looks good\", \"that's it\"). \
Reply with only a JSON object: {\"finish\": true} or {\"finish\": false}.";

const TURN_INSTRUCTIONS: &str = "\
You are a prompt-design assistant helping a designer write the behavior prompt for a conversational social robot. \
Over a short conversation, collect five details:
- task_goal: what the robot should accomplish
- task_context: the setting and the content the robot works with
- robot_role: the role or persona the robot takes on
- audience: who the robot talks to
- style_preferences: how the robot should speak
After each designer message, update the details from the whole conversation. Fill a detail only with what the \
designer said or accepted, and mark it confirmed once the designer has explicitly agreed to it. Then acknowledge what \
you understood and ask about the first detail, in the order above, that is still empty, offering one to three short \
ideas the designer could pick from.
Reply with only a JSON object of this shape:
{\"slots\": {\"task_goal\": {\"text\": \"...\", \"confirmed\": false}, \"task_context\": null, \"robot_role\": null, \"audience\": null, \"style_preferences\": null}, \
\"next_slot\": \"task_context\", \"reply\": \"...\", \"suggestions\": [\"...\"]}
Use null for details that are still unknown, and null for next_slot once all five are filled. \
The reply is plain conversational text: never mention the detail names and never include JSON in it.";

const DRAFT_INSTRUCTIONS: &str = "\
You write the behavior prompt for a conversational social robot from details a designer gave in a conversation. \
The prompt is addressed to the robot in the second person (\"You are ...\") and covers the robot's task, the task \
context, the robot's role, the audience, and the speaking style.";

/// Opens a session; asks the model for a greeting when there is a brief.
pub fn start(
    gateway: &Gateway,
    id: String,
    project_id: String,
    brief: &str,
    now: DateTime<Utc>,
) -> Result<ElicitationSession, ElicitationError> {
    let brief = brief.trim();
    let greeting = if brief.is_empty() {
        GENERIC_GREETING.to_string()
    } else {
        let request = CompletionRequest::new(
            "elicit.greeting",
            GENERATOR_TEMPERATURE,
            vec![ChatMessage::system(GREETING_INSTRUCTIONS), ChatMessage::user(format!("Project brief: {brief}"))],
        )
        .with_max_tokens(300);
        match complete_with_repair(gateway, request, 1, parse_plain_reply)? {
            RepairOutcome::Valid { value, .. } => value,
            RepairOutcome::Exhausted { .. } => GENERIC_GREETING.to_string(),
        }
    };
    let mut session = ElicitationSession {
        schema_version: SCHEMA_VERSION.into(),
        id,
        project_id,
        brief: brief.to_string(),
        turns: Vec::new(),
        slots: SlotState::default(),
        status: ElicitationStatus::Active,
        suggestions: Vec::new(),
        draft: None,
        created_at: now,
    };
    session.push(Participant::Agent, greeting);
    Ok(session)
}

fn parse_plain_reply(reply: &str) -> Result<String, String> {
    let text = reply.trim();
    if text.is_empty() {
        return Err("the message is empty".into());
    }
    check_leakage(text)?;
    Ok(text.to_string())
}

fn check_leakage(text: &str) -> Result<(), String> {
    if text.contains(['{', '}']) {
        return Err("the message must be plain text without JSON".into());
    }
    let lower = text.to_lowercase();
    let leaks = |key: &str| {
        if key.contains('_') {
            lower.contains(key)
        } else {
            lower.contains(&format!("\"{key}\"")) || lower.contains(&format!("{key}:"))
        }
    };
    if let Some(name) = SlotName::ORDER.iter().find(|s| leaks(s.key())) {
        return Err(format!("the message must not mention the internal field name \"{}\"", name.key()));
    }
    Ok(())
}

static COMPLETION_RE: LazyLock<Regex> = LazyLock::new(|| {
    let alternatives: Vec<String> = COMPLETION_PHRASES.iter().map(|p| regex::escape(p).replace('\'', "['’]")).collect();
    Regex::new(&format!(r"(?i)\b(?:{})\b", alternatives.join("|"))).expect("completion pattern")
});

/// Deterministic completion check used when the model cannot be asked.
pub fn keyword_completion(text: &str) -> bool {
    COMPLETION_RE.is_match(text)
}

fn intent_request(session: &ElicitationSession, text: &str) -> CompletionRequest {
    let last_agent = session.turns.iter().rev().find(|t| t.speaker == Participant::Agent).map_or("", |t| &t.text);
    CompletionRequest::new(
        "elicit.intent",
        GENERATOR_TEMPERATURE,
        vec![
            ChatMessage::system(INTENT_INSTRUCTIONS),
            ChatMessage::user(format!("Assistant's last message: {last_agent}\nDesigner's message: {text}")),
        ],
    )
    .with_max_tokens(20)
}

#[derive(Deserialize)]
struct IntentReply {
    finish: bool,
}

/// Asks the model whether the designer is finished. Falls back to the
/// keyword list when no recorded answer exists or the answer is unusable.
pub fn is_completion(gateway: &Gateway, session: &ElicitationSession, text: &str) -> Result<bool, ElicitationError> {
    match gateway.complete(&intent_request(session, text)) {
        Ok(reply) => Ok(match serde_json::from_str::<IntentReply>(strip_code_fence(&reply)) {
            Ok(parsed) => parsed.finish,
            Err(_) => keyword_completion(text),
        }),
        Err(GatewayError::ReplayMiss { .. }) => Ok(keyword_completion(text)),
        Err(e) => Err(e.into()),
    }
}

fn turn_request(session: &ElicitationSession, text: &str) -> CompletionRequest {
    let brief = if session.brief.is_empty() { "(none)" } else { &session.brief };
    let state = serde_json::to_string_pretty(&session.slots).expect("slot state serializes");
    let mut messages = vec![ChatMessage::system(format!(
        "{TURN_INSTRUCTIONS}\n\nProject brief: {brief}\n\nCurrent details:\n{state}"
    ))];
    for t in &session.turns {
        messages.push(match t.speaker {
            Participant::Agent => ChatMessage::assistant(t.text.clone()),
            Participant::Designer => ChatMessage::user(t.text.clone()),
        });
    }
    messages.push(ChatMessage::user(text));
    CompletionRequest::new("elicit.turn", GENERATOR_TEMPERATURE, messages).with_max_tokens(800)
}

/// Validates a structured agent reply against the current slot state.
pub fn parse_agent_reply(current: &SlotState, reply: &str) -> Result<AgentReply, String> {
    let raw: RawAgentReply = serde_json::from_str(strip_code_fence(reply)).map_err(|e| {
        format!(
            "reply must be a JSON object with the keys \"slots\", \"next_slot\", \"reply\" and \"suggestions\" ({e})"
        )
    })?;
    let slots = current.merge(&raw.slots)?;
    let expected = slots.next_unfilled();
    if raw.next_slot != expected {
        let name = expected.map_or("null".to_string(), |s| format!("\"{}\"", s.key()));
        return Err(format!(
            "next_slot must be {name}: the first detail without text in the order task_goal, task_context, robot_role, audience, style_preferences"
        ));
    }
    let text = raw.reply.trim();
    if text.is_empty() {
        return Err("\"reply\" is empty".into());
    }
    check_leakage(text).map_err(|e| format!("\"reply\": {e}"))?;
    let suggestions: Vec<String> = raw.suggestions.iter().map(|s| s.trim().to_string()).collect();
    if suggestions.iter().any(String::is_empty) {
        return Err("\"suggestions\" contains an empty item".into());
    }
    if suggestions.len() > 3 || (expected.is_some() && suggestions.is_empty()) {
        return Err("\"suggestions\" must hold one to three ideas for the next detail".into());
    }
    for s in &suggestions {
        check_leakage(s).map_err(|e| format!("\"suggestions\": {e}"))?;
    }
    Ok(AgentReply { slots, next_slot: expected, reply: text.to_string(), suggestions })
}

/// Message asking again about the first empty slot.
pub fn reprompt(slots: &SlotState) -> String {
    match slots.next_unfilled() {
        Some(slot) => format!("Could you tell me a bit about {}?", slot.topic()),
        None => "Is there anything you would like to adjust, or shall I draft the prompt?".into(),
    }
}

/// Handles one designer message. On error the session is left untouched.
pub fn designer_message(
    gateway: &Gateway,
    session: &mut ElicitationSession,
    text: &str,
) -> Result<AgentResponse, ElicitationError> {
    if session.status != ElicitationStatus::Active {
        return Err(ElicitationError::SessionClosed(session.id.clone()));
    }
    let text = text.trim();
    if text.is_empty() {
        return Ok(AgentResponse::from_session(session, reprompt(&session.slots)));
    }
    if is_completion(gateway, session, text)? {
        session.push(Participant::Designer, text);
        session.push(Participant::Agent, DRAFTING_ACK);
        session.status = ElicitationStatus::Drafting;
        session.suggestions.clear();
        return Ok(AgentResponse::from_session(session, DRAFTING_ACK.into()));
    }
    let current = session.slots.clone();
    let outcome = complete_with_repair(gateway, turn_request(session, text), 1, |r| parse_agent_reply(&current, r))?;
    let reply = match outcome {
        RepairOutcome::Valid { value, .. } => value,
        RepairOutcome::Exhausted { error, .. } => return Err(ElicitationError::MalformedAgentReply(error)),
    };
    session.push(Participant::Designer, text);
    session.push(Participant::Agent, reply.reply.clone());
    session.slots = reply.slots;
    session.suggestions = reply.suggestions;
    if session.turns.len() >= MAX_TURNS {
        session.status = ElicitationStatus::Drafting;
    }
    Ok(AgentResponse::from_session(session, reply.reply))
}

fn draft_request(session: &ElicitationSession) -> CompletionRequest {
    let mut details = String::new();
    for name in SlotName::ORDER {
        let slot = session.slots.get(name);
        let text = slot.text.as_deref().filter(|t| !t.trim().is_empty()).unwrap_or("(not discussed)");
        let mark = if slot.confirmed { " (confirmed)" } else { "" };
        details.push_str(&format!("- {}: {text}{mark}\n", name.label()));
    }
    let conversation: Vec<String> = session
        .turns
        .iter()
        .map(|t| {
            let who = match t.speaker {
                Participant::Agent => "Assistant",
                Participant::Designer => "Designer",
            };
            format!("{who}: {}", t.text)
        })
        .collect();
    let brief = if session.brief.is_empty() { "(none)" } else { &session.brief };
    CompletionRequest::new(
        "elicit.draft",
        GENERATOR_TEMPERATURE,
        vec![
            ChatMessage::system(format!(
                "{DRAFT_INSTRUCTIONS}\n\n{PROMPT_PRACTICES}\n\nReply with only the prompt text, without commentary or code fences."
            )),
            ChatMessage::user(format!(
                "Project brief: {brief}\n\nDetails:\n{details}\nConversation:\n{}",
                conversation.join("\n")
            )),
        ],
    )
    .with_max_tokens(2000)
}

/// Writes the draft prompt and completes the session. An active session is
/// finished early, as when the designer forces the end.
pub fn finalize(gateway: &Gateway, session: &mut ElicitationSession) -> Result<String, ElicitationError> {
    session.ensure_open()?;
    let body = match complete_with_repair(gateway, draft_request(session), 1, parse_prompt_body)? {
        RepairOutcome::Valid { value, .. } => value,
        RepairOutcome::Exhausted { .. } => return Err(ElicitationError::MalformedDraft),
    };
    session.status = ElicitationStatus::Completed;
    session.draft = Some(body.clone());
    Ok(body)
}

pub fn abandon(session: &mut ElicitationSession) -> Result<(), ElicitationError> {
    session.ensure_open()?;
    session.status = ElicitationStatus::Abandoned;
    Ok(())
}
