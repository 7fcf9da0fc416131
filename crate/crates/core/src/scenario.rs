//! Scripted design loops used to author fixtures and to drive end-to-end
//! runs.
//!
//! A scenario lists what the designer and the test user say, which spans
//! get annotated, and, for recording, the model replies per pipeline stage.
//! Replies that are JSON values are sent as compact JSON; strings are sent
//! verbatim, which is how malformed replies are scripted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::annotation::{Annotation, Span};
use crate::elicitation::ElicitationSession;
use crate::engine::{Engine, Result};
use crate::error::AceError;
use crate::gateway::ScriptedProvider;
use crate::history::{NewVersion, Origin, Project, PromptVersion};
use crate::refinement::{RefinedPromptDraft, SuggestionSet};
use crate::runtime::Transcript;

const BUNDLED: [(&str, &str); 3] = [
    ("museum", include_str!("../scenarios/museum.json")),
    ("sea_survival", include_str!("../scenarios/sea_survival.json")),
    ("clinic", include_str!("../scenarios/clinic.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub project_name: String,
    pub brief: String,
    pub elicitation: ElicitationScript,
    pub session: SessionScript,
    pub annotations: Vec<AnnotationScript>,
    pub suggestions: Vec<Value>,
    pub refined: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElicitationScript {
    pub greeting: Vec<Value>,
    pub exchanges: Vec<Exchange>,
    pub draft: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exchange {
    pub designer: String,
    pub intent: Value,
    #[serde(default)]
    pub agent: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionScript {
    pub greeting: Vec<Value>,
    pub turns: Vec<TurnScript>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnScript {
    pub user: String,
    pub robot: Vec<Value>,
}

/// An annotation addressed by quoting text from one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationScript {
    pub utterance: usize,
    pub quote: String,
    pub tags: Vec<String>,
    #[serde(default)]
    pub comment: Option<String>,
}

/// Everything a scenario run produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub project: Project,
    pub elicitation: ElicitationSession,
    pub initial_version: PromptVersion,
    pub transcript: Transcript,
    pub annotations: Vec<Annotation>,
    pub suggestions: SuggestionSet,
    pub draft: RefinedPromptDraft,
    pub refined_version: PromptVersion,
}

fn reply_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Character span of the first occurrence of `quote` in an utterance.
pub fn span_for_quote(transcript: &Transcript, utterance: usize, quote: &str) -> Option<Span> {
    let text = &transcript.utterances.get(utterance)?.text;
    let byte = text.find(quote)?;
    let start = text[..byte].chars().count();
    Some(Span::new(utterance, start, start + quote.chars().count()))
}

impl Scenario {
    pub fn parse(json: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, String> {
        let raw = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&raw).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// The three scenarios shipped with the crate.
    pub fn bundled() -> Vec<Scenario> {
        BUNDLED
            .iter()
            .map(|(name, json)| Self::parse(json).unwrap_or_else(|e| panic!("bundled scenario {name}: {e}")))
            .collect()
    }

    pub fn bundled_by_name(name: &str) -> Option<Scenario> {
        Self::bundled().into_iter().find(|s| s.name == name)
    }

    /// Queues every scripted reply on a provider, in pipeline order.
    pub fn load_replies(&self, provider: &ScriptedProvider) {
        let push = |label: &str, values: &[Value]| {
            for v in values {
                provider.push(label, reply_text(v));
            }
        };
        push("elicit.greeting", &self.elicitation.greeting);
        for ex in &self.elicitation.exchanges {
            push("elicit.intent", std::slice::from_ref(&ex.intent));
            push("elicit.turn", &ex.agent);
        }
        push("elicit.draft", &self.elicitation.draft);
        push("robot.greeting", &self.session.greeting);
        for t in &self.session.turns {
            push("robot.turn", &t.robot);
        }
        push("refine.suggestions", &self.suggestions);
        push("refine.prompt", &self.refined);
    }

    /// Runs the whole loop: elicit, commit, test, annotate, suggest, refine, commit.
    pub fn run(&self, engine: &Engine) -> Result<ScenarioOutcome> {
        let project = engine.create_project(&self.project_name, &self.brief)?;
        let started = engine.start_elicitation(&project.id)?;
        for ex in &self.elicitation.exchanges {
            engine.elicitation_message(&started.id, &ex.designer)?;
        }
        let draft = engine.finalize_elicitation(&started.id)?;
        let elicitation = engine.elicitation(&started.id)?;
        let initial_version = engine.commit_version(&project.id, NewVersion::new(draft.body, Origin::Elicited))?;

        let view = engine.start_session(&initial_version.id)?;
        for t in &self.session.turns {
            engine.user_turn(&view.session.id, &t.user)?;
        }
        let transcript = engine.end_session(&view.session.id)?;

        let mut annotations = Vec::new();
        for a in &self.annotations {
            let span = span_for_quote(&transcript, a.utterance, &a.quote).ok_or_else(|| {
                AceError::InvalidInput(format!("quote {:?} not found in utterance {}", a.quote, a.utterance))
            })?;
            annotations.push(engine.add_annotation(&transcript.id, span, &a.tags, a.comment.clone())?);
        }

        let suggestions = engine.generate_suggestions(&initial_version.id, &transcript.id)?;
        let draft = engine.refine(&initial_version.id, &suggestions.id, None)?;
        let refined_version = engine.commit_refinement(&draft, None)?;
        Ok(ScenarioOutcome {
            project,
            elicitation,
            initial_version,
            transcript,
            annotations,
            suggestions,
            draft,
            refined_version,
        })
    }
}
