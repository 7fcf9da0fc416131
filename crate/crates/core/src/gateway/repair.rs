//! Validate-and-re-ask loop for structured LLM output.

use super::{ChatMessage, CompletionRequest, Gateway, GatewayError};

#[derive(Debug, Clone, PartialEq)]
pub enum RepairOutcome<T> {
    Valid { value: T, calls: u32 },
    Exhausted { last_reply: String, error: String, calls: u32 },
}

/// Calls the gateway, parses the reply, and on a parse failure re-asks up to
/// `max_repairs` times. Each re-ask appends the rejected reply and a
/// description of the first violation to the conversation.
pub fn complete_with_repair<T, F>(
    gateway: &Gateway,
    request: CompletionRequest,
    max_repairs: u32,
    parse: F,
) -> Result<RepairOutcome<T>, GatewayError>
where
    F: Fn(&str) -> Result<T, String>,
{
    let mut request = request;
    let mut calls = 0;
    loop {
        let reply = gateway.complete(&request)?;
        calls += 1;
        match parse(&reply) {
            Ok(value) => return Ok(RepairOutcome::Valid { value, calls }),
            Err(error) if calls > max_repairs => {
                return Ok(RepairOutcome::Exhausted { last_reply: reply, error, calls })
            }
            Err(error) => {
                tracing::debug!(label = %request.label, %error, "re-asking after invalid reply");
                request.messages.push(ChatMessage::assistant(reply));
                request.messages.push(ChatMessage::user(format!(
                    "Your previous reply could not be used: {error}\n\
                     Reply again with the complete answer in exactly the required format."
                )));
            }
        }
    }
}

/// Removes one surrounding Markdown code fence, if present.
pub fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        if let Some(inner) = rest.strip_suffix("```") {
            // drop the info string on the opening line
            return match inner.find('\n') {
                Some(i) => inner[i + 1..].trim(),
                None => inner.trim(),
            };
        }
    }
    trimmed
}
