//! Chat-generation interface: conversation types, the system prompt, and the
//! scripted and HTTP providers.

mod http;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use http::{HttpProvider, HttpProviderConfig};
pub use scripted::{ScriptFixture, ScriptedProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self, ConversationError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(ConversationError::EmptyContent(role));
        }
        Ok(ChatMessage { role, content })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConversationError {
    #[error("{0} message content must not be empty")]
    EmptyContent(Role),
    #[error("expected a {expected} message next, got {found}")]
    OutOfOrder { expected: Role, found: Role },
}

/// Append-only message history: system, user, then alternating
/// assistant/user turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Conversation {
    messages: Vec<ChatMessage>,
}

impl Conversation {
    pub fn new(system_prompt: &str, task_prompt: &str) -> Result<Self, ConversationError> {
        Ok(Conversation {
            messages: vec![
                ChatMessage::new(Role::System, system_prompt)?,
                ChatMessage::new(Role::User, task_prompt)?,
            ],
        })
    }

    /// Role the next appended message must have.
    pub fn expected_next(&self) -> Role {
        match self.messages.last().map(|m| m.role) {
            Some(Role::User) => Role::Assistant,
            _ => Role::User,
        }
    }

    pub fn push(&mut self, message: ChatMessage) -> Result<(), ConversationError> {
        let expected = self.expected_next();
        if message.role != expected {
            return Err(ConversationError::OutOfOrder {
                expected,
                found: message.role,
            });
        }
        self.messages.push(message);
        Ok(())
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// True when the last message is from the user, so a reply can be requested.
    pub fn awaiting_reply(&self) -> bool {
        self.expected_next() == Role::Assistant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_name: String,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            temperature: 0.0,
            max_output_tokens: 8000,
            model_name: "scripted".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider rejected the request (status {status}): {body}")]
    Provider { status: u16, body: String },
    #[error("scripted replies exhausted for task {task_id} after {served} call(s)")]
    ScriptExhausted { task_id: String, served: usize },
    #[error("script fixture: {0}")]
    Fixture(String),
    #[error("conversation must end with a user message before generating")]
    NotAwaitingReply,
}

/// A chat model. Implementations must not depend on call order across
/// conversations.
pub trait Provider: Send + Sync {
    fn complete(&self, conversation: &Conversation, settings: &GenerationSettings) -> Result<(String, Usage), LlmError>;
}

/// Produces a provider for each benchmark task.
pub trait ProviderFactory: Send + Sync {
    fn for_task(&self, task_id: &str) -> Result<Arc<dyn Provider>, LlmError>;
}

/// Requests the next assistant message. The conversation is left untouched;
/// the caller appends the reply.
pub fn generate(
    provider: &dyn Provider,
    conversation: &Conversation,
    settings: &GenerationSettings,
) -> Result<(ChatMessage, Usage), LlmError> {
    if !conversation.awaiting_reply() {
        return Err(LlmError::NotAwaitingReply);
    }
    let (content, usage) = provider.complete(conversation, settings)?;
    let message = ChatMessage::new(Role::Assistant, content).map_err(|_| LlmError::Provider {
        status: 200,
        body: "empty completion".to_string(),
    })?;
    Ok((message, usage))
}

pub const DEFAULT_ROLE_TEXT: &str = "You are an experienced cloud and DevOps engineer who writes AWS CloudFormation templates that deploy on the first attempt.";

pub const DEFAULT_TASK_TEXT: &str = "Given a description of the required infrastructure, produce one complete CloudFormation template in YAML. Return the whole template inside a single fenced code block and nothing else. Give every parameter a usable default value.";

pub const STEP_HINT_TEXT: &str = "Work in this order: identify the resources needed, then the parameters, then the properties of each resource, then write out the template.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Replaces the role block verbatim.
    pub role: Option<String>,
    pub task: Option<String>,
    pub chain_of_thought: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            role: None,
            task: None,
            chain_of_thought: true,
        }
    }
}

pub fn build_system_prompt(cfg: &PromptConfig) -> String {
    let mut out = format!(
        "## Role\n{}\n\n## Task\n{}\n",
        cfg.role.as_deref().unwrap_or(DEFAULT_ROLE_TEXT),
        cfg.task.as_deref().unwrap_or(DEFAULT_TASK_TEXT)
    );
    if cfg.chain_of_thought {
        out.push_str("\n## Steps\n");
        out.push_str(STEP_HINT_TEXT);
        out.push('\n');
    }
    out
}

/// Rough token count used where a provider reports none.
pub(crate) fn estimate_tokens(text: &str) -> u64 {
    text.chars().count().div_ceil(4) as u64
}
