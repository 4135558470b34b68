use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{Conversation, GenerationSettings, LlmError, Provider, ProviderFactory, Usage};

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    /// Endpoint root; `/chat/completions` is appended.
    pub base_url: String,
    /// Already resolved from the environment; never read from config files.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each further attempt.
    pub backoff: Duration,
}

impl HttpProviderConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpProviderConfig {
            base_url: base_url.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads the API key from the named environment variable, if any.
    pub fn with_key_from_env(mut self, var: Option<&str>) -> Self {
        self.api_key = var.and_then(|v| std::env::var(v).ok()).filter(|k| !k.is_empty());
        self
    }
}

/// OpenAI-compatible chat-completions client.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ResponseUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ResponseUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

fn is_loopback(url: &str) -> bool {
    let rest = url.split("://").nth(1).unwrap_or(url);
    ["localhost", "127.", "[::1]"].iter().any(|p| rest.starts_with(p))
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, LlmError> {
        let mut builder = reqwest::blocking::Client::builder().timeout(config.timeout);
        if is_loopback(&config.base_url) {
            builder = builder.no_proxy();
        }
        let client = builder.build().map_err(|e| LlmError::Transport {
            attempts: 0,
            message: e.to_string(),
        })?;
        Ok(HttpProvider { config, client })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<(String, Option<ResponseUsage>), Attempt> {
        let mut req = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("status {}: {text}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(LlmError::Provider {
                status: status.as_u16(),
                body: text,
            }));
        }
        let malformed = |detail: String| {
            Attempt::Fatal(LlmError::Provider {
                status: status.as_u16(),
                body: detail,
            })
        };
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| malformed(format!("malformed completion body: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| malformed("completion has no choices[0].message.content".to_string()))?;
        Ok((content, parsed.usage))
    }
}

impl Provider for HttpProvider {
    fn complete(&self, conversation: &Conversation, settings: &GenerationSettings) -> Result<(String, Usage), LlmError> {
        let body = json!({
            "model": settings.model_name,
            "messages": conversation.messages(),
            "temperature": settings.temperature,
            "max_tokens": settings.max_output_tokens,
        });
        let started = Instant::now();
        let mut delay = self.config.backoff;
        let attempts = self.config.max_attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&body) {
                Ok((content, usage)) => {
                    let usage = usage.unwrap_or(ResponseUsage {
                        prompt_tokens: 0,
                        completion_tokens: 0,
                    });
                    return Ok((
                        content,
                        Usage {
                            prompt_tokens: usage.prompt_tokens,
                            completion_tokens: usage.completion_tokens,
                            latency_ms: started.elapsed().as_millis() as u64,
                        },
                    ));
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    tracing::warn!(attempt, error = %msg, "chat completion attempt failed");
                    last_error = msg;
                    if attempt < attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(LlmError::Transport {
            attempts,
            message: last_error,
        })
    }
}

impl ProviderFactory for HttpProvider {
    fn for_task(&self, _task_id: &str) -> Result<Arc<dyn Provider>, LlmError> {
        Ok(Arc::new(self.clone()))
    }
}
