use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Deserialize;

use super::{estimate_tokens, Conversation, GenerationSettings, LlmError, Provider, ProviderFactory, Usage};

/// Replays queued replies in order; fails once the queue is empty.
#[derive(Debug)]
pub struct ScriptedProvider {
    task_id: String,
    queue: Mutex<VecDeque<String>>,
    served: Mutex<usize>,
}

impl ScriptedProvider {
    pub fn new(task_id: impl Into<String>, replies: Vec<String>) -> Self {
        ScriptedProvider {
            task_id: task_id.into(),
            queue: Mutex::new(replies.into()),
            served: Mutex::new(0),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("script queue poisoned").len()
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, conversation: &Conversation, _settings: &GenerationSettings) -> Result<(String, Usage), LlmError> {
        let mut queue = self.queue.lock().expect("script queue poisoned");
        let mut served = self.served.lock().expect("script counter poisoned");
        let reply = queue.pop_front().ok_or_else(|| LlmError::ScriptExhausted {
            task_id: self.task_id.clone(),
            served: *served,
        })?;
        *served += 1;
        let prompt_tokens = conversation.messages().iter().map(|m| estimate_tokens(&m.content)).sum();
        let usage = Usage {
            prompt_tokens,
            completion_tokens: estimate_tokens(&reply),
            latency_ms: 0,
        };
        Ok((reply, usage))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReplyEntry {
    Text(String),
    File { file: PathBuf },
}

/// Reply queues keyed by task id, loaded from a YAML fixture. Entries are
/// either literal reply text or `{file: path}` relative to the fixture.
#[derive(Debug, Clone, Default)]
pub struct ScriptFixture {
    replies: BTreeMap<String, Vec<String>>,
}

impl ScriptFixture {
    pub fn from_map(replies: BTreeMap<String, Vec<String>>) -> Self {
        ScriptFixture { replies }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, LlmError> {
        let raw: BTreeMap<String, Vec<ReplyEntry>> =
            serde_yaml::from_str(text).map_err(|e| LlmError::Fixture(e.to_string()))?;
        let mut replies = BTreeMap::new();
        for (task, entries) in raw {
            let mut queue = Vec::with_capacity(entries.len());
            for entry in entries {
                queue.push(match entry {
                    ReplyEntry::Text(t) => t,
                    ReplyEntry::File { file } => {
                        let p = base_dir.join(&file);
                        std::fs::read_to_string(&p)
                            .map_err(|e| LlmError::Fixture(format!("{task}: {}: {e}", p.display())))?
                    }
                });
            }
            replies.insert(task, queue);
        }
        Ok(ScriptFixture { replies })
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.replies.keys().map(String::as_str)
    }

    /// A fresh provider holding the full queue for `task_id`.
    pub fn provider(&self, task_id: &str) -> ScriptedProvider {
        ScriptedProvider::new(task_id, self.replies.get(task_id).cloned().unwrap_or_default())
    }
}

impl ProviderFactory for ScriptFixture {
    fn for_task(&self, task_id: &str) -> Result<Arc<dyn Provider>, LlmError> {
        Ok(Arc::new(self.provider(task_id)))
    }
}
