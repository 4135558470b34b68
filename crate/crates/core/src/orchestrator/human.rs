use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::sync::Mutex;

use serde::Serialize;

use crate::llm::Conversation;
use crate::validate::Stage;

/// Everything an operator needs to write human-tier feedback.
#[derive(Debug, Clone, Serialize)]
pub struct HumanRequest {
    pub task_id: String,
    pub stage: Stage,
    /// Iteration that failed.
    pub attempt: u32,
    pub violations: Vec<String>,
    /// History including the failing reply.
    pub conversation: Conversation,
    pub current_template: String,
    pub reference_template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HumanError {
    #[error("no scripted human feedback left")]
    Exhausted,
    #[error("operator input closed before feedback was given")]
    InputClosed,
    #[error("feedback session closed")]
    Closed,
}

/// Source of human-tier feedback. `request` blocks until text is available.
pub trait HumanResponder: Send + Sync {
    fn request(&self, request: HumanRequest) -> Result<String, HumanError>;
}

/// Answers from a fixed queue, for tests and replayed experiments.
#[derive(Debug, Default)]
pub struct ScriptedResponder {
    queue: Mutex<VecDeque<String>>,
    served: Mutex<usize>,
}

impl ScriptedResponder {
    pub fn new(answers: Vec<String>) -> Self {
        ScriptedResponder {
            queue: Mutex::new(answers.into()),
            served: Mutex::new(0),
        }
    }

    pub fn served(&self) -> usize {
        *self.served.lock().expect("responder poisoned")
    }
}

impl HumanResponder for ScriptedResponder {
    fn request(&self, _request: HumanRequest) -> Result<String, HumanError> {
        let text = self
            .queue
            .lock()
            .expect("responder poisoned")
            .pop_front()
            .ok_or(HumanError::Exhausted)?;
        *self.served.lock().expect("responder poisoned") += 1;
        Ok(text)
    }
}

/// Interactive terminal fallback: prints the failure to stderr and reads
/// feedback from stdin until a line containing only `.` or end of input.
#[derive(Debug, Default)]
pub struct TtyResponder {
    // Concurrent runs must not interleave prompts.
    lock: Mutex<()>,
}

impl TtyResponder {
    pub fn new() -> Self {
        Self::default()
    }
}

pub(crate) fn read_feedback(input: &mut dyn BufRead) -> Result<String, HumanError> {
    let mut lines = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        let n = input.read_line(&mut line).map_err(|_| HumanError::InputClosed)?;
        if n == 0 || line.trim_end_matches(['\r', '\n']) == "." {
            break;
        }
        lines.push(line.trim_end_matches(['\r', '\n']).to_string());
    }
    let text = lines.join("\n");
    if text.trim().is_empty() {
        Err(HumanError::InputClosed)
    } else {
        Ok(text)
    }
}

impl HumanResponder for TtyResponder {
    fn request(&self, request: HumanRequest) -> Result<String, HumanError> {
        let _guard = self.lock.lock().expect("tty lock poisoned");
        let mut err = std::io::stderr().lock();
        let _ = writeln!(
            err,
            "\n=== task {} failed at {} (iteration {}) ===",
            request.task_id, request.stage, request.attempt
        );
        for v in &request.violations {
            let _ = writeln!(err, "  - {v}");
        }
        let _ = writeln!(err, "--- current template ---\n{}", request.current_template);
        if let Some(reference) = &request.reference_template {
            let _ = writeln!(err, "--- reference template ---\n{reference}");
        }
        let _ = writeln!(err, "Enter feedback, finish with a line containing only '.':");
        drop(err);
        read_feedback(&mut std::io::stdin().lock())
    }
}
