#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no template block found")]
    EmptyExtraction,
}

/// Content of the first fenced code block, or the whole message trimmed when
/// there is no fence.
pub fn extract_code_block(llm_message: &str) -> Result<String, ExtractError> {
    let extracted = first_fenced_block(llm_message).unwrap_or_else(|| llm_message.trim().to_string());
    if extracted.trim().is_empty() {
        Err(ExtractError::EmptyExtraction)
    } else {
        Ok(extracted)
    }
}

fn first_fenced_block(message: &str) -> Option<String> {
    let mut lines = message.lines();
    let fence = loop {
        let line = lines.next()?;
        let trimmed = line.trim_start();
        if let Some(fence) = ["```", "~~~"].into_iter().find(|f| trimmed.starts_with(f)) {
            break fence;
        }
    };
    let mut body = Vec::new();
    for line in lines {
        if line.trim_start().starts_with(fence) && line.trim().chars().all(|c| c == fence.as_bytes()[0] as char) {
            return Some(join_block(&body));
        }
        body.push(line);
    }
    // Unterminated fence: take the rest of the message.
    Some(join_block(&body))
}

fn join_block(lines: &[&str]) -> String {
    let mut out = lines.join("\n");
    out.push('\n');
    out
}
