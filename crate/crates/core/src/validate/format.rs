//! Format lint: five yamllint-style rules over the raw template text.
//!
//! Rules: parse failures, duplicate keys, indentation (tabs and inconsistent
//! steps between nested block collections), trailing spaces, and padding
//! inside flow-sequence brackets.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use yaml_rust2::parser::{Event, Parser};
use yaml_rust2::scanner::{Scanner, TScalarStyle, Token, TokenType};

use super::{Stage, StageReport, Violation};
use crate::template::{parse_json, SourceFormat, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatRule {
    BracketsSpacing,
    Indentation,
    DuplicateKey,
    ParseFailure,
    TrailingSpace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatViolation {
    pub line: usize,
    pub column: Option<usize>,
    pub rule_id: FormatRule,
    pub message: String,
}

impl FormatViolation {
    fn new(line: usize, column: usize, rule_id: FormatRule, detail: &str) -> Self {
        FormatViolation {
            line,
            column: Some(column),
            rule_id,
            message: format!("Line {line}: {detail}"),
        }
    }
}

const BRACKETS_DETAIL: &str = "too many spaces inside brackets";

/// Runs the format stage. JSON documents get the parse, duplicate-key and
/// trailing-space rules; YAML documents get all five.
pub fn check_format(text: &str) -> StageReport {
    let lines: Vec<Vec<char>> = text.lines().map(|l| l.chars().collect()).collect();
    let mut found = trailing_spaces(&lines);

    if SourceFormat::sniff(text) == SourceFormat::Json {
        match parse_json(text) {
            Err(TemplateError::DuplicateKey { key, line, column }) => found.push(FormatViolation::new(
                line,
                column,
                FormatRule::DuplicateKey,
                &format!("duplication of key \"{key}\" in mapping"),
            )),
            Err(TemplateError::Parse { line, column, message }) => found.push(FormatViolation::new(
                line,
                column,
                FormatRule::ParseFailure,
                &format!("syntax error: {message}"),
            )),
            _ => {}
        }
    } else {
        let tokens = scan_tokens(text);
        let block_lines = block_scalar_lines(&tokens);
        found.extend(tab_indentation(&lines, &block_lines));
        found.extend(bracket_spacing(&tokens, &lines));
        found.extend(indentation_steps(&tokens));
        found.extend(parse_and_duplicates(text));
    }

    found.sort_by_key(|v| (v.line, v.column.unwrap_or(0), v.rule_id));
    found.dedup();
    StageReport::new(Stage::Format, found.into_iter().map(Violation::Format).collect())
}

fn scan_tokens(text: &str) -> Vec<Token> {
    let mut scanner = Scanner::new(text.chars());
    let mut tokens = Vec::new();
    while let Ok(Some(tok)) = scanner.next_token() {
        tokens.push(tok);
    }
    tokens
}

fn trailing_spaces(lines: &[Vec<char>]) -> Vec<FormatViolation> {
    lines
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            let trimmed_len = l.iter().rposition(|c| !matches!(c, ' ' | '\t' | '\r')).map_or(0, |p| p + 1);
            let has_trailing = l[trimmed_len..].iter().any(|c| matches!(c, ' ' | '\t'));
            has_trailing.then(|| FormatViolation::new(i + 1, trimmed_len + 1, FormatRule::TrailingSpace, "trailing spaces"))
        })
        .collect()
}

/// 1-based line numbers holding the body of literal or folded block scalars.
fn block_scalar_lines(tokens: &[Token]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for (i, tok) in tokens.iter().enumerate() {
        if let TokenType::Scalar(TScalarStyle::Literal | TScalarStyle::Folded, _) = tok.1 {
            let start = tok.0.line();
            let end = tokens.get(i + 1).map_or(usize::MAX, |next| next.0.line());
            for line in start..end.max(start + 1) {
                if line == usize::MAX {
                    break;
                }
                out.insert(line);
                if end == usize::MAX && line > start + 100_000 {
                    break;
                }
            }
        }
    }
    out
}

fn tab_indentation(lines: &[Vec<char>], block_lines: &BTreeSet<usize>) -> Vec<FormatViolation> {
    lines
        .iter()
        .enumerate()
        .filter(|(i, _)| !block_lines.contains(&(i + 1)))
        .filter_map(|(i, l)| {
            let lead: Vec<&char> = l.iter().take_while(|c| c.is_whitespace()).collect();
            let tab = lead.iter().position(|c| **c == '\t')?;
            if lead.len() == l.len() {
                return None;
            }
            Some(FormatViolation::new(
                i + 1,
                tab + 1,
                FormatRule::Indentation,
                "found tab character in indentation",
            ))
        })
        .collect()
}

fn bracket_spacing(tokens: &[Token], lines: &[Vec<char>]) -> Vec<FormatViolation> {
    let mut out = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        let line_no = tok.0.line();
        let Some(line) = lines.get(line_no.wrapping_sub(1)) else {
            continue;
        };
        let col = tok.0.col();
        match tok.1 {
            TokenType::FlowSequenceStart if line.get(col) == Some(&'[') => {
                let spaces = line[col + 1..].iter().take_while(|c| **c == ' ').count();
                let rest = &line[col + 1 + spaces..];
                let continues_on_line = !rest.is_empty() && rest[0] != '#';
                if spaces > 0 && continues_on_line {
                    out.push(FormatViolation::new(line_no, col + 2, FormatRule::BracketsSpacing, BRACKETS_DETAIL));
                }
            }
            TokenType::FlowSequenceEnd if line.get(col) == Some(&']') => {
                let follows_open = i > 0 && matches!(tokens[i - 1].1, TokenType::FlowSequenceStart);
                if follows_open {
                    continue;
                }
                let before = &line[..col];
                let spaces = before.iter().rev().take_while(|c| **c == ' ').count();
                let starts_line = before.iter().all(|c| c.is_whitespace());
                if spaces > 0 && !starts_line {
                    out.push(FormatViolation::new(
                        line_no,
                        col + 1 - spaces,
                        FormatRule::BracketsSpacing,
                        BRACKETS_DETAIL,
                    ));
                }
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug)]
struct BlockFrame {
    is_sequence: bool,
    /// 0-based column of the first key/entry, once seen.
    column: Option<usize>,
    /// Line of the most recent `-` entry (sequences only).
    last_entry_line: Option<usize>,
}

/// Nested block collections must be indented by one consistent step. A block
/// sequence directly under a mapping key may also sit at the key's column.
fn indentation_steps(tokens: &[Token]) -> Vec<FormatViolation> {
    let mut out = Vec::new();
    let mut stack: Vec<BlockFrame> = Vec::new();
    let mut step: Option<usize> = None;
    // (is_sequence, dash column for sequences)
    let mut pending_start: Option<(bool, Option<usize>)> = None;

    for tok in tokens {
        match tok.1 {
            TokenType::BlockMappingStart => pending_start = Some((false, None)),
            // Entry markers sit on the entry content; the start marker is on the dash.
            TokenType::BlockSequenceStart => pending_start = Some((true, Some(tok.0.col()))),
            TokenType::BlockEnd => {
                stack.pop();
            }
            TokenType::Key | TokenType::BlockEntry => {
                let is_entry = matches!(tok.1, TokenType::BlockEntry);
                let line = tok.0.line();
                if let Some((is_sequence, dash_col)) = pending_start.take() {
                    let col = dash_col.unwrap_or(tok.0.col());
                    let parent = stack.last();
                    let same_line_as_entry = parent
                        .and_then(|p| p.last_entry_line)
                        .is_some_and(|l| l == line);
                    if let Some(parent_col) = parent.and_then(|p| p.column) {
                        if !same_line_as_entry && col >= parent_col {
                            let delta = col - parent_col;
                            let indentless_ok = is_sequence && delta == 0;
                            if !indentless_ok {
                                match step {
                                    None if delta > 0 => step = Some(delta),
                                    Some(s) if delta != s => out.push(FormatViolation::new(
                                        line,
                                        col + 1,
                                        FormatRule::Indentation,
                                        &format!("wrong indentation: expected {} but found {}", parent_col + s, col),
                                    )),
                                    _ => {}
                                }
                            }
                        }
                    } else if parent.is_none() && col != 0 {
                        out.push(FormatViolation::new(
                            line,
                            col + 1,
                            FormatRule::Indentation,
                            &format!("wrong indentation: expected 0 but found {col}"),
                        ));
                    }
                    stack.push(BlockFrame {
                        is_sequence,
                        column: Some(col),
                        last_entry_line: None,
                    });
                }
                if is_entry {
                    if let Some(top) = stack.last_mut() {
                        if top.is_sequence {
                            top.last_entry_line = Some(line);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

enum Frame {
    Map { keys: HashSet<String>, expecting_key: bool },
    Seq,
}

fn complete_node(stack: &mut [Frame]) {
    if let Some(Frame::Map { expecting_key, .. }) = stack.last_mut() {
        *expecting_key = !*expecting_key;
    }
}

/// Parser errors and every duplicated key (the parser itself accepts duplicates).
fn parse_and_duplicates(text: &str) -> Vec<FormatViolation> {
    let mut out = Vec::new();
    let mut parser = Parser::new_from_str(text);
    let mut stack: Vec<Frame> = Vec::new();
    loop {
        match parser.next_token() {
            Ok((Event::StreamEnd, _)) => break,
            Ok((ev, mark)) => match ev {
                Event::Scalar(value, ..) => {
                    if let Some(Frame::Map { keys, expecting_key: true }) = stack.last_mut() {
                        if !keys.insert(value.clone()) {
                            out.push(FormatViolation::new(
                                mark.line(),
                                mark.col() + 1,
                                FormatRule::DuplicateKey,
                                &format!("duplication of key \"{value}\" in mapping"),
                            ));
                        }
                    }
                    complete_node(&mut stack);
                }
                Event::Alias(_) => complete_node(&mut stack),
                Event::MappingStart(..) => stack.push(Frame::Map {
                    keys: HashSet::new(),
                    expecting_key: true,
                }),
                Event::SequenceStart(..) => stack.push(Frame::Seq),
                Event::MappingEnd | Event::SequenceEnd => {
                    stack.pop();
                    complete_node(&mut stack);
                }
                _ => {}
            },
            Err(e) => {
                let m = e.marker();
                out.push(FormatViolation::new(
                    m.line(),
                    m.col() + 1,
                    FormatRule::ParseFailure,
                    &format!("syntax error: {}", e.info()),
                ));
                break;
            }
        }
    }
    out
}
