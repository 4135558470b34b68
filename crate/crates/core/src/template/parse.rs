//! Text → [`Value`] tree for YAML (with short-form intrinsic tags) and JSON.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use serde::de::{self, Deserialize, Deserializer, MapAccess, SeqAccess, Visitor};
use yaml_rust2::parser::{Event, Parser, Tag};
use yaml_rust2::scanner::{Marker, TScalarStyle};

use super::value::{long_name_for_tag, Value};
use super::TemplateError;

pub fn parse_yaml(text: &str) -> Result<Value, TemplateError> {
    let mut parser = Parser::new_from_str(text);
    let mut events = Vec::new();
    loop {
        match parser.next_token() {
            Ok((Event::StreamEnd, _)) => break,
            Ok(ev) => events.push(ev),
            Err(e) => {
                let m = e.marker();
                return Err(TemplateError::Parse {
                    line: m.line(),
                    column: m.col() + 1,
                    message: e.info().to_string(),
                });
            }
        }
    }
    let mut builder = YamlBuilder {
        events,
        pos: 0,
        anchors: HashMap::new(),
    };
    builder.document()
}

struct YamlBuilder {
    events: Vec<(Event, Marker)>,
    pos: usize,
    anchors: HashMap<usize, Value>,
}

impl YamlBuilder {
    fn next(&mut self) -> Option<(Event, Marker)> {
        let ev = self.events.get(self.pos).cloned();
        self.pos += 1;
        ev
    }

    fn document(&mut self) -> Result<Value, TemplateError> {
        let mut root = None;
        while let Some((ev, mark)) = self.next() {
            match ev {
                Event::StreamStart | Event::DocumentEnd | Event::Nothing => {}
                Event::DocumentStart => {
                    if root.is_some() {
                        return Err(parse_error(mark, "expected a single YAML document"));
                    }
                    root = Some(self.node()?);
                }
                _ => return Err(parse_error(mark, "unexpected event outside of a document")),
            }
        }
        Ok(root.unwrap_or(Value::Null))
    }

    fn node(&mut self) -> Result<Value, TemplateError> {
        let (ev, mark) = self
            .next()
            .ok_or_else(|| TemplateError::Parse {
                line: 0,
                column: 0,
                message: "unexpected end of document".into(),
            })?;
        match ev {
            Event::Scalar(text, style, anchor, tag) => {
                let value = match &tag {
                    Some(tag) if is_intrinsic_tag(tag) => {
                        Value::intrinsic(long_name_for_tag(&tag.suffix), normalize_short_scalar(&tag.suffix, text))
                    }
                    Some(tag) if tag.handle == "!!" => core_tagged_scalar(&tag.suffix, text),
                    _ => resolve_scalar(text, style),
                };
                self.remember(anchor, &value);
                Ok(value)
            }
            Event::SequenceStart(anchor, tag) => {
                let mut items = Vec::new();
                loop {
                    if matches!(self.events.get(self.pos), Some((Event::SequenceEnd, _))) {
                        self.pos += 1;
                        break;
                    }
                    items.push(self.node()?);
                }
                let value = wrap_tagged(tag.as_ref(), Value::Sequence(items), mark)?;
                self.remember(anchor, &value);
                Ok(value)
            }
            Event::MappingStart(anchor, tag) => {
                let mut map = IndexMap::new();
                loop {
                    if matches!(self.events.get(self.pos), Some((Event::MappingEnd, _))) {
                        self.pos += 1;
                        break;
                    }
                    let key_mark = self.events.get(self.pos).map(|(_, m)| *m).unwrap_or(mark);
                    let key = match self.node()? {
                        Value::String(s) => s,
                        Value::Number(n) => n.to_string(),
                        Value::Bool(b) => b.to_string(),
                        Value::Null => String::new(),
                        _ => return Err(parse_error(key_mark, "mapping keys must be scalars")),
                    };
                    let value = self.node()?;
                    if map.contains_key(&key) {
                        return Err(TemplateError::DuplicateKey {
                            key,
                            line: key_mark.line(),
                            column: key_mark.col() + 1,
                        });
                    }
                    map.insert(key, value);
                }
                let value = wrap_tagged(tag.as_ref(), normalize_long_form(map), mark)?;
                self.remember(anchor, &value);
                Ok(value)
            }
            Event::Alias(id) => self
                .anchors
                .get(&id)
                .cloned()
                .ok_or_else(|| parse_error(mark, "unknown alias")),
            other => Err(parse_error(mark, &format!("unexpected YAML event {other:?}"))),
        }
    }

    fn remember(&mut self, anchor: usize, value: &Value) {
        if anchor != 0 {
            self.anchors.insert(anchor, value.clone());
        }
    }
}

fn parse_error(mark: Marker, message: &str) -> TemplateError {
    TemplateError::Parse {
        line: mark.line(),
        column: mark.col() + 1,
        message: message.to_string(),
    }
}

fn is_intrinsic_tag(tag: &Tag) -> bool {
    tag.handle == "!" && !tag.suffix.is_empty()
}

fn wrap_tagged(tag: Option<&Tag>, value: Value, mark: Marker) -> Result<Value, TemplateError> {
    match tag {
        Some(tag) if is_intrinsic_tag(tag) => {
            if tag.suffix == "Ref" {
                return Err(parse_error(mark, "!Ref expects a scalar argument"));
            }
            Ok(Value::intrinsic(long_name_for_tag(&tag.suffix), value))
        }
        _ => Ok(value),
    }
}

/// `!GetAtt A.B` is shorthand for `[A, B]`.
fn normalize_short_scalar(suffix: &str, text: String) -> Value {
    if suffix == "GetAtt" {
        split_getatt(&text)
    } else {
        Value::String(text)
    }
}

fn split_getatt(text: &str) -> Value {
    match text.split_once('.') {
        Some((resource, attr)) => Value::Sequence(vec![Value::string(resource), Value::string(attr)]),
        None => Value::String(text.to_string()),
    }
}

/// A single-key map `{Ref: x}` / `{Fn::*: x}` / `{Condition: name}` becomes an intrinsic.
pub(crate) fn normalize_long_form(map: IndexMap<String, Value>) -> Value {
    if map.len() == 1 {
        let (key, _) = map.first().expect("len checked");
        let is_intrinsic = key == "Ref"
            || key.starts_with("Fn::")
            || (key == "Condition" && matches!(map.first(), Some((_, Value::String(_)))));
        if is_intrinsic {
            let (name, argument) = map.into_iter().next().expect("len checked");
            let argument = match (name.as_str(), argument) {
                ("Fn::GetAtt", Value::String(s)) => split_getatt(&s),
                (_, arg) => arg,
            };
            return Value::intrinsic(name, argument);
        }
    }
    Value::Map(map)
}

fn core_tagged_scalar(suffix: &str, text: String) -> Value {
    match suffix {
        "str" => Value::String(text),
        _ => resolve_scalar(text, TScalarStyle::Plain),
    }
}

/// YAML 1.2 core-schema resolution of untagged scalars.
fn resolve_scalar(text: String, style: TScalarStyle) -> Value {
    if style != TScalarStyle::Plain {
        return Value::String(text);
    }
    match text.as_str() {
        "" | "~" | "null" | "Null" | "NULL" => return Value::Null,
        "true" | "True" | "TRUE" => return Value::Bool(true),
        "false" | "False" | "FALSE" => return Value::Bool(false),
        _ => {}
    }
    if let Some(n) = parse_number(&text) {
        return Value::Number(n);
    }
    Value::String(text)
}

fn parse_number(text: &str) -> Option<serde_json::Number> {
    let looks_numeric = text
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'))
        && text.chars().any(|c| c.is_ascii_digit());
    if !looks_numeric {
        return None;
    }
    // Leading zeros ("0777") and version-like strings stay textual.
    let digits = text.trim_start_matches(['-', '+']);
    if digits.len() > 1 && digits.starts_with('0') && !digits.starts_with("0.") {
        return None;
    }
    if let Ok(i) = text.parse::<i64>() {
        return Some(i.into());
    }
    if let Ok(u) = text.parse::<u64>() {
        return Some(u.into());
    }
    text.parse::<f64>().ok().and_then(serde_json::Number::from_f64)
}

pub fn parse_json(text: &str) -> Result<Value, TemplateError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let node = JsonNode::deserialize(&mut de).and_then(|n| de.end().map(|_| n));
    match node {
        Ok(JsonNode(v)) => Ok(v),
        Err(e) => {
            let message = e.to_string();
            if let Some(key) = message
                .strip_prefix("duplicate key `")
                .and_then(|rest| rest.split_once('`'))
                .map(|(k, _)| k.to_string())
            {
                return Err(TemplateError::DuplicateKey {
                    key,
                    line: e.line(),
                    column: e.column(),
                });
            }
            let message = message
                .rsplit_once(" at line ")
                .map(|(m, _)| m.to_string())
                .unwrap_or(message);
            Err(TemplateError::Parse {
                line: e.line(),
                column: e.column(),
                message,
            })
        }
    }
}

struct JsonNode(Value);

impl<'de> Deserialize<'de> for JsonNode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(JsonVisitor)
    }
}

struct JsonVisitor;

impl<'de> Visitor<'de> for JsonVisitor {
    type Value = JsonNode;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a JSON value")
    }

    fn visit_unit<E>(self) -> Result<JsonNode, E> {
        Ok(JsonNode(Value::Null))
    }

    fn visit_bool<E>(self, v: bool) -> Result<JsonNode, E> {
        Ok(JsonNode(Value::Bool(v)))
    }

    fn visit_i64<E>(self, v: i64) -> Result<JsonNode, E> {
        Ok(JsonNode(Value::Number(v.into())))
    }

    fn visit_u64<E>(self, v: u64) -> Result<JsonNode, E> {
        Ok(JsonNode(Value::Number(v.into())))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<JsonNode, E> {
        serde_json::Number::from_f64(v)
            .map(|n| JsonNode(Value::Number(n)))
            .ok_or_else(|| E::custom("non-finite number"))
    }

    fn visit_str<E>(self, v: &str) -> Result<JsonNode, E> {
        Ok(JsonNode(Value::String(v.to_string())))
    }

    fn visit_string<E>(self, v: String) -> Result<JsonNode, E> {
        Ok(JsonNode(Value::String(v)))
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<JsonNode, A::Error> {
        let mut items = Vec::new();
        while let Some(JsonNode(v)) = seq.next_element()? {
            items.push(v);
        }
        Ok(JsonNode(Value::Sequence(items)))
    }

    fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<JsonNode, A::Error> {
        let mut map = IndexMap::new();
        while let Some(key) = access.next_key::<String>()? {
            if map.contains_key(&key) {
                return Err(de::Error::custom(format!("duplicate key `{key}`")));
            }
            let JsonNode(v) = access.next_value()?;
            map.insert(key, v);
        }
        Ok(JsonNode(normalize_long_form(map)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_forms_normalize() {
        let v = parse_yaml("a: !Ref MyBucket\nb: !GetAtt Role.Arn\nc: !Select [0, !GetAZs '']\n").unwrap();
        assert_eq!(v.get("a"), Some(&Value::intrinsic("Ref", Value::string("MyBucket"))));
        assert_eq!(
            v.get("b"),
            Some(&Value::intrinsic(
                "Fn::GetAtt",
                Value::Sequence(vec!["Role".into(), "Arn".into()])
            ))
        );
        let select = v.get("c").unwrap().as_intrinsic().unwrap();
        assert_eq!(select.name, "Fn::Select");
        let args = select.argument.as_sequence().unwrap();
        assert_eq!(args[0], Value::Number(0.into()));
        assert_eq!(args[1], Value::intrinsic("Fn::GetAZs", Value::string("")));
    }

    #[test]
    fn long_forms_match_short_forms() {
        let short = parse_yaml("x: !Sub '${AWS::Region}-app'\ny: !GetAtt A.B.C\n").unwrap();
        let long = parse_yaml("x:\n  Fn::Sub: '${AWS::Region}-app'\ny:\n  Fn::GetAtt: [A, B.C]\n").unwrap();
        assert_eq!(short, long);
        let json = parse_json(r#"{"x": {"Fn::Sub": "${AWS::Region}-app"}, "y": {"Fn::GetAtt": "A.B.C"}}"#).unwrap();
        assert_eq!(short, json);
    }

    #[test]
    fn yaml_duplicate_key_reports_position() {
        let err = parse_yaml("a: 1\nb:\n  c: 1\n  c: 2\n").unwrap_err();
        assert_eq!(
            err,
            TemplateError::DuplicateKey {
                key: "c".into(),
                line: 4,
                column: 3
            }
        );
    }

    #[test]
    fn json_duplicate_key() {
        let err = parse_json("{\n \"a\": 1,\n \"a\": 2\n}").unwrap_err();
        assert!(matches!(err, TemplateError::DuplicateKey { ref key, line: 3, .. } if key == "a"), "{err:?}");
    }

    #[test]
    fn scalars_resolve() {
        let v = parse_yaml("a: 10\nb: '10'\nc: 10.0.0.0/16\nd: true\ne: ~\nf: 0777\ng: 2010-09-09\n").unwrap();
        assert_eq!(v.get("a"), Some(&Value::Number(10.into())));
        assert_eq!(v.get("b"), Some(&Value::string("10")));
        assert_eq!(v.get("c"), Some(&Value::string("10.0.0.0/16")));
        assert_eq!(v.get("d"), Some(&Value::Bool(true)));
        assert_eq!(v.get("e"), Some(&Value::Null));
        assert_eq!(v.get("f"), Some(&Value::string("0777")));
        assert_eq!(v.get("g"), Some(&Value::string("2010-09-09")));
    }

    #[test]
    fn unknown_tag_is_preserved() {
        let v = parse_yaml("a: !Length [1, 2]\n").unwrap();
        assert_eq!(v.get("a").unwrap().as_intrinsic().unwrap().name, "Fn::Length");
    }

    #[test]
    fn malformed_yaml_has_position() {
        let err = parse_yaml("a: [1, 2\nb: 3\n").unwrap_err();
        assert!(matches!(err, TemplateError::Parse { line, .. } if line >= 1), "{err:?}");
    }

    #[test]
    fn aliases_expand() {
        let v = parse_yaml("a: &x {k: v}\nb: *x\n").unwrap();
        assert_eq!(v.get("a"), v.get("b"));
    }
}
