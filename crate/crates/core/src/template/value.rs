use indexmap::IndexMap;
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

/// Intrinsic function names understood by the syntax checker and the simulator.
pub const SUPPORTED_INTRINSICS: &[&str] = &[
    "Ref",
    "Condition",
    "Fn::Sub",
    "Fn::GetAtt",
    "Fn::Select",
    "Fn::GetAZs",
    "Fn::Join",
    "Fn::Split",
    "Fn::FindInMap",
    "Fn::If",
    "Fn::ImportValue",
    "Fn::Base64",
    "Fn::Cidr",
    "Fn::And",
    "Fn::Or",
    "Fn::Not",
    "Fn::Equals",
];

/// Maps a YAML short-form tag suffix (`Sub` in `!Sub`) to the long-form name.
pub fn long_name_for_tag(suffix: &str) -> String {
    match suffix {
        "Ref" | "Condition" => suffix.to_string(),
        other => format!("Fn::{other}"),
    }
}

pub fn is_supported_intrinsic(name: &str) -> bool {
    SUPPORTED_INTRINSICS.contains(&name)
}

/// A node of a parsed template. Short and long intrinsic forms normalize to
/// the same [`Value::Intrinsic`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Number(serde_json::Number),
    String(String),
    Sequence(Vec<Value>),
    Map(IndexMap<String, Value>),
    Intrinsic(Box<Intrinsic>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intrinsic {
    /// Long-form name, e.g. `Ref`, `Fn::Sub`.
    pub name: String,
    pub argument: Value,
}

impl Value {
    pub fn intrinsic(name: impl Into<String>, argument: Value) -> Self {
        Value::Intrinsic(Box::new(Intrinsic {
            name: name.into(),
            argument,
        }))
    }

    pub fn string(s: impl Into<String>) -> Self {
        Value::String(s.into())
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&IndexMap<String, Value>> {
        match self {
            Value::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_sequence(&self) -> Option<&[Value]> {
        match self {
            Value::Sequence(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_intrinsic(&self) -> Option<&Intrinsic> {
        match self {
            Value::Intrinsic(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::String(s) if s.eq_ignore_ascii_case("true") => Some(true),
            Value::String(s) if s.eq_ignore_ascii_case("false") => Some(false),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
    }

    /// Scalar rendered as text the way CloudFormation stringifies it.
    pub fn scalar_text(&self) -> Option<String> {
        match self {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            Value::Bool(b) => Some(b.to_string()),
            _ => None,
        }
    }

    /// Map lookup by key.
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.as_map().and_then(|m| m.get(key))
    }

    pub fn contains_intrinsic(&self) -> bool {
        match self {
            Value::Intrinsic(_) => true,
            Value::Sequence(items) => items.iter().any(Value::contains_intrinsic),
            Value::Map(m) => m.values().any(Value::contains_intrinsic),
            _ => false,
        }
    }

    /// Depth-first walk over every node with its slash-separated path.
    pub fn walk<'a>(&'a self, path: &str, visit: &mut dyn FnMut(&str, &'a Value)) {
        visit(path, self);
        match self {
            Value::Sequence(items) => {
                for (i, item) in items.iter().enumerate() {
                    item.walk(&format!("{path}/{i}"), visit);
                }
            }
            Value::Map(m) => {
                for (k, v) in m {
                    v.walk(&format!("{path}/{k}"), visit);
                }
            }
            Value::Intrinsic(i) => i.argument.walk(&format!("{path}/{}", i.name), visit),
            _ => {}
        }
    }

    /// Converts to JSON with intrinsics in long form.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("template values always serialize")
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => serializer.serialize_unit(),
            Value::Bool(b) => serializer.serialize_bool(*b),
            Value::Number(n) => n.serialize(serializer),
            Value::String(s) => serializer.serialize_str(s),
            Value::Sequence(items) => {
                let mut seq = serializer.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            Value::Map(m) => {
                let mut map = serializer.serialize_map(Some(m.len()))?;
                for (k, v) in m {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
            Value::Intrinsic(i) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry(&i.name, &i.argument)?;
                map.end()
            }
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::String(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::String(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intrinsic_serializes_long_form() {
        let v = Value::intrinsic("Ref", Value::string("MyBucket"));
        assert_eq!(v.to_json(), serde_json::json!({"Ref": "MyBucket"}));
    }

    #[test]
    fn walk_visits_intrinsic_arguments() {
        let v = Value::Map(IndexMap::from([(
            "A".to_string(),
            Value::intrinsic("Fn::Sub", Value::string("x")),
        )]));
        let mut paths = Vec::new();
        v.walk("Root", &mut |p, _| paths.push(p.to_string()));
        assert_eq!(paths, ["Root", "Root/A", "Root/A/Fn::Sub"]);
    }

    #[test]
    fn tag_names() {
        assert_eq!(long_name_for_tag("Ref"), "Ref");
        assert_eq!(long_name_for_tag("GetAZs"), "Fn::GetAZs");
        assert!(!is_supported_intrinsic("Fn::Length"));
    }
}
