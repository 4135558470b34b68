//! Parsed CloudFormation templates.

mod extract;
mod graph;
mod metrics;
mod parse;
mod value;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use extract::{extract_code_block, ExtractError};
pub use graph::{dependency_graph, references_of, sub_placeholders, CycleError, DependencyGraph};
pub use metrics::{classify_difficulty, measure, DifficultyLevel, TemplateMetrics};
pub use parse::{parse_json, parse_yaml};
pub use value::{is_supported_intrinsic, long_name_for_tag, Intrinsic, Value, SUPPORTED_INTRINSICS};

/// Top-level keys CloudFormation accepts.
pub const ALLOWED_SECTIONS: &[&str] = &[
    "AWSTemplateFormatVersion",
    "Description",
    "Metadata",
    "Parameters",
    "Rules",
    "Mappings",
    "Conditions",
    "Transform",
    "Resources",
    "Outputs",
];

/// Keys allowed directly under a resource entry.
pub const RESOURCE_ATTRIBUTES: &[&str] = &[
    "Type",
    "Properties",
    "DependsOn",
    "Condition",
    "DeletionPolicy",
    "UpdateReplacePolicy",
    "Metadata",
    "CreationPolicy",
    "UpdatePolicy",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("template text is empty")]
    Empty,
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("line {line}, column {column}: duplicate key `{key}`")]
    DuplicateKey { key: String, line: usize, column: usize },
    #[error("{path}: {message}")]
    Structure { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Yaml,
    Json,
}

impl SourceFormat {
    /// Guess from a file name, falling back to content sniffing.
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "json" => Some(SourceFormat::Json),
            "yaml" | "yml" | "template" => Some(SourceFormat::Yaml),
            _ => None,
        }
    }

    pub fn sniff(text: &str) -> Self {
        if text.trim_start().starts_with('{') {
            SourceFormat::Json
        } else {
            SourceFormat::Yaml
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDef {
    pub param_type: String,
    pub default: Option<Value>,
    pub allowed_values: Option<Vec<Value>>,
    pub no_echo: bool,
    /// Remaining keys (Description, MinLength, ConstraintDescription, ...).
    pub extra: IndexMap<String, Value>,
}

impl ParameterDef {
    /// True when a default is declared and it is not one of the allowed values.
    pub fn default_outside_allowed(&self) -> bool {
        match (&self.default, &self.allowed_values) {
            (Some(d), Some(allowed)) => {
                let d = d.scalar_text();
                !allowed.iter().any(|a| a.scalar_text() == d)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceDef {
    pub resource_type: String,
    pub properties: IndexMap<String, Value>,
    pub depends_on: Vec<String>,
    pub condition: Option<String>,
    /// Other resource-level keys, including unknown ones (flagged by the syntax stage).
    pub attributes: IndexMap<String, Value>,
}

impl ResourceDef {
    /// `AWS::Service::Type` with three non-empty segments.
    pub fn has_conventional_type(&self) -> bool {
        let parts: Vec<&str> = self.resource_type.split("::").collect();
        parts.len() == 3 && parts.iter().all(|p| !p.is_empty())
    }
}

#[derive(Debug, Clone)]
pub struct Template {
    pub format_version: Option<String>,
    pub description: Option<String>,
    pub metadata: Option<Value>,
    pub parameters: IndexMap<String, ParameterDef>,
    pub rules: Option<Value>,
    pub mappings: IndexMap<String, Value>,
    pub conditions: IndexMap<String, Value>,
    pub transform: Option<Value>,
    pub resources: IndexMap<String, ResourceDef>,
    pub outputs: IndexMap<String, Value>,
    /// Top-level keys outside [`ALLOWED_SECTIONS`], kept in document order.
    pub unknown_sections: IndexMap<String, Value>,
    pub source_text: String,
    pub source_format: SourceFormat,
}

impl Template {
    /// Equality ignoring the source text and format.
    pub fn structurally_eq(&self, other: &Template) -> bool {
        self.to_value() == other.to_value()
    }

    /// Whole document as a value tree with long-form intrinsics.
    pub fn to_value(&self) -> Value {
        let mut root = IndexMap::new();
        if let Some(v) = &self.format_version {
            root.insert("AWSTemplateFormatVersion".into(), Value::string(v.clone()));
        }
        if let Some(d) = &self.description {
            root.insert("Description".into(), Value::string(d.clone()));
        }
        if let Some(m) = &self.metadata {
            root.insert("Metadata".into(), m.clone());
        }
        if let Some(t) = &self.transform {
            root.insert("Transform".into(), t.clone());
        }
        if !self.parameters.is_empty() {
            let params = self
                .parameters
                .iter()
                .map(|(name, p)| {
                    let mut m = IndexMap::new();
                    m.insert("Type".to_string(), Value::string(p.param_type.clone()));
                    if let Some(d) = &p.default {
                        m.insert("Default".into(), d.clone());
                    }
                    if let Some(a) = &p.allowed_values {
                        m.insert("AllowedValues".into(), Value::Sequence(a.clone()));
                    }
                    if p.no_echo {
                        m.insert("NoEcho".into(), Value::Bool(true));
                    }
                    for (k, v) in &p.extra {
                        m.insert(k.clone(), v.clone());
                    }
                    (name.clone(), Value::Map(m))
                })
                .collect();
            root.insert("Parameters".into(), Value::Map(params));
        }
        if let Some(r) = &self.rules {
            root.insert("Rules".into(), r.clone());
        }
        if !self.mappings.is_empty() {
            root.insert("Mappings".into(), Value::Map(self.mappings.clone()));
        }
        if !self.conditions.is_empty() {
            root.insert("Conditions".into(), Value::Map(self.conditions.clone()));
        }
        let resources = self
            .resources
            .iter()
            .map(|(id, r)| {
                let mut m = IndexMap::new();
                m.insert("Type".to_string(), Value::string(r.resource_type.clone()));
                if !r.properties.is_empty() {
                    m.insert("Properties".into(), Value::Map(r.properties.clone()));
                }
                if !r.depends_on.is_empty() {
                    m.insert(
                        "DependsOn".into(),
                        Value::Sequence(r.depends_on.iter().map(|d| Value::string(d.clone())).collect()),
                    );
                }
                if let Some(c) = &r.condition {
                    m.insert("Condition".into(), Value::string(c.clone()));
                }
                for (k, v) in &r.attributes {
                    m.insert(k.clone(), v.clone());
                }
                (id.clone(), Value::Map(m))
            })
            .collect();
        root.insert("Resources".into(), Value::Map(resources));
        if !self.outputs.is_empty() {
            root.insert("Outputs".into(), Value::Map(self.outputs.clone()));
        }
        for (k, v) in &self.unknown_sections {
            root.insert(k.clone(), v.clone());
        }
        Value::Map(root)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("template values always serialize")
    }

    /// Every name a `Ref` may target: parameters and resources.
    pub fn is_declared(&self, name: &str) -> bool {
        self.parameters.contains_key(name) || self.resources.contains_key(name)
    }
}

/// Parses YAML (short-form tags allowed) or JSON into a [`Template`].
pub fn parse_template(text: &str, format_hint: Option<SourceFormat>) -> Result<Template, TemplateError> {
    if text.trim().is_empty() {
        return Err(TemplateError::Empty);
    }
    let format = format_hint.unwrap_or_else(|| SourceFormat::sniff(text));
    let root = match format {
        SourceFormat::Yaml => parse_yaml(text)?,
        SourceFormat::Json => parse_json(text)?,
    };
    template_from_value(root, text, format)
}

fn structure(path: &str, message: impl Into<String>) -> TemplateError {
    TemplateError::Structure {
        path: path.to_string(),
        message: message.into(),
    }
}

fn expect_map(value: Value, path: &str) -> Result<IndexMap<String, Value>, TemplateError> {
    match value {
        Value::Map(m) => Ok(m),
        Value::Null => Ok(IndexMap::new()),
        _ => Err(structure(path, "expected a mapping")),
    }
}

fn template_from_value(root: Value, text: &str, format: SourceFormat) -> Result<Template, TemplateError> {
    let root = match root {
        Value::Map(m) => m,
        _ => return Err(structure("", "template root must be a mapping")),
    };
    let mut t = Template {
        format_version: None,
        description: None,
        metadata: None,
        parameters: IndexMap::new(),
        rules: None,
        mappings: IndexMap::new(),
        conditions: IndexMap::new(),
        transform: None,
        resources: IndexMap::new(),
        outputs: IndexMap::new(),
        unknown_sections: IndexMap::new(),
        source_text: text.to_string(),
        source_format: format,
    };
    for (key, value) in root {
        match key.as_str() {
            "AWSTemplateFormatVersion" => t.format_version = value.scalar_text(),
            "Description" => t.description = value.scalar_text(),
            "Metadata" => t.metadata = Some(value),
            "Rules" => t.rules = Some(value),
            "Transform" => t.transform = Some(value),
            "Mappings" => t.mappings = expect_map(value, "Mappings")?,
            "Conditions" => t.conditions = expect_map(value, "Conditions")?,
            "Outputs" => t.outputs = expect_map(value, "Outputs")?,
            "Parameters" => {
                for (name, def) in expect_map(value, "Parameters")? {
                    let path = format!("Parameters/{name}");
                    let def = parameter_from_value(def, &path)?;
                    t.parameters.insert(name, def);
                }
            }
            "Resources" => {
                for (id, def) in expect_map(value, "Resources")? {
                    let path = format!("Resources/{id}");
                    let def = resource_from_value(def, &path)?;
                    t.resources.insert(id, def);
                }
            }
            _ => {
                t.unknown_sections.insert(key, value);
            }
        }
    }
    Ok(t)
}

fn parameter_from_value(value: Value, path: &str) -> Result<ParameterDef, TemplateError> {
    let mut map = expect_map(value, path)?;
    let param_type = match map.shift_remove("Type") {
        Some(v) => v
            .scalar_text()
            .ok_or_else(|| structure(&format!("{path}/Type"), "expected a string"))?,
        None => return Err(structure(path, "'Type' is a required property")),
    };
    let default = map.shift_remove("Default");
    let allowed_values = match map.shift_remove("AllowedValues") {
        Some(Value::Sequence(items)) => Some(items),
        Some(_) => return Err(structure(&format!("{path}/AllowedValues"), "expected a list")),
        None => None,
    };
    let no_echo = map
        .shift_remove("NoEcho")
        .and_then(|v| v.as_bool())
        .unwrap_or(false);
    Ok(ParameterDef {
        param_type,
        default,
        allowed_values,
        no_echo,
        extra: map,
    })
}

fn resource_from_value(value: Value, path: &str) -> Result<ResourceDef, TemplateError> {
    let mut map = match value {
        Value::Map(m) => m,
        _ => return Err(structure(path, "resource definition must be a mapping")),
    };
    let resource_type = match map.shift_remove("Type") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(structure(&format!("{path}/Type"), "expected a string")),
        None => return Err(structure(path, "'Type' is a required property")),
    };
    let properties = match map.shift_remove("Properties") {
        Some(v) => expect_map(v, &format!("{path}/Properties"))?,
        None => IndexMap::new(),
    };
    let depends_on = match map.shift_remove("DependsOn") {
        None => Vec::new(),
        Some(Value::String(s)) => vec![s],
        Some(Value::Sequence(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                _ => Err(structure(&format!("{path}/DependsOn"), "expected logical ids")),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(structure(&format!("{path}/DependsOn"), "expected a string or list")),
    };
    let condition = match map.shift_remove("Condition") {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(structure(&format!("{path}/Condition"), "expected a condition name")),
    };
    Ok(ResourceDef {
        resource_type,
        properties,
        depends_on,
        condition,
        attributes: map,
    })
}
