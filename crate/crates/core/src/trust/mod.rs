//! Intent coverage and policy-as-code security scanning.

mod intent;
mod policy;

use crate::template::Value;

pub use intent::{
    eval_intent, intent_coverage, Expectation, IntentCoverage, IntentError, IntentResult, IntentSpec, RequiredAttribute,
    RequiredResource,
};
pub use policy::{
    compliance_rates, scan_security, ComplianceRates, PolicyCheck, PolicyError, PolicyRule, PolicyScan, PolicySet,
    Predicate, Severity,
};

/// Values reached by following a `/`-separated property path. Sequences met
/// along the way fan out to every element.
pub(crate) fn leaves<'a>(root: &'a Value, path: &str) -> Vec<&'a Value> {
    let mut current = vec![root];
    for segment in path.split('/').filter(|s| !s.is_empty()) {
        let mut next = Vec::new();
        for v in current {
            match v {
                Value::Sequence(items) => next.extend(items.iter().filter_map(|i| i.get(segment))),
                other => next.extend(other.get(segment)),
            }
        }
        current = next;
    }
    current.into_iter().filter(|v| !matches!(v, Value::Null)).collect()
}

/// Scalar text of a non-intrinsic leaf.
pub(crate) fn literal_text(v: &Value) -> Option<String> {
    match v {
        Value::Intrinsic(_) | Value::Map(_) | Value::Sequence(_) => None,
        other => other.scalar_text(),
    }
}

/// Deserializes YAML through the JSON data model so enums can be written as
/// single-key maps (`{present: Path}`) instead of YAML tags.
pub(crate) fn from_yaml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, String> {
    let raw: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| e.to_string())?;
    let json = serde_json::to_value(&raw).map_err(|e| e.to_string())?;
    serde_json::from_value(json).map_err(|e| e.to_string())
}

pub(crate) fn yaml_scalar_text(v: &serde_yaml::Value) -> Option<String> {
    match v {
        serde_yaml::Value::String(s) => Some(s.clone()),
        serde_yaml::Value::Bool(b) => Some(b.to_string()),
        serde_yaml::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}
