use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{from_yaml, leaves, literal_text, yaml_scalar_text};
use crate::bench::MetricError;
use crate::template::{Template, Value};
use crate::validate::ResourceSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequiredResource {
    #[serde(rename = "type")]
    pub resource_type: String,
    #[serde(default = "one")]
    pub min_count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Present,
    Equals(serde_yaml::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequiredAttribute {
    pub resource_type: String,
    /// `/`-separated path below `Properties`.
    pub path: String,
    pub expected: Expectation,
}

/// Declared resources and attributes a generated template must contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentSpec {
    pub task_id: String,
    pub required_resources: Vec<RequiredResource>,
    #[serde(default)]
    pub required_attributes: Vec<RequiredAttribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntentError {
    #[error("invalid intent spec: {0}")]
    Invalid(String),
    #[error("intent spec names unknown resource type {0}")]
    SpecMismatch(String),
}

impl IntentSpec {
    pub fn from_yaml_str(text: &str) -> Result<Self, IntentError> {
        let spec: IntentSpec = from_yaml(text).map_err(IntentError::Invalid)?;
        for attr in &spec.required_attributes {
            if !spec.required_resources.iter().any(|r| r.resource_type == attr.resource_type) {
                return Err(IntentError::Invalid(format!(
                    "attribute {} on {} has no matching required resource",
                    attr.path, attr.resource_type
                )));
            }
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IntentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IntentError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_yaml_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentResult {
    pub resource_ok: bool,
    pub attribute_ok: bool,
    pub both_ok: bool,
}

impl IntentResult {
    pub fn new(resource_ok: bool, attribute_ok: bool) -> Self {
        IntentResult {
            resource_ok,
            attribute_ok,
            both_ok: resource_ok && attribute_ok,
        }
    }
}

fn satisfies(props: &Value, attr: &RequiredAttribute) -> bool {
    let found = leaves(props, &attr.path);
    match &attr.expected {
        Expectation::Present => !found.is_empty(),
        Expectation::Equals(expected) => {
            let Some(expected) = yaml_scalar_text(expected) else {
                return false;
            };
            found.iter().any(|v| literal_text(v).as_deref() == Some(expected.as_str()))
        }
    }
}

pub fn eval_intent(template: &Template, spec: &IntentSpec, resources: &ResourceSpec) -> Result<IntentResult, IntentError> {
    let named = spec
        .required_resources
        .iter()
        .map(|r| &r.resource_type)
        .chain(spec.required_attributes.iter().map(|a| &a.resource_type));
    for ty in named {
        if resources.resource_type(ty).is_none() {
            return Err(IntentError::SpecMismatch(ty.clone()));
        }
    }

    fn of_type<'a>(t: &'a Template, ty: &'a str) -> impl Iterator<Item = &'a crate::template::ResourceDef> {
        t.resources.values().filter(move |r| r.resource_type == ty)
    }
    let resource_ok = spec
        .required_resources
        .iter()
        .all(|req| of_type(template, &req.resource_type).count() >= req.min_count);
    let attribute_ok = spec.required_attributes.iter().all(|attr| {
        of_type(template, &attr.resource_type).any(|r| satisfies(&Value::Map(r.properties.clone()), attr))
    });
    Ok(IntentResult::new(resource_ok, attribute_ok))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentCoverage {
    pub resource_pct: f64,
    pub attribute_pct: f64,
    pub both_pct: f64,
}

pub fn intent_coverage(results: &[IntentResult]) -> Result<IntentCoverage, MetricError> {
    if results.is_empty() {
        return Err(MetricError::EmptyRecordSet);
    }
    let pct = |f: fn(&IntentResult) -> bool| 100.0 * results.iter().filter(|r| f(r)).count() as f64 / results.len() as f64;
    Ok(IntentCoverage {
        resource_pct: pct(|r| r.resource_ok),
        attribute_pct: pct(|r| r.attribute_ok),
        both_pct: pct(|r| r.both_ok),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::parse_template;

    const VERSIONED: &str = "task_id: t\nrequired_resources:\n  - type: AWS::S3::Bucket\nrequired_attributes:\n  - resource_type: AWS::S3::Bucket\n    path: VersioningConfiguration/Status\n    expected: {equals: Enabled}\n";

    fn eval(template: &str, spec: &str) -> Result<IntentResult, IntentError> {
        eval_intent(
            &parse_template(template, None).unwrap(),
            &IntentSpec::from_yaml_str(spec).unwrap(),
            ResourceSpec::bundled(),
        )
    }

    #[test]
    fn bucket_versioning() {
        let with = "Resources:\n  B:\n    Type: AWS::S3::Bucket\n    Properties:\n      VersioningConfiguration:\n        Status: Enabled\n";
        assert_eq!(eval(with, VERSIONED).unwrap(), IntentResult::new(true, true));
        let without = "Resources:\n  B:\n    Type: AWS::S3::Bucket\n";
        assert_eq!(eval(without, VERSIONED).unwrap(), IntentResult::new(true, false));
    }

    #[test]
    fn min_count() {
        let spec = "task_id: t\nrequired_resources:\n  - type: AWS::EC2::Subnet\n    min_count: 2\n";
        let one = "Resources:\n  S:\n    Type: AWS::EC2::Subnet\n    Properties:\n      VpcId: v\n      CidrBlock: 10.0.0.0/24\n";
        assert!(!eval(one, spec).unwrap().resource_ok);
    }

    #[test]
    fn intrinsic_leaf_present_but_not_equal() {
        let spec = "task_id: t\nrequired_resources:\n  - type: AWS::S3::Bucket\nrequired_attributes:\n  - resource_type: AWS::S3::Bucket\n    path: BucketName\n    expected: present\n";
        let t = "Parameters:\n  N:\n    Type: String\n    Default: n\nResources:\n  B:\n    Type: AWS::S3::Bucket\n    Properties:\n      BucketName: !Ref N\n";
        assert!(eval(t, spec).unwrap().attribute_ok);
        let eq = spec.replace("expected: present", "expected: {equals: n}");
        assert!(!eval(t, &eq).unwrap().attribute_ok);
    }

    #[test]
    fn spec_errors() {
        let typo = "task_id: t\nrequired_resources:\n  - type: AWS::S3::Bukket\n";
        assert_eq!(
            eval("Resources:\n  B:\n    Type: AWS::S3::Bucket\n", typo),
            Err(IntentError::SpecMismatch("AWS::S3::Bukket".into()))
        );
        let orphan = "task_id: t\nrequired_resources: []\nrequired_attributes:\n  - resource_type: AWS::S3::Bucket\n    path: X\n    expected: present\n";
        assert!(matches!(IntentSpec::from_yaml_str(orphan), Err(IntentError::Invalid(_))));
    }

    #[test]
    fn coverage_counts() {
        let r = |a, b| IntentResult::new(a, b);
        let c = intent_coverage(&[r(true, true), r(true, false), r(false, false), r(true, true)]).unwrap();
        assert_eq!((c.resource_pct, c.attribute_pct, c.both_pct), (75.0, 50.0, 50.0));
        let all = intent_coverage(&[r(true, true); 3]).unwrap();
        assert_eq!((all.resource_pct, all.attribute_pct, all.both_pct), (100.0, 100.0, 100.0));
        assert_eq!(intent_coverage(&[]), Err(MetricError::EmptyRecordSet));
    }

    #[test]
    fn mixed_eight_hand_tally() {
        // resource flags: T T T F T F T T -> 6/8; attribute flags: T F T T F F T F -> 4/8
        // both: T F T F F F T F -> 3/8
        let flags = [
            (true, true),
            (true, false),
            (true, true),
            (false, true),
            (true, false),
            (false, false),
            (true, true),
            (true, false),
        ];
        let rs: Vec<_> = flags.iter().map(|&(a, b)| IntentResult::new(a, b)).collect();
        let c = intent_coverage(&rs).unwrap();
        assert_eq!((c.resource_pct, c.attribute_pct, c.both_pct), (75.0, 50.0, 37.5));
    }
}
