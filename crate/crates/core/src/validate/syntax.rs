//! Template-level checks against the resource spec, in the style of cfn-lint.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::spec::{PropertySpec, ResourceSpec};
use super::{Stage, StageReport, Violation};
use crate::template::{
    is_supported_intrinsic, sub_placeholders, Template, TemplateError, Value, RESOURCE_ATTRIBUTES,
};

/// Names `Ref` and `Fn::Sub` accept without a declaration.
pub const PSEUDO_PARAMETERS: &[&str] = &[
    "AWS::Region",
    "AWS::AccountId",
    "AWS::StackName",
    "AWS::StackId",
    "AWS::NoValue",
    "AWS::Partition",
    "AWS::URLSuffix",
    "AWS::NotificationARNs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntaxRule {
    AdditionalProperty,
    MissingRequired,
    UnknownResourceType,
    NullSub,
    BadRefTarget,
    UnknownSection,
    UnsupportedFeature,
    /// The document parsed as YAML/JSON but is not shaped like a template.
    InvalidStructure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxViolation {
    pub path: String,
    pub rule_id: SyntaxRule,
    pub message: String,
}

pub(crate) const NULL_SUB_MESSAGE: &str = "'Fn::Sub' isn't needed because there are no variables";

fn additional_property(prop: &str) -> String {
    format!("Additional properties are not allowed ('{prop}' was unexpected)")
}

struct Checker<'a> {
    template: &'a Template,
    spec: &'a ResourceSpec,
    out: Vec<SyntaxViolation>,
}

impl Checker<'_> {
    fn push(&mut self, path: impl Into<String>, rule_id: SyntaxRule, message: impl Into<String>) {
        self.out.push(SyntaxViolation {
            path: path.into(),
            rule_id,
            message: message.into(),
        });
    }

    fn is_ref_target(&self, name: &str) -> bool {
        self.template.is_declared(name) || PSEUDO_PARAMETERS.contains(&name)
    }

    fn check_sections(&mut self) {
        if self.template.transform.is_some() {
            self.push(
                "Transform",
                SyntaxRule::UnsupportedFeature,
                "Transform is not supported by the deployment simulator",
            );
        }
        let names: Vec<String> = self.template.unknown_sections.keys().cloned().collect();
        for name in names {
            self.push(
                name.clone(),
                SyntaxRule::UnknownSection,
                format!("Top level template section {name} is not valid"),
            );
        }
    }

    fn check_resources(&mut self) {
        let template = self.template;
        for (id, res) in &template.resources {
            let base = format!("Resources/{id}");
            for key in res.attributes.keys() {
                if !RESOURCE_ATTRIBUTES.contains(&key.as_str()) {
                    self.push(format!("{base}/{key}"), SyntaxRule::AdditionalProperty, additional_property(key));
                }
            }
            for dep in &res.depends_on {
                if !template.resources.contains_key(dep) {
                    self.push(
                        format!("{base}/DependsOn"),
                        SyntaxRule::BadRefTarget,
                        format!("DependsOn {dep} does not match a resource"),
                    );
                }
            }
            if let Some(cond) = &res.condition {
                if !template.conditions.contains_key(cond) {
                    self.push(
                        format!("{base}/Condition"),
                        SyntaxRule::BadRefTarget,
                        format!("Condition {cond} is not defined"),
                    );
                }
            }

            let ty = res.resource_type.as_str();
            if ty == "AWS::CloudFormation::Stack" {
                self.push(
                    format!("{base}/Type"),
                    SyntaxRule::UnsupportedFeature,
                    "Nested stacks are not supported by the deployment simulator",
                );
            } else if ty.starts_with("Custom::") || ty == "AWS::CloudFormation::CustomResource" {
                self.push(
                    format!("{base}/Type"),
                    SyntaxRule::UnsupportedFeature,
                    "Custom resources are not supported by the deployment simulator",
                );
            } else if let Some(type_spec) = self.spec.resource_type(ty) {
                let props_path = format!("{base}/Properties");
                self.check_properties(&props_path, ty, &res.properties, &type_spec.properties);
            } else {
                self.push(
                    format!("{base}/Type"),
                    SyntaxRule::UnknownResourceType,
                    format!("Resource type '{ty}' does not exist in 'us-east-1'"),
                );
            }

            for (key, value) in &res.properties {
                self.check_intrinsics(&format!("{base}/Properties/{key}"), value);
            }
            for (key, value) in &res.attributes {
                self.check_intrinsics(&format!("{base}/{key}"), value);
            }
        }
    }

    fn check_properties(
        &mut self,
        path: &str,
        owner: &str,
        given: &IndexMap<String, Value>,
        allowed: &IndexMap<String, PropertySpec>,
    ) {
        for (name, value) in given {
            let Some(prop) = allowed.get(name) else {
                self.push(format!("{path}/{name}"), SyntaxRule::AdditionalProperty, additional_property(name));
                continue;
            };
            let Some(nested) = prop.nested_type() else {
                continue;
            };
            let Some(nested_props) = self.spec.nested_properties(owner, nested) else {
                continue;
            };
            let nested_owner = self.spec.nested_owner(owner, nested);
            let item_path = format!("{path}/{name}");
            match (prop.type_name.as_deref(), value) {
                (Some("List"), Value::Sequence(items)) => {
                    for (i, item) in items.iter().enumerate() {
                        if let Value::Map(m) = item {
                            self.check_properties(&format!("{item_path}/{i}"), &nested_owner, m, nested_props);
                        }
                    }
                }
                (Some("Map"), Value::Map(entries)) => {
                    for (k, item) in entries {
                        if let Value::Map(m) = item {
                            self.check_properties(&format!("{item_path}/{k}"), &nested_owner, m, nested_props);
                        }
                    }
                }
                (Some("List") | Some("Map"), _) => {}
                (_, Value::Map(m)) => self.check_properties(&item_path, &nested_owner, m, nested_props),
                _ => {}
            }
        }
        for (name, prop) in allowed {
            if prop.required && !given.contains_key(name) {
                self.push(path, SyntaxRule::MissingRequired, format!("'{name}' is a required property"));
            }
        }
    }

    fn check_intrinsics(&mut self, path: &str, value: &Value) {
        let mut found: Vec<(String, &Value)> = Vec::new();
        value.walk(path, &mut |p, v| {
            if matches!(v, Value::Intrinsic(_)) {
                found.push((p.to_string(), v));
            }
        });
        for (p, v) in found {
            if let Value::Intrinsic(i) = v {
                self.check_intrinsic(&p, &i.name, &i.argument);
            }
        }
    }

    fn check_intrinsic(&mut self, path: &str, name: &str, arg: &Value) {
        if !is_supported_intrinsic(name) {
            self.push(
                path,
                SyntaxRule::UnsupportedFeature,
                format!("Intrinsic function {name} is not supported"),
            );
            return;
        }
        match name {
            "Ref" => {
                if let Value::String(target) = arg {
                    if !self.is_ref_target(target) {
                        self.push(
                            path,
                            SyntaxRule::BadRefTarget,
                            format!("Ref {target} not found as a resource or parameter"),
                        );
                    }
                }
            }
            "Fn::GetAtt" => self.check_get_att(path, arg),
            "Fn::Sub" => self.check_sub(path, arg),
            "Condition" => {
                if let Value::String(c) = arg {
                    self.check_condition_name(path, c);
                }
            }
            "Fn::If" => {
                if let Some(Value::String(c)) = arg.as_sequence().and_then(|s| s.first()) {
                    self.check_condition_name(path, c);
                }
            }
            "Fn::FindInMap" => {
                if let Some(Value::String(map)) = arg.as_sequence().and_then(|s| s.first()) {
                    if !self.template.mappings.contains_key(map) {
                        self.push(path, SyntaxRule::BadRefTarget, format!("Mapping {map} is not defined"));
                    }
                }
            }
            _ => {}
        }
    }

    fn check_condition_name(&mut self, path: &str, name: &str) {
        if !self.template.conditions.contains_key(name) {
            self.push(path, SyntaxRule::BadRefTarget, format!("Condition {name} is not defined"));
        }
    }

    fn check_get_att(&mut self, path: &str, arg: &Value) {
        let Some(parts) = arg.as_sequence() else {
            return;
        };
        let (Some(Value::String(target)), Some(attr)) = (parts.first(), parts.get(1)) else {
            return;
        };
        let Some(res) = self.template.resources.get(target) else {
            self.push(
                path,
                SyntaxRule::BadRefTarget,
                format!("GetAtt to resource {target} that does not exist"),
            );
            return;
        };
        let Value::String(attr) = attr else {
            return;
        };
        if let Some(type_spec) = self.spec.resource_type(&res.resource_type) {
            if !type_spec.attributes.contains_key(attr) {
                self.push(
                    path,
                    SyntaxRule::BadRefTarget,
                    format!("Invalid GetAtt {target}.{attr} for resource {target}"),
                );
            }
        }
    }

    fn check_sub(&mut self, path: &str, arg: &Value) {
        let (text, vars) = match arg {
            Value::String(s) => (s.as_str(), None),
            Value::Sequence(items) => match items.first() {
                Some(Value::String(s)) => (s.as_str(), items.get(1).and_then(Value::as_map)),
                _ => return,
            },
            _ => return,
        };
        let placeholders = sub_placeholders(text);
        if placeholders.is_empty() && vars.is_none_or(|m| m.is_empty()) {
            self.push(path, SyntaxRule::NullSub, NULL_SUB_MESSAGE);
            return;
        }
        for placeholder in placeholders {
            let (head, attr) = match placeholder.split_once('.') {
                Some((h, a)) => (h, Some(a)),
                None => (placeholder.as_str(), None),
            };
            if vars.is_some_and(|m| m.contains_key(head)) {
                continue;
            }
            let ok = match attr {
                Some(_) => self.template.resources.contains_key(head),
                None => self.is_ref_target(head),
            };
            if !ok {
                self.push(
                    path,
                    SyntaxRule::BadRefTarget,
                    format!("Sub variable {placeholder} does not match a parameter, resource, or pseudo-parameter"),
                );
            }
        }
    }

    fn check_conditions_and_outputs(&mut self) {
        let template = self.template;
        for (name, value) in &template.conditions {
            self.check_intrinsics(&format!("Conditions/{name}"), value);
        }
        for (name, value) in &template.outputs {
            self.check_intrinsics(&format!("Outputs/{name}"), value);
        }
    }
}

/// Runs the syntax stage. Violations come out in a fixed order: top-level
/// sections, conditions, resources in declaration order, then outputs.
pub fn check_syntax(template: &Template, spec: &ResourceSpec) -> StageReport {
    let mut checker = Checker {
        template,
        spec,
        out: Vec::new(),
    };
    checker.check_sections();
    let sections = std::mem::take(&mut checker.out);
    checker.check_resources();
    let resources = std::mem::take(&mut checker.out);
    checker.check_conditions_and_outputs();
    let rest = std::mem::take(&mut checker.out);

    let (conditions, outputs): (Vec<_>, Vec<_>) = rest.into_iter().partition(|v| v.path.starts_with("Conditions/"));
    let violations = sections
        .into_iter()
        .chain(conditions)
        .chain(resources)
        .chain(outputs)
        .map(Violation::Syntax)
        .collect();
    StageReport::new(Stage::Syntax, violations)
}

/// Syntax-stage report for text that passed the format stage but could not be
/// read as a template.
pub fn syntax_report_for_parse_error(err: &TemplateError) -> StageReport {
    let violation = match err {
        TemplateError::Structure { path, message } if message.ends_with("is a required property") => SyntaxViolation {
            path: path.clone(),
            rule_id: SyntaxRule::MissingRequired,
            message: message.clone(),
        },
        TemplateError::Structure { path, message } => SyntaxViolation {
            path: path.clone(),
            rule_id: SyntaxRule::InvalidStructure,
            message: message.clone(),
        },
        other => SyntaxViolation {
            path: String::new(),
            rule_id: SyntaxRule::InvalidStructure,
            message: other.to_string(),
        },
    };
    StageReport::new(Stage::Syntax, vec![Violation::Syntax(violation)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::parse_template;

    fn check(text: &str) -> Vec<(String, SyntaxRule, String)> {
        let t = parse_template(text, None).unwrap();
        check_syntax(&t, ResourceSpec::bundled())
            .violations
            .into_iter()
            .map(|v| match v {
                Violation::Syntax(s) => (s.path, s.rule_id, s.message),
                _ => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn misspelled_bucket_property() {
        let got = check("Resources:\n  B:\n    Type: AWS::S3::Bucket\n    Properties:\n      BucketNam: x\n");
        assert_eq!(
            got,
            [(
                "Resources/B/Properties/BucketNam".to_string(),
                SyntaxRule::AdditionalProperty,
                "Additional properties are not allowed ('BucketNam' was unexpected)".to_string()
            )]
        );
    }

    #[test]
    fn user_data_sub_without_variables() {
        let text = "Resources:\n  I:\n    Type: AWS::EC2::Instance\n    Properties:\n      ImageId: ami-123\n      UserData:\n        Fn::Base64: !Sub |\n          #!/bin/bash\n          yum install -y httpd\n";
        let got = check(text);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].1, SyntaxRule::NullSub);
        assert_eq!(got[0].2, "'Fn::Sub' isn't needed because there are no variables");
        assert_eq!(got[0].0, "Resources/I/Properties/UserData/Fn::Base64");
    }

    #[test]
    fn list_form_sub_with_empty_map() {
        let got = check("Resources:\n  T:\n    Type: AWS::SNS::Topic\n    Properties:\n      TopicName: !Sub ['plain', {}]\n");
        assert_eq!(got[0].1, SyntaxRule::NullSub);
        let ok = check("Resources:\n  T:\n    Type: AWS::SNS::Topic\n    Properties:\n      TopicName: !Sub ['${X}', {X: a}]\n");
        assert!(ok.is_empty(), "{ok:?}");
    }

    #[test]
    fn sns_topic_and_subscription_pass() {
        let text = "Parameters:\n  Email:\n    Type: String\nResources:\n  Topic:\n    Type: AWS::SNS::Topic\n  Sub:\n    Type: AWS::SNS::Subscription\n    Properties:\n      Endpoint: !Ref Email\n      Protocol: email\n      TopicArn: !Ref Topic\nOutputs:\n  Arn:\n    Value: !GetAtt Topic.TopicName\n";
        assert!(check(text).is_empty());
    }

    #[test]
    fn missing_required_and_unknown_type() {
        let got = check("Resources:\n  S:\n    Type: AWS::SNS::Subscription\n    Properties:\n      TopicArn: x\n  Q:\n    Type: AWS::Foo::Bar\n");
        assert_eq!(got[0], ("Resources/S/Properties".into(), SyntaxRule::MissingRequired, "'Protocol' is a required property".into()));
        assert_eq!(got[1].1, SyntaxRule::UnknownResourceType);
    }

    #[test]
    fn bad_refs() {
        let got = check("Resources:\n  T:\n    Type: AWS::SNS::Topic\n    Properties:\n      TopicName: !Ref Nope\n      DisplayName: !GetAtt T.Bogus\n      KmsMasterKeyId: !Sub '${Missing}-${AWS::Region}'\n");
        let rules: Vec<SyntaxRule> = got.iter().map(|g| g.1).collect();
        assert_eq!(rules, [SyntaxRule::BadRefTarget; 3]);
        assert_eq!(got[0].2, "Ref Nope not found as a resource or parameter");
    }

    #[test]
    fn pseudo_parameters_are_valid_refs() {
        for p in PSEUDO_PARAMETERS {
            let text = format!("Resources:\n  T:\n    Type: AWS::SNS::Topic\n    Properties:\n      TopicName: !Ref {p}\n");
            assert!(check(&text).is_empty(), "{p}");
        }
    }

    #[test]
    fn sections_and_unsupported() {
        let got = check("Transform: AWS::Serverless-2016-10-31\nResource:\n  x: 1\nResources:\n  T:\n    Type: AWS::SNS::Topic\n    Properties:\n      TopicName: !Length [1]\n");
        let rules: Vec<SyntaxRule> = got.iter().map(|g| g.1).collect();
        assert_eq!(rules, [SyntaxRule::UnsupportedFeature, SyntaxRule::UnknownSection, SyntaxRule::UnsupportedFeature]);
        assert_eq!(got[1].2, "Top level template section Resource is not valid");
    }

    #[test]
    fn nested_shapes_checked() {
        let got = check("Resources:\n  T:\n    Type: AWS::SNS::Topic\n    Properties:\n      Subscription:\n        - Endpoint: a@b.c\n          Protocl: email\n      Tags:\n        - Key: k\n          Value: v\n");
        let rules: Vec<SyntaxRule> = got.iter().map(|g| g.1).collect();
        assert_eq!(rules, [SyntaxRule::AdditionalProperty, SyntaxRule::MissingRequired]);
        assert_eq!(got[0].0, "Resources/T/Properties/Subscription/0/Protocl");
    }

    #[test]
    fn unknown_resource_attribute() {
        let got = check("Resources:\n  T:\n    Type: AWS::SNS::Topic\n    Propertes:\n      TopicName: x\n");
        assert_eq!(got[0].2, "Additional properties are not allowed ('Propertes' was unexpected)");
    }

    #[test]
    fn structure_error_report() {
        let err = parse_template("Resources:\n  T:\n    Properties: {}\n", None).unwrap_err();
        let report = syntax_report_for_parse_error(&err);
        assert!(!report.passed);
        assert_eq!(report.messages(), ["'Type' is a required property"]);
    }
}
