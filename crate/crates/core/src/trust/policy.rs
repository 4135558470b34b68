use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{from_yaml, leaves, literal_text, yaml_scalar_text};
use crate::bench::MetricError;
use crate::template::{Template, Value};

const BUNDLED_POLICIES: &str = include_str!("../../data/policies/default.yaml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Informational,
    Low,
    Medium,
    High,
}

/// Condition a resource's properties must meet. Paths are `/`-separated and
/// relative to `Properties`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Present(String),
    Absent(String),
    /// Every value at the path is the literal `value` (and there is one).
    Equals { path: String, value: serde_yaml::Value },
    /// Every value at the path is a literal number inside the bounds.
    Range {
        path: String,
        min: Option<f64>,
        max: Option<f64>,
    },
    /// No ingress rule opens `port` to the whole internet.
    NoOpenIngress { port: u16 },
    /// No value at the path is `*`, alone or inside a list.
    NoWildcard(String),
    AnyOf(Vec<Predicate>),
    AllOf(Vec<Predicate>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    pub id: String,
    pub title: String,
    pub severity: Severity,
    pub resource_type: String,
    pub check: Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid policy set: {0}")]
    Invalid(String),
    #[error("duplicate policy id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySet {
    rules: Vec<PolicyRule>,
}

impl PolicySet {
    pub fn new(rules: Vec<PolicyRule>) -> Result<Self, PolicyError> {
        let mut ids = BTreeSet::new();
        for r in &rules {
            if !ids.insert(r.id.as_str()) {
                return Err(PolicyError::DuplicateId(r.id.clone()));
            }
        }
        Ok(PolicySet { rules })
    }

    pub fn from_yaml_str(text: &str) -> Result<Self, PolicyError> {
        let rules: Vec<PolicyRule> = from_yaml(text).map_err(PolicyError::Invalid)?;
        Self::new(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_yaml_str(&text)
    }

    /// The shipped default policy set.
    pub fn bundled() -> &'static PolicySet {
        static SET: OnceLock<PolicySet> = OnceLock::new();
        SET.get_or_init(|| PolicySet::from_yaml_str(BUNDLED_POLICIES).expect("bundled policies are valid"))
    }

    pub fn rules(&self) -> &[PolicyRule] {
        &self.rules
    }
}

fn is_wildcard(v: &Value) -> bool {
    match v {
        Value::Sequence(items) => items.iter().any(is_wildcard),
        other => literal_text(other).as_deref() == Some("*"),
    }
}

fn port_bound(v: Option<&Value>) -> Option<i64> {
    v.and_then(literal_text).and_then(|t| t.trim().parse().ok())
}

fn opens_port(rule: &Value, port: u16) -> bool {
    let text = |k: &str| rule.get(k).and_then(literal_text);
    let open = text("CidrIp").as_deref() == Some("0.0.0.0/0") || text("CidrIpv6").as_deref() == Some("::/0");
    if !open {
        return false;
    }
    match text("IpProtocol").as_deref() {
        Some("-1") | Some("all") => true,
        Some("tcp") | Some("6") | None => {
            let from = port_bound(rule.get("FromPort")).unwrap_or(0);
            let to = port_bound(rule.get("ToPort")).unwrap_or(65535);
            // -1 means every port for the any-protocol form.
            from == -1 || (from <= port as i64 && port as i64 <= to)
        }
        Some(_) => false,
    }
}

fn holds(predicate: &Predicate, resource_type: &str, props: &Value) -> bool {
    match predicate {
        Predicate::Present(path) => !leaves(props, path).is_empty(),
        Predicate::Absent(path) => leaves(props, path).is_empty(),
        Predicate::Equals { path, value } => {
            let found = leaves(props, path);
            let Some(expected) = yaml_scalar_text(value) else {
                return false;
            };
            !found.is_empty() && found.iter().all(|v| literal_text(v).as_deref() == Some(expected.as_str()))
        }
        Predicate::Range { path, min, max } => {
            let found = leaves(props, path);
            !found.is_empty()
                && found.iter().all(|v| {
                    literal_text(v)
                        .and_then(|t| t.trim().parse::<f64>().ok())
                        .is_some_and(|n| min.is_none_or(|m| n >= m) && max.is_none_or(|m| n <= m))
                })
        }
        Predicate::NoOpenIngress { port } => {
            if resource_type == "AWS::EC2::SecurityGroupIngress" {
                !opens_port(props, *port)
            } else {
                !leaves(props, "SecurityGroupIngress")
                    .iter()
                    .flat_map(|v| match v {
                        Value::Sequence(items) => items.iter().collect::<Vec<_>>(),
                        other => vec![*other],
                    })
                    .any(|rule| opens_port(rule, *port))
            }
        }
        Predicate::NoWildcard(path) => !leaves(props, path).into_iter().any(is_wildcard),
        Predicate::AnyOf(ps) => ps.iter().any(|p| holds(p, resource_type, props)),
        Predicate::AllOf(ps) => ps.iter().all(|p| holds(p, resource_type, props)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyCheck {
    pub policy_id: String,
    pub severity: Severity,
    pub applicable: bool,
    /// `None` when the policy is not applicable.
    pub passed: Option<bool>,
    /// First failing resource by logical id.
    pub failing_resource: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PolicyScan {
    pub checks: Vec<PolicyCheck>,
}

impl PolicyScan {
    pub fn applicable(&self) -> impl Iterator<Item = &PolicyCheck> {
        self.checks.iter().filter(|c| c.applicable)
    }

    pub fn failed(&self) -> impl Iterator<Item = &PolicyCheck> {
        self.checks.iter().filter(|c| c.passed == Some(false))
    }

    /// No applicable check failed (vacuously true with none applicable).
    pub fn compliant(&self) -> bool {
        self.failed().next().is_none()
    }
}

pub fn scan_security(template: &Template, policies: &PolicySet) -> PolicyScan {
    let mut ids: Vec<&String> = template.resources.keys().collect();
    ids.sort();
    let checks = policies
        .rules()
        .iter()
        .map(|rule| {
            let matching: Vec<&String> = ids
                .iter()
                .copied()
                .filter(|id| template.resources[*id].resource_type == rule.resource_type)
                .collect();
            let failing = matching.iter().find(|id| {
                let props = Value::Map(template.resources[**id].properties.clone());
                !holds(&rule.check, &rule.resource_type, &props)
            });
            let applicable = !matching.is_empty();
            PolicyCheck {
                policy_id: rule.id.clone(),
                severity: rule.severity,
                applicable,
                passed: applicable.then_some(failing.is_none()),
                failing_resource: failing.map(|s| (*s).clone()),
            }
        })
        .collect();
    PolicyScan { checks }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceRates {
    /// Passed checks over applicable checks; absent when nothing applied.
    pub policy_pass_pct: Option<f64>,
    /// Templates with no failed check, over all templates.
    pub unfiltered_pct: f64,
    /// Same, restricted to templates with at least one applicable check.
    pub filtered_pct: Option<f64>,
}

pub fn compliance_rates(scans: &[PolicyScan]) -> Result<ComplianceRates, MetricError> {
    if scans.is_empty() {
        return Err(MetricError::EmptyRecordSet);
    }
    let applicable: usize = scans.iter().map(|s| s.applicable().count()).sum();
    let passed: usize = scans
        .iter()
        .map(|s| s.checks.iter().filter(|c| c.passed == Some(true)).count())
        .sum();
    let compliant = scans.iter().filter(|s| s.compliant()).count();
    let relevant: Vec<&PolicyScan> = scans.iter().filter(|s| s.applicable().next().is_some()).collect();
    let relevant_compliant = relevant.iter().filter(|s| s.compliant()).count();
    Ok(ComplianceRates {
        policy_pass_pct: (applicable > 0).then(|| 100.0 * passed as f64 / applicable as f64),
        unfiltered_pct: 100.0 * compliant as f64 / scans.len() as f64,
        filtered_pct: (!relevant.is_empty()).then(|| 100.0 * relevant_compliant as f64 / relevant.len() as f64),
    })
}
