//! Evaluation of intrinsic functions against a resolved stack context.

use std::collections::{BTreeMap, HashMap};
use std::net::Ipv4Addr;

use base64::Engine;
use indexmap::IndexMap;
use serde::Serialize;

use crate::template::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalErrorKind {
    UnknownTarget,
    IndexOutOfRange,
    UnsupportedCrossStack,
    MissingMappingKey,
    /// Argument of the wrong shape, e.g. `Fn::Join` over a map.
    InvalidArgument,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub message: String,
}

impl EvalError {
    fn new(kind: EvalErrorKind, message: impl Into<String>) -> Self {
        EvalError {
            kind,
            message: message.into(),
        }
    }

    fn invalid(function: &str, detail: &str) -> Self {
        EvalError::new(
            EvalErrorKind::InvalidArgument,
            format!("Template error: {function} {detail}"),
        )
    }
}

/// What `Ref` and `Fn::GetAtt` see for a provisioned resource.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedResource {
    pub ref_value: String,
    pub attributes: BTreeMap<String, Value>,
}

/// Everything intrinsic evaluation may consult.
#[derive(Debug, Clone, Default)]
pub struct ResolutionContext {
    pub region: String,
    pub account_id: String,
    pub stack_name: String,
    pub stack_id: String,
    pub az_list: Vec<String>,
    /// Resolved parameter values; list-typed parameters are sequences.
    pub parameters: IndexMap<String, Value>,
    pub resources: HashMap<String, ResolvedResource>,
    pub mappings: IndexMap<String, Value>,
    pub conditions: HashMap<String, bool>,
}

type EvalResult = Result<Option<Value>, EvalError>;

impl ResolutionContext {
    fn pseudo(&self, name: &str) -> Option<Option<Value>> {
        let v = match name {
            "AWS::Region" => Value::string(self.region.clone()),
            "AWS::AccountId" => Value::string(self.account_id.clone()),
            "AWS::StackName" => Value::string(self.stack_name.clone()),
            "AWS::StackId" => Value::string(self.stack_id.clone()),
            "AWS::Partition" => Value::string("aws"),
            "AWS::URLSuffix" => Value::string("amazonaws.com"),
            "AWS::NotificationARNs" => Value::Sequence(Vec::new()),
            "AWS::NoValue" => return Some(None),
            _ => return None,
        };
        Some(Some(v))
    }

    fn unresolved(name: &str) -> EvalError {
        EvalError::new(
            EvalErrorKind::UnknownTarget,
            format!("Template format error: Unresolved resource dependencies [{name}] in the Resources block of the template"),
        )
    }

    fn resolve_ref(&self, name: &str) -> EvalResult {
        if let Some(v) = self.parameters.get(name) {
            return Ok(Some(v.clone()));
        }
        if let Some(r) = self.resources.get(name) {
            return Ok(Some(Value::string(r.ref_value.clone())));
        }
        if let Some(p) = self.pseudo(name) {
            return Ok(p);
        }
        Err(Self::unresolved(name))
    }

    fn resolve_get_att(&self, resource: &str, attr: &str) -> Result<Value, EvalError> {
        let r = self.resources.get(resource).ok_or_else(|| Self::unresolved(resource))?;
        r.attributes.get(attr).cloned().ok_or_else(|| {
            EvalError::new(
                EvalErrorKind::UnknownTarget,
                format!("Template error: resource {resource} does not support attribute type {attr} in Fn::GetAtt"),
            )
        })
    }

    /// Resolves every intrinsic in `node`. `Ok(None)` means the value is
    /// `AWS::NoValue` and the enclosing key or item should be dropped.
    pub fn evaluate(&self, node: &Value) -> EvalResult {
        match node {
            Value::Intrinsic(i) => self.evaluate_function(&i.name, &i.argument),
            Value::Sequence(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    if let Some(v) = self.evaluate(item)? {
                        out.push(v);
                    }
                }
                Ok(Some(Value::Sequence(out)))
            }
            Value::Map(m) => {
                let mut out = IndexMap::with_capacity(m.len());
                for (k, v) in m {
                    if let Some(v) = self.evaluate(v)? {
                        out.insert(k.clone(), v);
                    }
                }
                Ok(Some(Value::Map(out)))
            }
            other => Ok(Some(other.clone())),
        }
    }

    /// Like [`evaluate`](Self::evaluate) but `AWS::NoValue` is an error.
    pub fn evaluate_required(&self, node: &Value, function: &str) -> Result<Value, EvalError> {
        self.evaluate(node)?
            .ok_or_else(|| EvalError::invalid(function, "argument resolved to AWS::NoValue"))
    }

    fn evaluate_text(&self, node: &Value, function: &str) -> Result<String, EvalError> {
        let v = self.evaluate_required(node, function)?;
        v.scalar_text()
            .ok_or_else(|| EvalError::invalid(function, "expects a string argument"))
    }

    fn evaluate_list(&self, node: &Value, function: &str) -> Result<Vec<Value>, EvalError> {
        match self.evaluate_required(node, function)? {
            Value::Sequence(items) => Ok(items),
            _ => Err(EvalError::invalid(function, "expects a list argument")),
        }
    }

    fn evaluate_function(&self, name: &str, arg: &Value) -> EvalResult {
        match name {
            "Ref" => match arg {
                Value::String(target) => self.resolve_ref(target),
                other => {
                    let target = self.evaluate_text(other, "Ref")?;
                    self.resolve_ref(&target)
                }
            },
            "Fn::GetAtt" => {
                let parts = match arg {
                    Value::Sequence(p) if p.len() == 2 => p,
                    _ => return Err(EvalError::invalid("Fn::GetAtt", "expects [resource, attribute]")),
                };
                let resource = self.evaluate_text(&parts[0], name)?;
                let attr = self.evaluate_text(&parts[1], name)?;
                self.resolve_get_att(&resource, &attr).map(Some)
            }
            "Fn::Sub" => self.evaluate_sub(arg).map(|s| Some(Value::String(s))),
            "Fn::Join" => {
                let parts = arg
                    .as_sequence()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| EvalError::invalid(name, "expects [delimiter, list]"))?;
                let delimiter = self.evaluate_text(&parts[0], name)?;
                let items = self.evaluate_list(&parts[1], name)?;
                let texts = items
                    .iter()
                    .map(|v| v.scalar_text().ok_or_else(|| EvalError::invalid(name, "list items must be strings")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Some(Value::String(texts.join(&delimiter))))
            }
            "Fn::Select" => {
                let parts = arg
                    .as_sequence()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| EvalError::invalid(name, "expects [index, list]"))?;
                let index_text = self.evaluate_text(&parts[0], name)?;
                let index: usize = index_text
                    .trim()
                    .parse()
                    .map_err(|_| EvalError::invalid(name, "index must be a non-negative integer"))?;
                let items = self.evaluate_list(&parts[1], name)?;
                items.get(index).cloned().map(Some).ok_or_else(|| {
                    EvalError::new(
                        EvalErrorKind::IndexOutOfRange,
                        format!("Template error: Fn::Select cannot select nonexistent value at index {index}"),
                    )
                })
            }
            "Fn::Split" => {
                let parts = arg
                    .as_sequence()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| EvalError::invalid(name, "expects [delimiter, string]"))?;
                let delimiter = self.evaluate_text(&parts[0], name)?;
                let source = self.evaluate_text(&parts[1], name)?;
                if delimiter.is_empty() {
                    return Err(EvalError::invalid(name, "delimiter must not be empty"));
                }
                Ok(Some(Value::Sequence(source.split(&delimiter).map(Value::string).collect())))
            }
            "Fn::GetAZs" => {
                let region = self.evaluate_text(arg, name)?;
                let zones = if region.is_empty() || region == self.region {
                    self.az_list.clone()
                } else {
                    ["a", "b", "c"].iter().map(|s| format!("{region}{s}")).collect()
                };
                Ok(Some(Value::Sequence(zones.into_iter().map(Value::String).collect())))
            }
            "Fn::FindInMap" => {
                let parts = arg
                    .as_sequence()
                    .filter(|p| p.len() == 3 || p.len() == 4)
                    .ok_or_else(|| EvalError::invalid(name, "expects [map, top-level key, second-level key]"))?;
                let map = self.evaluate_text(&parts[0], name)?;
                let top = self.evaluate_text(&parts[1], name)?;
                let second = self.evaluate_text(&parts[2], name)?;
                let found = self
                    .mappings
                    .get(&map)
                    .and_then(|m| m.get(&top))
                    .and_then(|m| m.get(&second));
                match found {
                    Some(v) => self.evaluate(v),
                    None => Err(EvalError::new(
                        EvalErrorKind::MissingMappingKey,
                        format!("Template error: Unable to get mapping for {map}::{top}::{second}"),
                    )),
                }
            }
            "Fn::If" => {
                let parts = arg
                    .as_sequence()
                    .filter(|p| p.len() == 3)
                    .ok_or_else(|| EvalError::invalid(name, "expects [condition, value if true, value if false]"))?;
                let cond = parts[0]
                    .as_str()
                    .ok_or_else(|| EvalError::invalid(name, "condition must be a condition name"))?;
                if self.condition(cond)? {
                    self.evaluate(&parts[1])
                } else {
                    self.evaluate(&parts[2])
                }
            }
            "Condition" | "Fn::Equals" | "Fn::And" | "Fn::Or" | "Fn::Not" => {
                self.evaluate_condition_function(name, arg).map(|b| Some(Value::Bool(b)))
            }
            "Fn::Base64" => {
                let text = self.evaluate_text(arg, name)?;
                Ok(Some(Value::String(
                    base64::engine::general_purpose::STANDARD.encode(text.as_bytes()),
                )))
            }
            "Fn::Cidr" => self.evaluate_cidr(arg).map(Some),
            "Fn::ImportValue" => {
                let export = self.evaluate_text(arg, name).unwrap_or_else(|_| "<unresolved>".into());
                Err(EvalError::new(
                    EvalErrorKind::UnsupportedCrossStack,
                    format!("No export named {export} found. Cross-stack references are not supported"),
                ))
            }
            other => Err(EvalError::new(
                EvalErrorKind::InvalidArgument,
                format!("Template format error: Unrecognized function {other}"),
            )),
        }
    }

    fn condition(&self, name: &str) -> Result<bool, EvalError> {
        self.conditions.get(name).copied().ok_or_else(|| {
            EvalError::new(
                EvalErrorKind::UnknownTarget,
                format!("Template format error: Unresolved condition dependency {name}"),
            )
        })
    }

    /// Evaluates a condition expression to a boolean.
    pub fn evaluate_condition_function(&self, name: &str, arg: &Value) -> Result<bool, EvalError> {
        match name {
            "Condition" => {
                let cond = arg
                    .as_str()
                    .ok_or_else(|| EvalError::invalid(name, "expects a condition name"))?;
                self.condition(cond)
            }
            "Fn::Equals" => {
                let parts = arg
                    .as_sequence()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| EvalError::invalid(name, "expects two values"))?;
                let a = self.evaluate(&parts[0])?;
                let b = self.evaluate(&parts[1])?;
                Ok(comparable(a.as_ref()) == comparable(b.as_ref()))
            }
            "Fn::And" | "Fn::Or" => {
                let parts = arg
                    .as_sequence()
                    .filter(|p| (2..=10).contains(&p.len()))
                    .ok_or_else(|| EvalError::invalid(name, "expects between 2 and 10 conditions"))?;
                let mut values = Vec::with_capacity(parts.len());
                for p in parts {
                    values.push(self.evaluate_bool(p, name)?);
                }
                Ok(if name == "Fn::And" {
                    values.iter().all(|b| *b)
                } else {
                    values.iter().any(|b| *b)
                })
            }
            "Fn::Not" => {
                let parts = arg
                    .as_sequence()
                    .filter(|p| p.len() == 1)
                    .ok_or_else(|| EvalError::invalid(name, "expects exactly one condition"))?;
                Ok(!self.evaluate_bool(&parts[0], name)?)
            }
            other => Err(EvalError::invalid(other, "is not a condition function")),
        }
    }

    fn evaluate_bool(&self, node: &Value, function: &str) -> Result<bool, EvalError> {
        self.evaluate_required(node, function)?
            .as_bool()
            .ok_or_else(|| EvalError::invalid(function, "operands must be conditions"))
    }

    fn evaluate_sub(&self, arg: &Value) -> Result<String, EvalError> {
        let (template, vars) = match arg {
            Value::String(s) => (s.clone(), IndexMap::new()),
            Value::Sequence(items) if !items.is_empty() && items.len() <= 2 => {
                let template = self.evaluate_text(&items[0], "Fn::Sub")?;
                let mut vars = IndexMap::new();
                if let Some(map) = items.get(1) {
                    let map = map
                        .as_map()
                        .ok_or_else(|| EvalError::invalid("Fn::Sub", "variables must be a mapping"))?;
                    for (k, v) in map {
                        vars.insert(k.clone(), self.evaluate_text(v, "Fn::Sub")?);
                    }
                }
                (template, vars)
            }
            _ => return Err(EvalError::invalid("Fn::Sub", "expects a string or [string, variables]")),
        };

        let mut out = String::with_capacity(template.len());
        let mut rest = template.as_str();
        while let Some(start) = rest.find("${") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let Some(end) = after.find('}') else {
                out.push_str(&rest[start..]);
                rest = "";
                break;
            };
            let inner = &after[..end];
            if let Some(literal) = inner.strip_prefix('!') {
                out.push_str("${");
                out.push_str(literal);
                out.push('}');
            } else {
                out.push_str(&self.sub_variable(inner.trim(), &vars)?);
            }
            rest = &after[end + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    fn sub_variable(&self, name: &str, vars: &IndexMap<String, String>) -> Result<String, EvalError> {
        if let Some(v) = vars.get(name) {
            return Ok(v.clone());
        }
        if let Some((resource, attr)) = name.split_once('.') {
            if self.resources.contains_key(resource) {
                let v = self.resolve_get_att(resource, attr)?;
                return scalar_or_joined(&v);
            }
        }
        match self.resolve_ref(name)? {
            Some(v) => scalar_or_joined(&v),
            None => Ok(String::new()),
        }
    }

    fn evaluate_cidr(&self, arg: &Value) -> Result<Value, EvalError> {
        let name = "Fn::Cidr";
        let parts = arg
            .as_sequence()
            .filter(|p| p.len() == 3)
            .ok_or_else(|| EvalError::invalid(name, "expects [ipBlock, count, cidrBits]"))?;
        let block = self.evaluate_text(&parts[0], name)?;
        let count: u32 = self
            .evaluate_text(&parts[1], name)?
            .parse()
            .map_err(|_| EvalError::invalid(name, "count must be an integer"))?;
        let bits: u32 = self
            .evaluate_text(&parts[2], name)?
            .parse()
            .map_err(|_| EvalError::invalid(name, "cidrBits must be an integer"))?;
        let (base, prefix) = parse_ipv4_cidr(&block).ok_or_else(|| EvalError::invalid(name, "ipBlock must be an IPv4 CIDR"))?;
        if bits == 0 || bits > 32 - prefix.min(32) || !(1..=256).contains(&count) {
            return Err(EvalError::invalid(name, "cannot carve the requested subnets"));
        }
        let new_prefix = 32 - bits;
        let available = 1u64 << (new_prefix - prefix);
        if u64::from(count) > available {
            return Err(EvalError::new(
                EvalErrorKind::IndexOutOfRange,
                format!("Template error: Fn::Cidr cannot fit {count} subnets of /{new_prefix} in {block}"),
            ));
        }
        let start = u32::from(base) & prefix_mask(prefix);
        let subnets = (0..count)
            .map(|i| {
                let addr = Ipv4Addr::from(start + (i << bits));
                Value::String(format!("{addr}/{new_prefix}"))
            })
            .collect();
        Ok(Value::Sequence(subnets))
    }
}

fn comparable(v: Option<&Value>) -> Option<String> {
    match v {
        None => None,
        Some(Value::Sequence(items)) => Some(
            items
                .iter()
                .map(|i| i.scalar_text().unwrap_or_default())
                .collect::<Vec<_>>()
                .join(","),
        ),
        Some(other) => other.scalar_text(),
    }
}

fn scalar_or_joined(v: &Value) -> Result<String, EvalError> {
    match v {
        Value::Sequence(items) => Ok(items
            .iter()
            .filter_map(Value::scalar_text)
            .collect::<Vec<_>>()
            .join(",")),
        other => other
            .scalar_text()
            .ok_or_else(|| EvalError::invalid("Fn::Sub", "variable must resolve to a string")),
    }
}

pub(crate) fn prefix_mask(prefix: u32) -> u32 {
    if prefix == 0 {
        0
    } else {
        u32::MAX << (32 - prefix)
    }
}

/// `a.b.c.d/n` → (address, prefix length).
pub(crate) fn parse_ipv4_cidr(text: &str) -> Option<(Ipv4Addr, u32)> {
    let (addr, prefix) = text.trim().split_once('/')?;
    let addr: Ipv4Addr = addr.parse().ok()?;
    let prefix: u32 = prefix.parse().ok()?;
    (prefix <= 32).then_some((addr, prefix))
}

/// Evaluates every template condition in declaration order; conditions may
/// reference each other through `Condition`.
pub fn evaluate_conditions(
    conditions: &IndexMap<String, Value>,
    ctx: &ResolutionContext,
) -> Result<HashMap<String, bool>, EvalError> {
    let mut done: HashMap<String, bool> = HashMap::new();
    let mut visiting: Vec<String> = Vec::new();
    for name in conditions.keys() {
        resolve_condition(name, conditions, ctx, &mut done, &mut visiting)?;
    }
    Ok(done)
}

fn resolve_condition(
    name: &str,
    conditions: &IndexMap<String, Value>,
    ctx: &ResolutionContext,
    done: &mut HashMap<String, bool>,
    visiting: &mut Vec<String>,
) -> Result<bool, EvalError> {
    if let Some(b) = done.get(name) {
        return Ok(*b);
    }
    if visiting.iter().any(|v| v == name) {
        return Err(EvalError::new(
            EvalErrorKind::InvalidArgument,
            format!("Template format error: Circular dependency between conditions: [{}]", visiting.join(", ")),
        ));
    }
    let expr = conditions.get(name).ok_or_else(|| {
        EvalError::new(
            EvalErrorKind::UnknownTarget,
            format!("Template format error: Unresolved condition dependency {name}"),
        )
    })?;
    visiting.push(name.to_string());
    let mut deps = Vec::new();
    collect_condition_refs(expr, &mut deps);
    for dep in deps {
        resolve_condition(&dep, conditions, ctx, done, visiting)?;
    }
    visiting.pop();

    let mut scoped = ctx.clone();
    scoped.conditions.extend(done.iter().map(|(k, v)| (k.clone(), *v)));
    let value = match expr {
        Value::Intrinsic(i) => scoped.evaluate_condition_function(&i.name, &i.argument)?,
        other => other.as_bool().ok_or_else(|| {
            EvalError::invalid("Conditions", &format!("{name} must be a condition function"))
        })?,
    };
    done.insert(name.to_string(), value);
    Ok(value)
}

fn collect_condition_refs(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Intrinsic(i) if i.name == "Condition" => {
            if let Some(n) = i.argument.as_str() {
                out.push(n.to_string());
            }
        }
        Value::Intrinsic(i) => collect_condition_refs(&i.argument, out),
        Value::Sequence(items) => items.iter().for_each(|x| collect_condition_refs(x, out)),
        Value::Map(m) => m.values().for_each(|x| collect_condition_refs(x, out)),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::parse_yaml;

    fn ctx() -> ResolutionContext {
        let mut c = ResolutionContext {
            region: "us-east-1".into(),
            account_id: "123456789012".into(),
            stack_name: "sim-stack-1".into(),
            stack_id: "arn:aws:cloudformation:us-east-1:123456789012:stack/sim-stack-1/1".into(),
            az_list: vec!["us-east-1a".into(), "us-east-1b".into(), "us-east-1c".into()],
            ..Default::default()
        };
        c.parameters.insert("Env".into(), Value::string("prod"));
        c.mappings = parse_yaml("RegionMap:\n  us-east-1: {Ami: ami-1, Size: small}\n  eu-west-1: {Ami: ami-2, Size: large}\n")
            .unwrap()
            .as_map()
            .unwrap()
            .clone();
        c.resources.insert(
            "Topic".into(),
            ResolvedResource {
                ref_value: "arn:aws:sns:us-east-1:123456789012:t".into(),
                attributes: [("TopicName".to_string(), Value::string("t"))].into_iter().collect(),
            },
        );
        c
    }

    fn eval(yaml: &str) -> Result<Option<Value>, EvalError> {
        let node = parse_yaml(&format!("v: {yaml}\n")).unwrap();
        ctx().evaluate(node.get("v").unwrap())
    }

    fn eval_str(yaml: &str) -> String {
        eval(yaml).unwrap().unwrap().scalar_text().unwrap()
    }

    #[test]
    fn select_first_az() {
        assert_eq!(eval_str("!Select [0, !GetAZs '']"), "us-east-1a");
    }

    #[test]
    fn sub_region() {
        assert_eq!(eval_str("!Sub '${AWS::Region}-app'"), "us-east-1-app");
        assert_eq!(eval_str("!Sub '${Env}-${Topic.TopicName}-${!Literal}'"), "prod-t-${Literal}");
        assert_eq!(eval_str("!Sub ['${A}-${Env}', {A: x}]"), "x-prod");
    }

    #[test]
    fn join_split() {
        assert_eq!(eval_str("!Join ['-', [a, b, c]]"), "a-b-c");
        assert_eq!(eval_str("!Select [1, !Split [',', 'x,y,z']]"), "y");
    }

    #[test]
    fn find_in_map_two_by_two() {
        // Hand expansion of the 2x2 fixture.
        let expected = [
            ("us-east-1", "Ami", "ami-1"),
            ("us-east-1", "Size", "small"),
            ("eu-west-1", "Ami", "ami-2"),
            ("eu-west-1", "Size", "large"),
        ];
        for (top, second, want) in expected {
            assert_eq!(eval_str(&format!("!FindInMap [RegionMap, {top}, {second}]")), want);
        }
        assert_eq!(eval_str("!FindInMap [RegionMap, !Ref 'AWS::Region', Ami]"), "ami-1");
        assert_eq!(
            eval("!FindInMap [RegionMap, ap-south-1, Ami]").unwrap_err().kind,
            EvalErrorKind::MissingMappingKey
        );
    }

    #[test]
    fn errors() {
        assert_eq!(eval("!Select [5, [a]]").unwrap_err().kind, EvalErrorKind::IndexOutOfRange);
        assert_eq!(eval("!Ref Missing").unwrap_err().kind, EvalErrorKind::UnknownTarget);
        assert_eq!(eval("!ImportValue SharedVpc").unwrap_err().kind, EvalErrorKind::UnsupportedCrossStack);
        assert_eq!(eval("!GetAtt Topic.Nope").unwrap_err().kind, EvalErrorKind::UnknownTarget);
    }

    #[test]
    fn no_value_drops_keys() {
        let node = parse_yaml("a: !Ref AWS::NoValue\nb: [1, !Ref AWS::NoValue]\n").unwrap();
        let v = ctx().evaluate(&node).unwrap().unwrap();
        assert!(v.get("a").is_none());
        assert_eq!(v.get("b").unwrap().as_sequence().unwrap().len(), 1);
    }

    #[test]
    fn base64_and_cidr() {
        assert_eq!(eval_str("!Base64 hello"), "aGVsbG8=");
        let v = eval("!Cidr ['10.0.0.0/16', 3, 8]").unwrap().unwrap();
        let got: Vec<String> = v.as_sequence().unwrap().iter().map(|x| x.scalar_text().unwrap()).collect();
        assert_eq!(got, ["10.0.0.0/24", "10.0.1.0/24", "10.0.2.0/24"]);
    }

    #[test]
    fn conditions_in_order_and_nested() {
        let conds = parse_yaml(
            "IsProd: !Equals [!Ref Env, prod]\nNotProd: !Not [!Condition IsProd]\nBoth: !And [!Condition IsProd, !Condition NotProd]\n",
        )
        .unwrap();
        let got = evaluate_conditions(conds.as_map().unwrap(), &ctx()).unwrap();
        assert_eq!((got["IsProd"], got["NotProd"], got["Both"]), (true, false, false));
        let mut c = ctx();
        c.conditions = got;
        assert_eq!(c.evaluate(&parse_yaml("!If [IsProd, big, small]").unwrap()).unwrap().unwrap(), Value::string("big"));
    }
}
