//! Simulated deployment backend: parameter resolution, dependency-ordered
//! provisioning with rollback, and stack deletion.

mod env;
mod intrinsics;
mod provision;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::template::{dependency_graph, ParameterDef, Template, Value};
use provision::{provision, Claim, Request};

pub use env::{EnvConfig, LiveResource, Registries, SimEnvironment, SimState, DEFAULT_AMIS, DEFAULT_KEY_PAIR};
pub use intrinsics::{evaluate_conditions, EvalError, EvalErrorKind, ResolutionContext, ResolvedResource};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("Stack with id {0} does not exist")]
    UnknownStack(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StackStatus {
    CreateInProgress,
    CreateComplete,
    RollbackComplete,
    DeleteComplete,
}

impl std::fmt::Display for StackStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StackStatus::CreateInProgress => "CREATE_IN_PROGRESS",
            StackStatus::CreateComplete => "CREATE_COMPLETE",
            StackStatus::RollbackComplete => "ROLLBACK_COMPLETE",
            StackStatus::DeleteComplete => "DELETE_COMPLETE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvisionedResource {
    pub logical_id: String,
    pub physical_id: String,
    pub resource_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackState {
    pub stack_id: String,
    pub status: StackStatus,
    /// In provisioning order; emptied by rollback and deletion.
    pub provisioned: Vec<ProvisionedResource>,
    /// Parameter values as resolved; `NoEcho` values are masked.
    pub resolved_parameters: IndexMap<String, String>,
    pub outputs: IndexMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeployPhase {
    ParameterValidation,
    Graph,
    Provision,
}

impl std::fmt::Display for DeployPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DeployPhase::ParameterValidation => "parameter-validation",
            DeployPhase::Graph => "graph",
            DeployPhase::Provision => "provision",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentFailure {
    pub phase: DeployPhase,
    pub message: String,
    pub failing_resource: Option<String>,
    /// Set when a stack was created and rolled back.
    pub stack_id: Option<String>,
}

impl DeploymentFailure {
    fn new(phase: DeployPhase, message: impl Into<String>) -> Self {
        DeploymentFailure {
            phase,
            message: message.into(),
            failing_resource: None,
            stack_id: None,
        }
    }
}

impl std::fmt::Display for DeploymentFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.failing_resource {
            Some(r) => write!(f, "[{}] {}: {}", self.phase, r, self.message),
            None => write!(f, "[{}] {}", self.phase, self.message),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StackRecord {
    pub state: StackState,
    /// Claims per provisioned resource, in provisioning order.
    claims: Vec<(String, Vec<Claim>)>,
}

/// Stack operations a deployment target offers. The simulator is the only
/// implementation; a live cloud adapter would be another.
pub trait DeploymentBackend {
    fn create_stack(&mut self, template: &Template, params: &BTreeMap<String, String>) -> Result<StackState, DeploymentFailure>;
    fn delete_stack(&mut self, stack_id: &str) -> Result<StackState, SimError>;
    fn stack_status(&self, stack_id: &str) -> Option<StackStatus>;
}

impl DeploymentBackend for SimEnvironment {
    fn create_stack(&mut self, template: &Template, params: &BTreeMap<String, String>) -> Result<StackState, DeploymentFailure> {
        deploy(self, template, params)
    }

    fn delete_stack(&mut self, stack_id: &str) -> Result<StackState, SimError> {
        delete_stack(self, stack_id)
    }

    fn stack_status(&self, stack_id: &str) -> Option<StackStatus> {
        self.stack(stack_id).map(|s| s.status)
    }
}

const VALIDATION_PREFIX: &str = "An error occurred (ValidationError) when calling the CreateStack operation: ";

fn missing_values_message(names: &[String]) -> String {
    format!("{VALIDATION_PREFIX}Parameters: [{}] must have values", names.join(", "))
}

fn bad_value_message(value: &str, name: &str) -> String {
    format!("Parameter validation failed: parameter value {value} for parameter name {name} does not exist")
}

fn param_failure(message: String) -> DeploymentFailure {
    DeploymentFailure::new(DeployPhase::ParameterValidation, message)
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::Sequence(items) => Some(items.iter().filter_map(Value::scalar_text).collect::<Vec<_>>().join(",")),
        other => other.scalar_text(),
    }
}

fn is_list_type(ty: &str) -> bool {
    ty == "CommaDelimitedList" || ty.starts_with("List<")
}

/// Element type of `List<T>` (or the type itself).
fn element_type(ty: &str) -> &str {
    ty.strip_prefix("List<").and_then(|t| t.strip_suffix('>')).unwrap_or(ty)
}

fn check_element(env: &SimEnvironment, name: &str, ty: &str, value: &str) -> Result<(), DeploymentFailure> {
    let exists = match ty {
        "AWS::EC2::KeyPair::KeyName" => env.registries().key_pairs.contains(value),
        "AWS::EC2::Image::Id" => env.registries().ami_catalog.contains(value),
        "AWS::EC2::VPC::Id" => env.vpc_exists(value),
        "AWS::EC2::Subnet::Id" => env.subnet_exists(value),
        "AWS::EC2::SecurityGroup::Id" => env.security_group_exists(value),
        "AWS::EC2::AvailabilityZone::Name" => env.az_list().iter().any(|az| az == value),
        "AWS::EC2::Instance::Id" => env.live_of_type(value, "AWS::EC2::Instance").is_some(),
        "AWS::EC2::Volume::Id" => env.live_of_type(value, "AWS::EC2::Volume").is_some(),
        "AWS::Route53::HostedZone::Id" => false,
        "Number" => {
            return value
                .trim()
                .parse::<f64>()
                .map(|_| ())
                .map_err(|_| param_failure(format!("{VALIDATION_PREFIX}Parameter '{name}' must be a number.")))
        }
        _ => true,
    };
    if exists {
        Ok(())
    } else {
        Err(param_failure(bad_value_message(value, name)))
    }
}

fn resolve_parameter(
    env: &SimEnvironment,
    name: &str,
    def: &ParameterDef,
    raw: String,
) -> Result<Value, DeploymentFailure> {
    let ty = def.param_type.as_str();
    let (ty, raw) = match ty
        .strip_prefix("AWS::SSM::Parameter::Value<")
        .and_then(|t| t.strip_suffix('>'))
    {
        Some(inner) => {
            let resolved = env.registries().ssm_parameters.get(&raw).cloned().ok_or_else(|| {
                param_failure(format!(
                    "{VALIDATION_PREFIX}Unable to fetch parameters [{raw}] from parameter store for this account."
                ))
            })?;
            (inner, resolved)
        }
        None => (ty, raw),
    };

    let elements: Vec<String> = if is_list_type(ty) {
        raw.split(',').map(|p| p.trim().to_string()).collect()
    } else {
        vec![raw.clone()]
    };
    if let Some(allowed) = &def.allowed_values {
        let allowed: Vec<String> = allowed.iter().filter_map(Value::scalar_text).collect();
        if elements.iter().any(|e| !allowed.contains(e)) {
            return Err(param_failure(format!(
                "{VALIDATION_PREFIX}Parameter '{name}' must be one of AllowedValues"
            )));
        }
    }
    let element_ty = element_type(ty);
    for e in &elements {
        if !raw.is_empty() || element_ty.starts_with("AWS::") {
            check_element(env, name, element_ty, e)?;
        }
    }
    Ok(if is_list_type(ty) {
        Value::Sequence(elements.into_iter().map(Value::String).collect())
    } else {
        Value::String(raw)
    })
}

type ResolvedParameters = (IndexMap<String, Value>, IndexMap<String, String>);

fn resolve_parameters(
    env: &SimEnvironment,
    template: &Template,
    supplied: &BTreeMap<String, String>,
) -> Result<ResolvedParameters, DeploymentFailure> {
    let undeclared: Vec<String> = supplied
        .keys()
        .filter(|k| !template.parameters.contains_key(*k))
        .cloned()
        .collect();
    if !undeclared.is_empty() {
        return Err(param_failure(format!(
            "{VALIDATION_PREFIX}Parameters: [{}] do not exist in the template",
            undeclared.join(", ")
        )));
    }

    let mut raw_values = Vec::new();
    let mut missing = Vec::new();
    for (name, def) in &template.parameters {
        let raw = supplied
            .get(name)
            .cloned()
            .or_else(|| def.default.as_ref().and_then(value_text));
        match raw {
            Some(r) => raw_values.push((name, def, r)),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(param_failure(missing_values_message(&missing)));
    }

    let mut values = IndexMap::new();
    let mut shown = IndexMap::new();
    for (name, def, raw) in raw_values {
        let value = resolve_parameter(env, name, def, raw)?;
        let text = if def.no_echo {
            "****".to_string()
        } else {
            value_text(&value).unwrap_or_default()
        };
        shown.insert(name.clone(), text);
        values.insert(name.clone(), value);
    }
    Ok((values, shown))
}

/// Creates a stack from `template`. Parameter and graph failures leave no
/// stack behind; provisioning failures roll back and leave a
/// `ROLLBACK_COMPLETE` stack with nothing provisioned.
pub fn deploy(
    env: &mut SimEnvironment,
    template: &Template,
    supplied: &BTreeMap<String, String>,
) -> Result<StackState, DeploymentFailure> {
    let (parameters, shown) = resolve_parameters(env, template, supplied)?;

    let stack_name = format!("sim-stack-{}", env.next_stack);
    let mut ctx = ResolutionContext {
        region: env.region.clone(),
        account_id: env.account_id.clone(),
        stack_id: format!(
            "arn:aws:cloudformation:{}:{}:stack/{stack_name}/{:08}",
            env.region, env.account_id, env.next_stack
        ),
        stack_name: stack_name.clone(),
        az_list: env.az_list.clone(),
        parameters,
        mappings: template.mappings.clone(),
        ..Default::default()
    };
    ctx.conditions = evaluate_conditions(&template.conditions, &ctx)
        .map_err(|e| DeploymentFailure::new(DeployPhase::Graph, e.message))?;
    let graph = dependency_graph(template).map_err(|e| DeploymentFailure::new(DeployPhase::Graph, e.to_string()))?;

    env.next_stack += 1;
    let mut record = StackRecord {
        state: StackState {
            stack_id: stack_name.clone(),
            status: StackStatus::CreateInProgress,
            provisioned: Vec::new(),
            resolved_parameters: shown,
            outputs: IndexMap::new(),
        },
        claims: Vec::new(),
    };

    let mut seq = 0u64;
    let mut failure: Option<DeploymentFailure> = None;
    for logical_id in &graph.order {
        let res = &template.resources[logical_id];
        if let Some(cond) = &res.condition {
            if !ctx.conditions.get(cond).copied().unwrap_or(false) {
                continue;
            }
        }
        let fail = |message: String| DeploymentFailure {
            phase: DeployPhase::Provision,
            message,
            failing_resource: Some(logical_id.clone()),
            stack_id: Some(stack_name.clone()),
        };
        let properties = match ctx.evaluate(&Value::Map(res.properties.clone())) {
            Ok(Some(Value::Map(m))) => m,
            Ok(_) => IndexMap::new(),
            Err(e) => {
                failure = Some(fail(e.message));
                break;
            }
        };
        seq += 1;
        let physical_id = format!("{stack_name}-{logical_id}-{seq}");
        let outcome = provision(&Request {
            env,
            resource_type: &res.resource_type,
            physical_id: &physical_id,
            properties: &properties,
            seq,
        });
        let provisioned = match outcome {
            Ok(p) => p,
            Err(message) => {
                failure = Some(fail(message));
                break;
            }
        };
        apply_claims(&mut env.state.registries, &provisioned.claims);
        env.state.resources.insert(
            physical_id.clone(),
            LiveResource {
                stack_id: stack_name.clone(),
                logical_id: logical_id.clone(),
                resource_type: res.resource_type.clone(),
                ref_value: provisioned.ref_value.clone(),
                attributes: provisioned.attributes.clone(),
            },
        );
        ctx.resources.insert(
            logical_id.clone(),
            ResolvedResource {
                ref_value: provisioned.ref_value,
                attributes: provisioned.attributes,
            },
        );
        record.claims.push((physical_id.clone(), provisioned.claims));
        record.state.provisioned.push(ProvisionedResource {
            logical_id: logical_id.clone(),
            physical_id,
            resource_type: res.resource_type.clone(),
        });
    }

    if failure.is_none() {
        match evaluate_outputs(template, &ctx) {
            Ok(outputs) => record.state.outputs = outputs,
            Err(message) => {
                failure = Some(DeploymentFailure {
                    phase: DeployPhase::Provision,
                    message,
                    failing_resource: None,
                    stack_id: Some(stack_name.clone()),
                })
            }
        }
    }

    match failure {
        Some(f) => {
            teardown(env, &mut record);
            record.state.status = StackStatus::RollbackComplete;
            env.stacks.insert(stack_name, record);
            tracing::debug!(message = %f.message, "stack rolled back");
            Err(f)
        }
        None => {
            record.state.status = StackStatus::CreateComplete;
            let state = record.state.clone();
            env.stacks.insert(stack_name, record);
            Ok(state)
        }
    }
}

fn evaluate_outputs(template: &Template, ctx: &ResolutionContext) -> Result<IndexMap<String, String>, String> {
    let mut out = IndexMap::new();
    for (name, output) in &template.outputs {
        if let Some(cond) = output.get("Condition").and_then(Value::as_str) {
            if !ctx.conditions.get(cond).copied().unwrap_or(false) {
                continue;
            }
        }
        let Some(value) = output.get("Value") else {
            return Err(format!("Template format error: Every Outputs member must contain a Value object ({name})"));
        };
        let resolved = ctx.evaluate(value).map_err(|e| e.message)?;
        out.insert(name.clone(), resolved.as_ref().and_then(value_text).unwrap_or_default());
    }
    Ok(out)
}

fn apply_claims(registries: &mut Registries, claims: &[Claim]) {
    for claim in claims {
        match claim {
            Claim::BucketName(n) => {
                registries.global_bucket_names.insert(n.clone());
            }
            Claim::ResourceName(n) => {
                registries.resource_names.insert(n.clone());
            }
            Claim::KeyPair(n) => {
                registries.key_pairs.insert(n.clone());
            }
            Claim::SsmParameter(n, v) => {
                registries.ssm_parameters.insert(n.clone(), v.clone());
            }
        }
    }
}

fn release_claims(registries: &mut Registries, claims: &[Claim]) {
    for claim in claims.iter().rev() {
        match claim {
            Claim::BucketName(n) => {
                registries.global_bucket_names.remove(n);
            }
            Claim::ResourceName(n) => {
                registries.resource_names.remove(n);
            }
            Claim::KeyPair(n) => {
                registries.key_pairs.remove(n);
            }
            Claim::SsmParameter(n, _) => {
                registries.ssm_parameters.remove(n);
            }
        }
    }
}

/// Removes every provisioned resource of the stack in reverse order.
fn teardown(env: &mut SimEnvironment, record: &mut StackRecord) {
    while let Some((physical_id, claims)) = record.claims.pop() {
        release_claims(&mut env.state.registries, &claims);
        env.state.resources.remove(&physical_id);
    }
    record.state.provisioned.clear();
}

/// Deletes a stack and everything it provisioned, restoring the registries.
pub fn delete_stack(env: &mut SimEnvironment, stack_id: &str) -> Result<StackState, SimError> {
    let mut record = env
        .stacks
        .remove(stack_id)
        .ok_or_else(|| SimError::UnknownStack(stack_id.to_string()))?;
    teardown(env, &mut record);
    record.state.status = StackStatus::DeleteComplete;
    Ok(record.state)
}
