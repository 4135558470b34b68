use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SimError, StackRecord};

/// AMI ids every default environment knows about.
pub const DEFAULT_AMIS: &[&str] = &[
    "ami-0c55b159cbfafe1f0",
    "ami-0abcdef1234567890",
    "ami-0123456789abcdef0",
    "ami-0ff8a91507f77f867",
];

/// Public SSM paths that resolve to catalog AMIs.
pub const DEFAULT_SSM_PARAMETERS: &[(&str, &str)] = &[
    (
        "/aws/service/ami-amazon-linux-latest/amzn2-ami-hvm-x86_64-gp2",
        "ami-0c55b159cbfafe1f0",
    ),
    (
        "/aws/service/ami-amazon-linux-latest/al2023-ami-kernel-default-x86_64",
        "ami-0abcdef1234567890",
    ),
    (
        "/aws/service/ami-amazon-linux-latest/amzn-ami-hvm-x86_64-gp2",
        "ami-0ff8a91507f77f867",
    ),
];

pub const DEFAULT_KEY_PAIR: &str = "sim-keypair";
pub const DEFAULT_ACCOUNT_ID: &str = "123456789012";

/// Seed values for a simulated account. Registry lists are added to the
/// defaults; scalar fields replace them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub region: Option<String>,
    pub az_list: Option<Vec<String>>,
    pub account_id: Option<String>,
    #[serde(default)]
    pub key_pairs: Vec<String>,
    #[serde(default)]
    pub ami_catalog: Vec<String>,
    #[serde(default)]
    pub bucket_names: Vec<String>,
    #[serde(default)]
    pub existing_vpcs: Vec<String>,
    #[serde(default)]
    pub existing_subnets: Vec<String>,
    #[serde(default)]
    pub existing_security_groups: Vec<String>,
    #[serde(default)]
    pub ssm_parameters: BTreeMap<String, String>,
}

impl EnvConfig {
    pub fn from_yaml_str(text: &str) -> Result<Self, SimError> {
        if text.trim().is_empty() {
            return Ok(EnvConfig::default());
        }
        serde_yaml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_yaml_str(&text)
    }
}

/// Existence and uniqueness registries of the simulated account.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Registries {
    pub key_pairs: BTreeSet<String>,
    pub ami_catalog: BTreeSet<String>,
    pub global_bucket_names: BTreeSet<String>,
    pub existing_vpcs: BTreeSet<String>,
    pub existing_subnets: BTreeSet<String>,
    pub existing_security_groups: BTreeSet<String>,
    pub ssm_parameters: BTreeMap<String, String>,
    /// Account-scoped names, stored as `{resource type}/{name}`.
    pub resource_names: BTreeSet<String>,
}

/// A provisioned resource as seen by later resources and stacks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiveResource {
    pub stack_id: String,
    pub logical_id: String,
    pub resource_type: String,
    /// Value returned by `Ref`.
    pub ref_value: String,
    pub attributes: BTreeMap<String, crate::template::Value>,
}

/// Everything that must return to its initial value once stacks are gone.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SimState {
    pub registries: Registries,
    /// Live resources keyed by physical id.
    pub resources: BTreeMap<String, LiveResource>,
}

/// A simulated, isolated account. Single writer: one deploy or delete at a time.
#[derive(Debug, Clone)]
pub struct SimEnvironment {
    pub(crate) region: String,
    pub(crate) az_list: Vec<String>,
    pub(crate) account_id: String,
    pub(crate) state: SimState,
    initial_snapshot: SimState,
    pub(crate) stacks: BTreeMap<String, StackRecord>,
    pub(crate) next_stack: u64,
}

impl SimEnvironment {
    pub fn new(config: &EnvConfig) -> Result<Self, SimError> {
        let region = config.region.clone().unwrap_or_else(|| "us-east-1".to_string());
        if region.trim().is_empty() {
            return Err(SimError::Config("region must not be empty".into()));
        }
        let az_list = match &config.az_list {
            Some(list) if list.is_empty() => {
                return Err(SimError::Config("az_list must name at least one availability zone".into()))
            }
            Some(list) => list.clone(),
            None => ["a", "b", "c"].iter().map(|s| format!("{region}{s}")).collect(),
        };
        let account_id = config.account_id.clone().unwrap_or_else(|| DEFAULT_ACCOUNT_ID.to_string());
        if account_id.len() != 12 || !account_id.chars().all(|c| c.is_ascii_digit()) {
            return Err(SimError::Config(format!("account_id must be 12 digits, got {account_id:?}")));
        }

        let mut registries = Registries {
            key_pairs: std::iter::once(DEFAULT_KEY_PAIR.to_string()).collect(),
            ami_catalog: DEFAULT_AMIS.iter().map(|s| s.to_string()).collect(),
            ssm_parameters: DEFAULT_SSM_PARAMETERS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            ..Registries::default()
        };
        registries.key_pairs.extend(config.key_pairs.iter().cloned());
        registries.ami_catalog.extend(config.ami_catalog.iter().cloned());
        registries.global_bucket_names.extend(config.bucket_names.iter().cloned());
        registries.existing_vpcs.extend(config.existing_vpcs.iter().cloned());
        registries.existing_subnets.extend(config.existing_subnets.iter().cloned());
        registries
            .existing_security_groups
            .extend(config.existing_security_groups.iter().cloned());
        registries
            .ssm_parameters
            .extend(config.ssm_parameters.iter().map(|(k, v)| (k.clone(), v.clone())));

        let state = SimState {
            registries,
            resources: BTreeMap::new(),
        };
        Ok(SimEnvironment {
            region,
            az_list,
            account_id,
            initial_snapshot: state.clone(),
            state,
            stacks: BTreeMap::new(),
            next_stack: 1,
        })
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn az_list(&self) -> &[String] {
        &self.az_list
    }

    pub fn account_id(&self) -> &str {
        &self.account_id
    }

    pub fn registries(&self) -> &Registries {
        &self.state.registries
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn initial_snapshot(&self) -> &SimState {
        &self.initial_snapshot
    }

    /// True when registries and live resources equal the construction snapshot.
    pub fn is_clean(&self) -> bool {
        self.state == self.initial_snapshot
    }

    pub fn stack(&self, stack_id: &str) -> Option<&super::StackState> {
        self.stacks.get(stack_id).map(|r| &r.state)
    }

    pub fn stack_ids(&self) -> Vec<String> {
        self.stacks.keys().cloned().collect()
    }

    /// Whether `id` names a VPC from the registry or a live resource.
    pub(crate) fn vpc_exists(&self, id: &str) -> bool {
        self.state.registries.existing_vpcs.contains(id) || self.live_of_type(id, "AWS::EC2::VPC").is_some()
    }

    pub(crate) fn subnet_exists(&self, id: &str) -> bool {
        self.state.registries.existing_subnets.contains(id) || self.live_of_type(id, "AWS::EC2::Subnet").is_some()
    }

    pub(crate) fn security_group_exists(&self, id: &str) -> bool {
        self.state.registries.existing_security_groups.contains(id)
            || self.live_of_type(id, "AWS::EC2::SecurityGroup").is_some()
    }

    /// Live resource of the given type whose `Ref` value is `ref_value`.
    pub(crate) fn live_of_type(&self, ref_value: &str, resource_type: &str) -> Option<&LiveResource> {
        self.state
            .resources
            .values()
            .find(|r| r.resource_type == resource_type && r.ref_value == ref_value)
    }
}

impl Default for SimEnvironment {
    fn default() -> Self {
        SimEnvironment::new(&EnvConfig::default()).expect("default config is valid")
    }
}
