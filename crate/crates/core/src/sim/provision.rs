//! Per-type provisioners. Each checks the semantic rules of its resource type
//! against the environment and returns what it would create.

use std::collections::BTreeMap;

use indexmap::IndexMap;

use super::env::SimEnvironment;
use super::intrinsics::{parse_ipv4_cidr, prefix_mask};
use crate::template::Value;
use crate::validate::ResourceSpec;

/// Registry entries a resource holds until it is torn down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Claim {
    BucketName(String),
    /// `{resource type}/{name}` in the account-scoped name registry.
    ResourceName(String),
    KeyPair(String),
    SsmParameter(String, String),
}

#[derive(Debug, Clone)]
pub(crate) struct Provisioned {
    pub ref_value: String,
    pub attributes: BTreeMap<String, Value>,
    pub claims: Vec<Claim>,
}

pub(crate) struct Request<'a> {
    pub env: &'a SimEnvironment,
    pub resource_type: &'a str,
    pub physical_id: &'a str,
    pub properties: &'a IndexMap<String, Value>,
    /// Per-stack ordinal of this resource, used for synthetic addresses.
    pub seq: u64,
}

impl Request<'_> {
    fn text(&self, name: &str) -> Option<String> {
        self.properties.get(name).and_then(Value::scalar_text)
    }

    fn number(&self, name: &str) -> Result<Option<f64>, String> {
        match self.properties.get(name) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| format!("Property {name} must be a number")),
        }
    }

    fn flag(&self, name: &str) -> bool {
        self.properties.get(name).and_then(Value::as_bool).unwrap_or(false)
    }

    fn strings(&self, name: &str) -> Vec<String> {
        match self.properties.get(name) {
            Some(Value::Sequence(items)) => items.iter().filter_map(Value::scalar_text).collect(),
            Some(Value::String(s)) => s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect(),
            _ => Vec::new(),
        }
    }

    fn arn(&self, service: &str, resource: &str) -> String {
        format!("arn:aws:{service}:{}:{}:{resource}", self.env.region, self.env.account_id)
    }

    /// Explicit name property, or the physical id when the template omits it.
    fn name_or_generated(&self, prop: &str) -> String {
        self.text(prop).unwrap_or_else(|| self.physical_id.to_string())
    }

    fn claim_name(&self, claims: &mut Vec<Claim>, name: &str) -> Result<(), String> {
        let key = format!("{}/{name}", self.resource_type);
        if self.env.state.registries.resource_names.contains(&key) {
            return Err(format!("{name} already exists in stack"));
        }
        claims.push(Claim::ResourceName(key));
        Ok(())
    }
}

fn attrs<const N: usize>(pairs: [(&str, Value); N]) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn s(text: impl Into<String>) -> Value {
    Value::String(text.into())
}

type Outcome = Result<Provisioned, String>;

pub(crate) fn provision(req: &Request<'_>) -> Outcome {
    let spec = ResourceSpec::bundled();
    if spec.resource_type(req.resource_type).is_none() {
        return Err(format!(
            "Template format error: Unrecognized resource types: [{}]",
            req.resource_type
        ));
    }
    let mut out = match req.resource_type {
        "AWS::S3::Bucket" => s3_bucket(req),
        "AWS::EC2::VPC" => vpc(req),
        "AWS::EC2::Subnet" => subnet(req),
        "AWS::EC2::SecurityGroup" => security_group(req),
        "AWS::EC2::Instance" => instance(req),
        "AWS::EC2::KeyPair" => key_pair(req),
        "AWS::RDS::DBInstance" => db_instance(req),
        "AWS::DynamoDB::Table" => dynamodb_table(req),
        "AWS::SQS::Queue" => sqs_queue(req),
        "AWS::SNS::Topic" => sns_topic(req),
        "AWS::SNS::Subscription" => sns_subscription(req),
        "AWS::Lambda::Function" => lambda_function(req),
        "AWS::IAM::Role" => iam_role(req),
        "AWS::IAM::Policy" => iam_policy(req),
        "AWS::AutoScaling::AutoScalingGroup" => autoscaling_group(req),
        "AWS::Logs::LogGroup" => log_group(req),
        "AWS::SSM::Parameter" => ssm_parameter(req),
        "AWS::Kinesis::Stream" => kinesis_stream(req),
        _ => Ok(Provisioned {
            ref_value: req.physical_id.to_string(),
            attributes: BTreeMap::new(),
            claims: Vec::new(),
        }),
    }?;
    fill_default_attributes(req, spec, &mut out);
    Ok(out)
}

/// Synthesizes every spec-listed attribute the provisioner did not set.
fn fill_default_attributes(req: &Request<'_>, spec: &ResourceSpec, out: &mut Provisioned) {
    let Some(type_spec) = spec.resource_type(req.resource_type) else {
        return;
    };
    let mut segments = req.resource_type.split("::").skip(1);
    let service = segments.next().unwrap_or("service").to_ascii_lowercase();
    let kind = segments.next().unwrap_or("resource").to_ascii_lowercase();
    for (name, attr) in &type_spec.attributes {
        if out.attributes.contains_key(name) {
            continue;
        }
        let value = if name == "Arn" {
            s(req.arn(&service, &format!("{kind}/{}", out.ref_value)))
        } else if attr.type_name.as_deref() == Some("List") {
            Value::Sequence(vec![s(format!("{}-{}", req.physical_id, name.to_ascii_lowercase()))])
        } else {
            s(format!("{}-{}", req.physical_id, name.to_ascii_lowercase().replace('.', "-")))
        };
        out.attributes.insert(name.clone(), value);
    }
}

fn plain(ref_value: String, attributes: BTreeMap<String, Value>, claims: Vec<Claim>) -> Outcome {
    Ok(Provisioned {
        ref_value,
        attributes,
        claims,
    })
}

fn valid_bucket_name(name: &str) -> bool {
    let len_ok = (3..=63).contains(&name.len());
    let chars_ok = name
        .chars()
        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '.' || c == '-');
    let ends_ok = name.chars().next().is_some_and(|c| c.is_ascii_alphanumeric())
        && name.chars().last().is_some_and(|c| c.is_ascii_alphanumeric());
    len_ok && chars_ok && ends_ok && !name.contains("..")
}

fn s3_bucket(req: &Request<'_>) -> Outcome {
    let name = match req.text("BucketName") {
        Some(n) => n,
        None => {
            let mut generated = req.physical_id.to_ascii_lowercase();
            generated.truncate(63);
            generated.trim_end_matches('-').to_string()
        }
    };
    if name.chars().any(|c| c.is_ascii_uppercase()) {
        return Err(format!("Bucket name should not contain uppercase characters: {name}"));
    }
    if !valid_bucket_name(&name) {
        return Err(format!("The specified bucket name is not valid: {name}"));
    }
    if req.env.state.registries.global_bucket_names.contains(&name) {
        return Err(format!("{name} already exists"));
    }
    let region = &req.env.region;
    plain(
        name.clone(),
        attrs([
            ("Arn", s(format!("arn:aws:s3:::{name}"))),
            ("DomainName", s(format!("{name}.s3.amazonaws.com"))),
            ("DualStackDomainName", s(format!("{name}.s3.dualstack.{region}.amazonaws.com"))),
            ("RegionalDomainName", s(format!("{name}.s3.{region}.amazonaws.com"))),
            ("WebsiteURL", s(format!("http://{name}.s3-website-{region}.amazonaws.com"))),
        ]),
        vec![Claim::BucketName(name)],
    )
}

fn cidr_message(cidr: &str) -> String {
    format!("Value ({cidr}) for parameter cidrBlock is invalid. This is not a valid CIDR block.")
}

fn vpc(req: &Request<'_>) -> Outcome {
    let Some(cidr) = req.text("CidrBlock") else {
        return Err("Either CIDR Block or IPv4 IPAM Pool and IPv4 Netmask Length must be provided".into());
    };
    match parse_ipv4_cidr(&cidr) {
        Some((_, prefix)) if (16..=28).contains(&prefix) => {}
        Some(_) => return Err(format!("The CIDR '{cidr}' is invalid.")),
        None => return Err(cidr_message(&cidr)),
    }
    let id = req.physical_id.to_string();
    plain(
        id.clone(),
        attrs([
            ("VpcId", s(id.clone())),
            ("CidrBlock", s(cidr)),
            ("DefaultSecurityGroup", s(format!("{id}-default-sg"))),
            ("DefaultNetworkAcl", s(format!("{id}-default-acl"))),
        ]),
        Vec::new(),
    )
}

fn cidr_within(inner: &str, outer: &str) -> Option<bool> {
    let (ia, ip) = parse_ipv4_cidr(inner)?;
    let (oa, op) = parse_ipv4_cidr(outer)?;
    let inside = ip >= op && (u32::from(ia) & prefix_mask(op)) == (u32::from(oa) & prefix_mask(op));
    Some(inside)
}

fn cidrs_overlap(a: &str, b: &str) -> bool {
    cidr_within(a, b).unwrap_or(false) || cidr_within(b, a).unwrap_or(false)
}

fn subnet(req: &Request<'_>) -> Outcome {
    let vpc_id = req.text("VpcId").unwrap_or_default();
    if !req.env.vpc_exists(&vpc_id) {
        return Err(format!("The vpc ID '{vpc_id}' does not exist"));
    }
    let az = match req.text("AvailabilityZone") {
        Some(az) if !req.env.az_list.contains(&az) => {
            return Err(format!(
                "Value ({az}) for parameter availabilityZone is invalid. Subnets can currently only be created in the following availability zones: {}.",
                req.env.az_list.join(", ")
            ))
        }
        Some(az) => az,
        None => req.env.az_list[0].clone(),
    };
    let cidr = req.text("CidrBlock");
    if let Some(cidr) = &cidr {
        if parse_ipv4_cidr(cidr).is_none() {
            return Err(cidr_message(cidr));
        }
        let vpc_cidr = req
            .env
            .live_of_type(&vpc_id, "AWS::EC2::VPC")
            .and_then(|v| v.attributes.get("CidrBlock"))
            .and_then(Value::scalar_text);
        if let Some(vpc_cidr) = vpc_cidr {
            if cidr_within(cidr, &vpc_cidr) != Some(true) {
                return Err(format!("The CIDR '{cidr}' is invalid."));
            }
        }
        let conflict = req.env.state.resources.values().any(|r| {
            r.resource_type == "AWS::EC2::Subnet"
                && r.attributes.get("VpcId").and_then(Value::as_str) == Some(vpc_id.as_str())
                && r.attributes
                    .get("CidrBlock")
                    .and_then(Value::as_str)
                    .is_some_and(|other| cidrs_overlap(cidr, other))
        });
        if conflict {
            return Err(format!("The CIDR '{cidr}' conflicts with another subnet"));
        }
    }
    let id = req.physical_id.to_string();
    plain(
        id.clone(),
        attrs([
            ("SubnetId", s(id)),
            ("VpcId", s(vpc_id)),
            ("AvailabilityZone", s(az)),
            ("CidrBlock", s(cidr.unwrap_or_default())),
        ]),
        Vec::new(),
    )
}

fn check_rules(req: &Request<'_>, key: &str) -> Result<(), String> {
    let Some(Value::Sequence(rules)) = req.properties.get(key) else {
        return Ok(());
    };
    for rule in rules {
        let protocol = rule.get("IpProtocol").and_then(Value::scalar_text).unwrap_or_default();
        let from = rule.get("FromPort").and_then(Value::as_f64);
        let to = rule.get("ToPort").and_then(Value::as_f64);
        if matches!(protocol.as_str(), "tcp" | "udp" | "6" | "17") {
            match (from, to) {
                (Some(f), Some(t)) if f > t || f < 0.0 || t > 65535.0 => {
                    return Err(format!("Invalid port range: {f}-{t}"));
                }
                (None, _) | (_, None) => {
                    return Err("Invalid value for portRange. Must specify both from and to ports with TCP/UDP.".into());
                }
                _ => {}
            }
        }
        if let Some(cidr) = rule.get("CidrIp").and_then(Value::scalar_text) {
            if parse_ipv4_cidr(&cidr).is_none() {
                return Err(format!("CIDR block {cidr} is malformed"));
            }
        }
        if let Some(group) = rule
            .get("SourceSecurityGroupId")
            .or_else(|| rule.get("DestinationSecurityGroupId"))
            .and_then(Value::scalar_text)
        {
            if !req.env.security_group_exists(&group) {
                return Err(format!("The security group '{group}' does not exist"));
            }
        }
    }
    Ok(())
}

fn security_group(req: &Request<'_>) -> Outcome {
    let vpc_id = req.text("VpcId");
    if let Some(v) = &vpc_id {
        if !req.env.vpc_exists(v) {
            return Err(format!("The vpc ID '{v}' does not exist"));
        }
    }
    check_rules(req, "SecurityGroupIngress")?;
    check_rules(req, "SecurityGroupEgress")?;
    let id = req.physical_id.to_string();
    let mut a = attrs([("GroupId", s(id.clone()))]);
    a.insert("VpcId".into(), s(vpc_id.unwrap_or_default()));
    plain(id, a, Vec::new())
}

/// Resolves `{{resolve:ssm:NAME}}` against the SSM registry.
fn resolve_dynamic(req: &Request<'_>, value: &str) -> Result<String, String> {
    let Some(inner) = value.strip_prefix("{{resolve:ssm:").and_then(|r| r.strip_suffix("}}")) else {
        return Ok(value.to_string());
    };
    let name = inner.rsplit_once(':').filter(|(_, v)| v.parse::<u32>().is_ok()).map_or(inner, |(n, _)| n);
    req.env
        .state
        .registries
        .ssm_parameters
        .get(name)
        .cloned()
        .ok_or_else(|| format!("Parameters: [ssm:{name}] cannot be found."))
}

fn instance(req: &Request<'_>) -> Outcome {
    let image = match req.text("ImageId") {
        Some(i) => Some(resolve_dynamic(req, &i)?),
        None if req.properties.contains_key("LaunchTemplate") => None,
        None => return Err("The request must contain the parameter ImageId".into()),
    };
    if let Some(image) = &image {
        if !req.env.state.registries.ami_catalog.contains(image) {
            return Err(format!("The image id '[{image}]' does not exist"));
        }
    }
    if let Some(key) = req.text("KeyName") {
        if !req.env.state.registries.key_pairs.contains(&key) {
            return Err(format!("The key pair '{key}' does not exist"));
        }
    }
    let mut az = req.text("AvailabilityZone").unwrap_or_else(|| req.env.az_list[0].clone());
    if let Some(subnet) = req.text("SubnetId") {
        if !req.env.subnet_exists(&subnet) {
            return Err(format!("The subnet ID '{subnet}' does not exist"));
        }
        if let Some(zone) = req
            .env
            .live_of_type(&subnet, "AWS::EC2::Subnet")
            .and_then(|r| r.attributes.get("AvailabilityZone"))
            .and_then(Value::scalar_text)
        {
            az = zone;
        }
    }
    for group in req.strings("SecurityGroupIds") {
        if !req.env.security_group_exists(&group) {
            return Err(format!("The security group '{group}' does not exist in default VPC"));
        }
    }
    if let Some(profile) = req.text("IamInstanceProfile") {
        let known = req
            .env
            .state
            .resources
            .values()
            .any(|r| r.resource_type == "AWS::IAM::InstanceProfile" && (r.ref_value == profile || r.attributes.get("Arn").and_then(Value::as_str) == Some(profile.as_str())));
        if !known {
            return Err(format!("Value ({profile}) for parameter iamInstanceProfile.name is invalid. Invalid IAM Instance Profile name"));
        }
    }
    let id = req.physical_id.to_string();
    let octet = req.seq % 250 + 4;
    plain(
        id.clone(),
        attrs([
            ("InstanceId", s(id)),
            ("AvailabilityZone", s(az)),
            ("PrivateIp", s(format!("10.0.0.{octet}"))),
            ("PublicIp", s(format!("54.0.0.{octet}"))),
            ("PrivateDnsName", s(format!("ip-10-0-0-{octet}.ec2.internal"))),
            ("PublicDnsName", s(format!("ec2-54-0-0-{octet}.compute-1.amazonaws.com"))),
        ]),
        Vec::new(),
    )
}

fn key_pair(req: &Request<'_>) -> Outcome {
    let name = req.text("KeyName").unwrap_or_default();
    if req.env.state.registries.key_pairs.contains(&name) {
        return Err(format!("The keypair '{name}' already exists."));
    }
    plain(
        name.clone(),
        attrs([("KeyPairId", s(format!("key-{}", req.physical_id)))]),
        vec![Claim::KeyPair(name)],
    )
}

fn db_instance(req: &Request<'_>) -> Outcome {
    let replica = req.properties.contains_key("SourceDBInstanceIdentifier");
    if replica && req.properties.contains_key("DBSubnetGroupName") && !req.properties.contains_key("SourceRegion") {
        return Err("DbSubnetGroupName should not be specified for read replicas that are created in the same region as the master".into());
    }
    let engine = req.text("Engine").unwrap_or_default().to_ascii_lowercase();
    if !replica && !req.properties.contains_key("DBSnapshotIdentifier") && !req.properties.contains_key("DBClusterIdentifier") {
        if engine.is_empty() {
            return Err("Property Engine cannot be empty".into());
        }
        if req.text("DBInstanceClass").is_none() {
            return Err("Property DBInstanceClass cannot be empty".into());
        }
        if req.text("MasterUsername").is_none() {
            return Err("The parameter MasterUsername must be provided and must not be blank.".into());
        }
        if req.text("MasterUserPassword").is_none() && !req.flag("ManageMasterUserPassword") {
            return Err("The parameter MasterUserPassword must be provided and must not be blank.".into());
        }
        if !engine.starts_with("aurora") && req.text("AllocatedStorage").is_none() {
            return Err("The parameter AllocatedStorage must be provided and must not be blank.".into());
        }
        if let Some(pw) = req.text("MasterUserPassword") {
            if pw.len() < 8 {
                return Err("The parameter MasterUserPassword is not a valid password because it is shorter than 8 characters.".into());
            }
        }
    }
    let name = req.name_or_generated("DBInstanceIdentifier").to_ascii_lowercase();
    let mut claims = Vec::new();
    req.claim_name(&mut claims, &name)?;
    let port = if engine.contains("postgres") { "5432" } else { "3306" };
    plain(
        name.clone(),
        attrs([
            ("Endpoint.Address", s(format!("{name}.abcdefghijkl.{}.rds.amazonaws.com", req.env.region))),
            ("Endpoint.Port", s(port)),
            ("DBInstanceArn", s(req.arn("rds", &format!("db:{name}")))),
        ]),
        claims,
    )
}

fn dynamodb_table(req: &Request<'_>) -> Outcome {
    let invalid = |detail: &str| Err(format!("One or more parameter values were invalid: {detail}"));
    let keys: Vec<(String, String)> = match req.properties.get("KeySchema") {
        Some(Value::Sequence(items)) => items
            .iter()
            .map(|k| {
                (
                    k.get("AttributeName").and_then(Value::scalar_text).unwrap_or_default(),
                    k.get("KeyType").and_then(Value::scalar_text).unwrap_or_default(),
                )
            })
            .collect(),
        _ => return invalid("KeySchema must be a list"),
    };
    match keys.as_slice() {
        [(_, h)] if h == "HASH" => {}
        [(_, h), (_, r)] if h == "HASH" && r == "RANGE" => {}
        _ => return invalid("Invalid KeySchema: The first KeySchemaElement is not a HASH key type"),
    }
    let defined: BTreeMap<String, String> = match req.properties.get("AttributeDefinitions") {
        Some(Value::Sequence(items)) => items
            .iter()
            .map(|d| {
                (
                    d.get("AttributeName").and_then(Value::scalar_text).unwrap_or_default(),
                    d.get("AttributeType").and_then(Value::scalar_text).unwrap_or_default(),
                )
            })
            .collect(),
        _ => BTreeMap::new(),
    };
    let mut used: Vec<String> = keys.iter().map(|(n, _)| n.clone()).collect();
    for index_key in ["GlobalSecondaryIndexes", "LocalSecondaryIndexes"] {
        if let Some(Value::Sequence(indexes)) = req.properties.get(index_key) {
            for idx in indexes {
                if let Some(Value::Sequence(schema)) = idx.get("KeySchema") {
                    used.extend(schema.iter().filter_map(|k| k.get("AttributeName").and_then(Value::scalar_text)));
                }
            }
        }
    }
    for name in &used {
        if !defined.contains_key(name) {
            return invalid("Some index key attributes are not defined in AttributeDefinitions. Keys: [{name}]".replace("{name}", name).as_str());
        }
    }
    if defined.keys().any(|d| !used.contains(d)) {
        return invalid("Number of attributes in KeySchema does not exactly match number of attributes defined in AttributeDefinitions");
    }
    if defined.values().any(|t| !matches!(t.as_str(), "S" | "N" | "B")) {
        return invalid("Member must satisfy enum value set: [B, N, S]");
    }
    let billing = req.text("BillingMode").unwrap_or_else(|| "PROVISIONED".into());
    let throughput = req.properties.get("ProvisionedThroughput");
    if billing == "PROVISIONED" && throughput.is_none() {
        return invalid("ReadCapacityUnits and WriteCapacityUnits must both be specified when BillingMode is PROVISIONED");
    }
    if billing == "PAY_PER_REQUEST" && throughput.is_some() {
        return invalid("Neither ReadCapacityUnits nor WriteCapacityUnits can be specified when BillingMode is PAY_PER_REQUEST");
    }
    let name = req.name_or_generated("TableName");
    let mut claims = Vec::new();
    req.claim_name(&mut claims, &name)?;
    plain(
        name.clone(),
        attrs([
            ("Arn", s(req.arn("dynamodb", &format!("table/{name}")))),
            ("StreamArn", s(req.arn("dynamodb", &format!("table/{name}/stream/1970-01-01T00:00:00.000")))),
        ]),
        claims,
    )
}

fn sqs_queue(req: &Request<'_>) -> Outcome {
    let fifo = req.flag("FifoQueue");
    let name = match req.text("QueueName") {
        Some(n) => n,
        None if fifo => format!("{}.fifo", req.physical_id),
        None => req.physical_id.to_string(),
    };
    if fifo != name.ends_with(".fifo") {
        return Err("The name of a FIFO queue can only include alphanumeric characters, hyphens, or underscores, must end with .fifo suffix and be 1 to 80 in length".into());
    }
    if let Some(v) = req.number("VisibilityTimeout")? {
        if !(0.0..=43200.0).contains(&v) {
            return Err(format!("Invalid value for the parameter VisibilityTimeout: {v}"));
        }
    }
    if let Some(v) = req.number("MessageRetentionPeriod")? {
        if !(60.0..=1_209_600.0).contains(&v) {
            return Err(format!("Invalid value for the parameter MessageRetentionPeriod: {v}"));
        }
    }
    let mut claims = Vec::new();
    req.claim_name(&mut claims, &name)?;
    let url = format!("https://sqs.{}.amazonaws.com/{}/{name}", req.env.region, req.env.account_id);
    plain(
        url.clone(),
        attrs([
            ("Arn", s(format!("arn:aws:sqs:{}:{}:{name}", req.env.region, req.env.account_id))),
            ("QueueName", s(name)),
            ("QueueUrl", s(url)),
        ]),
        claims,
    )
}

fn sns_topic(req: &Request<'_>) -> Outcome {
    let fifo = req.flag("FifoTopic");
    let name = match req.text("TopicName") {
        Some(n) => n,
        None if fifo => format!("{}.fifo", req.physical_id),
        None => req.physical_id.to_string(),
    };
    if fifo != name.ends_with(".fifo") {
        return Err("Invalid parameter: Topic Name".into());
    }
    if let Some(Value::Sequence(subs)) = req.properties.get("Subscription") {
        for sub in subs {
            let protocol = sub.get("Protocol").and_then(Value::scalar_text).unwrap_or_default();
            check_sns_protocol(&protocol)?;
        }
    }
    let arn = format!("arn:aws:sns:{}:{}:{name}", req.env.region, req.env.account_id);
    plain(
        arn.clone(),
        attrs([("TopicArn", s(arn)), ("TopicName", s(name))]),
        Vec::new(),
    )
}

fn check_sns_protocol(protocol: &str) -> Result<(), String> {
    const PROTOCOLS: &[&str] = &["http", "https", "email", "email-json", "sms", "sqs", "application", "lambda", "firehose"];
    if PROTOCOLS.contains(&protocol) {
        Ok(())
    } else {
        Err(format!("Invalid parameter: Amazon SNS does not support this protocol string: {protocol}"))
    }
}

fn sns_subscription(req: &Request<'_>) -> Outcome {
    let protocol = req.text("Protocol").unwrap_or_default();
    check_sns_protocol(&protocol)?;
    let topic = req.text("TopicArn").unwrap_or_default();
    if req.env.live_of_type(&topic, "AWS::SNS::Topic").is_none() {
        return Err(format!("Invalid parameter: TopicArn (Topic does not exist: {topic})"));
    }
    let Some(endpoint) = req.text("Endpoint") else {
        return Err("Invalid parameter: Endpoint".into());
    };
    if protocol.starts_with("email") && !endpoint.contains('@') {
        return Err("Invalid parameter: Email address".into());
    }
    let arn = format!("{topic}:{}", req.physical_id);
    plain(arn.clone(), attrs([("Arn", s(arn))]), Vec::new())
}

/// Runtimes Lambda refuses for new functions, with the suggested replacement.
const DEPRECATED_RUNTIMES: &[(&str, &str)] = &[
    ("python2.7", "python3.12"),
    ("python3.6", "python3.12"),
    ("python3.7", "python3.12"),
    ("python3.8", "python3.12"),
    ("nodejs", "nodejs20.x"),
    ("nodejs4.3", "nodejs20.x"),
    ("nodejs6.10", "nodejs20.x"),
    ("nodejs8.10", "nodejs20.x"),
    ("nodejs10.x", "nodejs20.x"),
    ("nodejs12.x", "nodejs20.x"),
    ("nodejs14.x", "nodejs20.x"),
    ("dotnetcore1.0", "dotnet8"),
    ("dotnetcore2.0", "dotnet8"),
    ("dotnetcore2.1", "dotnet8"),
    ("dotnetcore3.1", "dotnet8"),
    ("ruby2.5", "ruby3.3"),
    ("ruby2.7", "ruby3.3"),
    ("go1.x", "provided.al2023"),
    ("java8", "java21"),
];

fn lambda_function(req: &Request<'_>) -> Outcome {
    let role = req.text("Role").unwrap_or_default();
    let role_ok = role.starts_with("arn:aws:iam::") && role.contains(":role/");
    if !role_ok {
        return Err(format!(
            "1 validation error detected: Value '{role}' at 'role' failed to satisfy constraint: Member must satisfy regular expression pattern: arn:(aws[a-zA-Z-]*)?:iam::\\d{{12}}:role/?[a-zA-Z_0-9+=,.@\\-_/]+"
        ));
    }
    let image = req.text("PackageType").as_deref() == Some("Image");
    let runtime = req.text("Runtime");
    if let Some(rt) = &runtime {
        if let Some((_, suggested)) = DEPRECATED_RUNTIMES.iter().find(|(old, _)| old == rt) {
            return Err(format!(
                "The runtime parameter of {rt} is no longer supported for creating or updating AWS Lambda functions. We recommend you use the new runtime ({suggested}) while creating or updating functions."
            ));
        }
    }
    if !image {
        if runtime.is_none() {
            return Err("Runtime and Handler are mandatory parameters for functions created with deployment packages.".into());
        }
        if req.text("Handler").is_none() {
            return Err("Runtime and Handler are mandatory parameters for functions created with deployment packages.".into());
        }
    }
    let code = req.properties.get("Code");
    let bucket = code.and_then(|c| c.get("S3Bucket")).and_then(Value::scalar_text);
    let zip = code.and_then(|c| c.get("ZipFile")).is_some();
    let image_uri = code.and_then(|c| c.get("ImageUri")).is_some();
    match (bucket, zip, image_uri) {
        (Some(b), false, false) => {
            if code.and_then(|c| c.get("S3Key")).is_none() {
                return Err("Please provide a source for function code.".into());
            }
            if !req.env.state.registries.global_bucket_names.contains(&b) {
                return Err(format!(
                    "Error occurred while GetObject. S3 Error Code: NoSuchBucket. S3 Error Message: The specified bucket {b} does not exist"
                ));
            }
        }
        (None, true, false) => {
            let rt = runtime.clone().unwrap_or_default();
            if !(rt.starts_with("python") || rt.starts_with("nodejs")) {
                return Err(format!("ZipFile can only be used when Runtime is set to either of nodejs or python runtimes, not {rt}"));
            }
        }
        (None, false, true) if image => {}
        _ => return Err("Please provide a source for function code.".into()),
    }
    if let Some(t) = req.number("Timeout")? {
        if !(1.0..=900.0).contains(&t) {
            return Err(format!("1 validation error detected: Value '{t}' at 'timeout' failed to satisfy constraint: Member must have value less than or equal to 900"));
        }
    }
    if let Some(m) = req.number("MemorySize")? {
        if !(128.0..=10240.0).contains(&m) {
            return Err(format!("1 validation error detected: Value '{m}' at 'memorySize' failed to satisfy constraint: Member must have value between 128 and 10240"));
        }
    }
    let name = req.name_or_generated("FunctionName");
    let mut claims = Vec::new();
    req.claim_name(&mut claims, &name)?;
    plain(
        name.clone(),
        attrs([("Arn", s(req.arn("lambda", &format!("function:{name}"))))]),
        claims,
    )
}

fn has_statement(doc: Option<&Value>) -> bool {
    match doc {
        Some(Value::Map(m)) => m.contains_key("Statement"),
        // Policies given as JSON strings are accepted unparsed.
        Some(Value::String(_)) => true,
        _ => false,
    }
}

fn iam_role(req: &Request<'_>) -> Outcome {
    if !has_statement(req.properties.get("AssumeRolePolicyDocument")) {
        return Err("Invalid principal in policy: AssumeRolePolicyDocument must contain a Statement".into());
    }
    for arn in req.strings("ManagedPolicyArns") {
        if !arn.starts_with("arn:aws:iam::") {
            return Err(format!("Policy {arn} does not exist or is not attachable."));
        }
    }
    if let Some(Value::Sequence(policies)) = req.properties.get("Policies") {
        for p in policies {
            if p.get("PolicyName").is_none() || !has_statement(p.get("PolicyDocument")) {
                return Err("Syntax errors in policy.".into());
            }
        }
    }
    let name = req.name_or_generated("RoleName");
    if name.len() > 64 {
        return Err(format!("1 validation error detected: Value '{name}' at 'roleName' failed to satisfy constraint: Member must have length less than or equal to 64"));
    }
    let mut claims = Vec::new();
    req.claim_name(&mut claims, &name)?;
    let path = req.text("Path").unwrap_or_else(|| "/".into());
    plain(
        name.clone(),
        attrs([
            ("Arn", s(format!("arn:aws:iam::{}:role{path}{name}", req.env.account_id))),
            ("RoleId", s(format!("AROA{}", req.seq + 1000))),
        ]),
        claims,
    )
}

fn iam_policy(req: &Request<'_>) -> Outcome {
    if ["Roles", "Users", "Groups"].iter().all(|k| req.strings(k).is_empty()) {
        return Err("At least one of [Groups,Roles,Users] must be non-empty.".into());
    }
    if !has_statement(req.properties.get("PolicyDocument")) {
        return Err("Syntax errors in policy.".into());
    }
    plain(req.physical_id.to_string(), BTreeMap::new(), Vec::new())
}

fn autoscaling_group(req: &Request<'_>) -> Outcome {
    let min = req.number("MinSize")?.unwrap_or(0.0);
    let max = req.number("MaxSize")?.unwrap_or(0.0);
    if min > max {
        return Err(format!("Max bound, {max}, must be greater than or equal to min bound, {min}"));
    }
    if let Some(d) = req.number("DesiredCapacity")? {
        if d < min || d > max {
            return Err(format!("Desired capacity:{d} must be between the specified min size:{min} and max size:{max}"));
        }
    }
    let launch = ["LaunchTemplate", "LaunchConfigurationName", "MixedInstancesPolicy", "InstanceId"]
        .iter()
        .any(|k| req.properties.contains_key(*k));
    if !launch {
        return Err("Valid requests must contain either LaunchTemplate, LaunchConfigurationName, InstanceId or MixedInstancesPolicy parameter.".into());
    }
    let subnets = req.strings("VPCZoneIdentifier");
    if subnets.is_empty() && req.strings("AvailabilityZones").is_empty() {
        return Err("At least one Availability Zone or VPC Subnet is required.".into());
    }
    for subnet in &subnets {
        if !req.env.subnet_exists(subnet) {
            return Err(format!("The subnet ID '{subnet}' does not exist"));
        }
    }
    let name = req.name_or_generated("AutoScalingGroupName");
    let mut claims = Vec::new();
    req.claim_name(&mut claims, &name)?;
    plain(name, BTreeMap::new(), claims)
}

const RETENTION_DAYS: &[u32] = &[
    1, 3, 5, 7, 14, 30, 60, 90, 120, 150, 180, 365, 400, 545, 731, 1096, 1827, 2192, 2557, 2922, 3288, 3653,
];

fn log_group(req: &Request<'_>) -> Outcome {
    if let Some(days) = req.number("RetentionInDays")? {
        if days.fract() != 0.0 || !RETENTION_DAYS.contains(&(days as u32)) {
            return Err(format!(
                "1 validation error detected: Value '{days}' at 'retentionInDays' failed to satisfy constraint: Member must satisfy enum value set"
            ));
        }
    }
    let name = req.name_or_generated("LogGroupName");
    let mut claims = Vec::new();
    req.claim_name(&mut claims, &name)?;
    plain(
        name.clone(),
        attrs([("Arn", s(req.arn("logs", &format!("log-group:{name}:*"))))]),
        claims,
    )
}

fn ssm_parameter(req: &Request<'_>) -> Outcome {
    let ty = req.text("Type").unwrap_or_default();
    if !matches!(ty.as_str(), "String" | "StringList") {
        return Err(format!("SSM Parameter type {ty} is not supported; use String or StringList"));
    }
    let name = req.name_or_generated("Name");
    let value = req.text("Value").unwrap_or_default();
    if req.env.state.registries.ssm_parameters.contains_key(&name) {
        return Err(format!("The parameter {name} already exists."));
    }
    plain(
        name.clone(),
        attrs([("Type", s(ty)), ("Value", s(value.clone()))]),
        vec![Claim::SsmParameter(name, value)],
    )
}

fn kinesis_stream(req: &Request<'_>) -> Outcome {
    let on_demand = req
        .properties
        .get("StreamModeDetails")
        .and_then(|m| m.get("StreamMode"))
        .and_then(Value::as_str)
        == Some("ON_DEMAND");
    match req.number("ShardCount")? {
        Some(n) if n < 1.0 => return Err("ShardCount must be at least 1".into()),
        None if !on_demand => return Err("ShardCount is required when StreamMode is PROVISIONED".into()),
        _ => {}
    }
    let name = req.name_or_generated("Name");
    let mut claims = Vec::new();
    req.claim_name(&mut claims, &name)?;
    plain(
        name.clone(),
        attrs([("Arn", s(req.arn("kinesis", &format!("stream/{name}"))))]),
        claims,
    )
}
