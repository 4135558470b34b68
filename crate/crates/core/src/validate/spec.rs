//! Resource specification in the shape of the published CloudFormation
//! resource-specification document (subset of fields).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use indexmap::IndexMap;
use serde::Deserialize;

const BUNDLED_SPEC: &str = include_str!("../../data/resource-spec.json");

#[derive(Debug, thiserror::Error)]
pub enum SpecLoadError {
    #[error("cannot read resource spec {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed resource spec: {0}")]
    Malformed(String),
    #[error("invalid resource spec entry {entry}: {message}")]
    InvalidEntry { entry: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct PropertySpec {
    #[serde(default)]
    pub primitive_type: Option<String>,
    /// `List`, `Map`, or the name of a property type.
    #[serde(default, rename = "Type")]
    pub type_name: Option<String>,
    #[serde(default)]
    pub item_type: Option<String>,
    #[serde(default)]
    pub primitive_item_type: Option<String>,
    #[serde(default)]
    pub required: bool,
}

impl PropertySpec {
    /// Name of the nested property type describing this value (or its items).
    pub fn nested_type(&self) -> Option<&str> {
        match self.type_name.as_deref() {
            Some("List") | Some("Map") => self.item_type.as_deref(),
            other => other,
        }
    }

    pub fn is_collection(&self) -> bool {
        matches!(self.type_name.as_deref(), Some("List") | Some("Map"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct AttributeSpec {
    #[serde(default)]
    pub primitive_type: Option<String>,
    #[serde(default, rename = "Type")]
    pub type_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct ResourceTypeSpec {
    #[serde(default)]
    pub properties: IndexMap<String, PropertySpec>,
    #[serde(default)]
    pub attributes: IndexMap<String, AttributeSpec>,
}

impl ResourceTypeSpec {
    pub fn required_properties(&self) -> impl Iterator<Item = &str> {
        self.properties.iter().filter(|(_, p)| p.required).map(|(n, _)| n.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "PascalCase")]
struct PropertyTypeSpec {
    #[serde(default)]
    properties: IndexMap<String, PropertySpec>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "PascalCase")]
struct SpecDocument {
    #[serde(default)]
    resource_specification_version: Option<String>,
    #[serde(default)]
    property_types: BTreeMap<String, PropertyTypeSpec>,
    resource_types: BTreeMap<String, ResourceTypeSpec>,
}

/// Immutable after load; share it across workers by reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceSpec {
    pub version: Option<String>,
    pub resource_types: BTreeMap<String, ResourceTypeSpec>,
    property_types: BTreeMap<String, PropertyTypeSpec>,
}

impl ResourceSpec {
    pub fn from_json_str(text: &str) -> Result<Self, SpecLoadError> {
        let doc: SpecDocument = serde_json::from_str(text).map_err(|e| SpecLoadError::Malformed(e.to_string()))?;
        let spec = ResourceSpec {
            version: doc.resource_specification_version,
            resource_types: doc.resource_types,
            property_types: doc.property_types,
        };
        spec.check_references()?;
        Ok(spec)
    }

    /// The spec shipped with the crate.
    pub fn bundled() -> &'static ResourceSpec {
        static SPEC: OnceLock<ResourceSpec> = OnceLock::new();
        SPEC.get_or_init(|| ResourceSpec::from_json_str(BUNDLED_SPEC).expect("bundled resource spec is valid"))
    }

    pub fn resource_type(&self, name: &str) -> Option<&ResourceTypeSpec> {
        self.resource_types.get(name)
    }

    /// Properties of a nested property type as referenced from `owner`
    /// (a resource type or another property type).
    pub fn nested_properties(&self, owner: &str, type_ref: &str) -> Option<&IndexMap<String, PropertySpec>> {
        let resource = owner.split('.').next().unwrap_or(owner);
        self.property_types
            .get(&format!("{resource}.{type_ref}"))
            .or_else(|| self.property_types.get(type_ref))
            .map(|p| &p.properties)
    }

    /// Key under which a nested type is stored, used as the owner for deeper lookups.
    pub fn nested_owner(&self, owner: &str, type_ref: &str) -> String {
        let resource = owner.split('.').next().unwrap_or(owner);
        let qualified = format!("{resource}.{type_ref}");
        if self.property_types.contains_key(&qualified) {
            qualified
        } else {
            type_ref.to_string()
        }
    }

    fn check_references(&self) -> Result<(), SpecLoadError> {
        let owners = self
            .resource_types
            .iter()
            .map(|(n, r)| (n.as_str(), &r.properties))
            .chain(self.property_types.iter().map(|(n, p)| (n.as_str(), &p.properties)));
        for (owner, props) in owners {
            for (name, prop) in props {
                let entry = || format!("{owner}.{name}");
                if prop.primitive_type.is_none() && prop.type_name.is_none() {
                    return Err(SpecLoadError::InvalidEntry {
                        entry: entry(),
                        message: "needs PrimitiveType or Type".into(),
                    });
                }
                if prop.is_collection() && prop.item_type.is_none() && prop.primitive_item_type.is_none() {
                    return Err(SpecLoadError::InvalidEntry {
                        entry: entry(),
                        message: "collection needs ItemType or PrimitiveItemType".into(),
                    });
                }
                if let Some(nested) = prop.nested_type() {
                    if self.nested_properties(owner, nested).is_none() {
                        return Err(SpecLoadError::InvalidEntry {
                            entry: entry(),
                            message: format!("unknown property type {nested}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn load_resource_spec(path: impl AsRef<Path>) -> Result<ResourceSpec, SpecLoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SpecLoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ResourceSpec::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_spec_size_and_services() {
        // Independent count straight from the JSON text.
        let raw: serde_json::Value = serde_json::from_str(BUNDLED_SPEC).unwrap();
        let count = raw["ResourceTypes"].as_object().unwrap().len();
        assert!(count >= 40);
        let spec = ResourceSpec::bundled();
        assert_eq!(spec.resource_types.len(), count);
        for prefix in [
            "AWS::IAM::", "AWS::Lambda::", "AWS::S3::", "AWS::EC2::Instance", "AWS::EC2::VPC", "AWS::EC2::Subnet",
            "AWS::EC2::SecurityGroup", "AWS::SNS::", "AWS::SQS::", "AWS::DynamoDB::", "AWS::RDS::", "AWS::CloudWatch::",
            "AWS::Logs::", "AWS::SSM::", "AWS::KMS::", "AWS::Events::", "AWS::Kinesis::", "AWS::ApiGateway::",
            "AWS::AutoScaling::", "AWS::EFS::", "AWS::SecretsManager::",
        ] {
            assert!(spec.resource_types.keys().any(|k| k.starts_with(prefix)), "{prefix}");
        }
    }

    #[test]
    fn sns_subscription_entry() {
        let sub = ResourceSpec::bundled().resource_type("AWS::SNS::Subscription").unwrap();
        assert!(sub.properties.contains_key("Endpoint"));
        assert!(sub.properties["Protocol"].required);
    }

    #[test]
    fn nested_lookup() {
        let spec = ResourceSpec::bundled();
        let sub = spec.nested_properties("AWS::SNS::Topic", "Subscription").unwrap();
        assert!(sub["Endpoint"].required);
        assert!(spec.nested_properties("AWS::S3::Bucket", "Tag").unwrap().contains_key("Key"));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_resource_spec("/nonexistent/spec.json"), Err(SpecLoadError::Io { .. })));
    }

    #[test]
    fn dangling_property_type() {
        let text = r#"{"ResourceTypes": {"X::Y::Z": {"Properties": {"A": {"Type": "Nope"}}}}}"#;
        match ResourceSpec::from_json_str(text) {
            Err(SpecLoadError::InvalidEntry { entry, .. }) => assert_eq!(entry, "X::Y::Z.A"),
            other => panic!("{other:?}"),
        }
    }
}
