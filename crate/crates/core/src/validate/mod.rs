//! Stage 1 (format lint) and stage 2 (syntax check) plus the shared stage report.

mod format;
mod spec;
mod syntax;

use serde::{Deserialize, Serialize};

use crate::sim::DeploymentFailure;

pub use format::{check_format, FormatRule, FormatViolation};
pub use spec::{load_resource_spec, PropertySpec, ResourceSpec, ResourceTypeSpec, SpecLoadError};
pub use syntax::{check_syntax, syntax_report_for_parse_error, SyntaxRule, SyntaxViolation, PSEUDO_PARAMETERS};

/// Validation stages in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Format,
    Syntax,
    Deployment,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Format, Stage::Syntax, Stage::Deployment];

    /// Error-type label used in general feedback.
    pub fn error_label(self) -> &'static str {
        match self {
            Stage::Format => "YAML Syntax",
            Stage::Syntax => "CloudFormation Template Syntax",
            Stage::Deployment => "Deployment",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Format => "Format",
            Stage::Syntax => "Syntax",
            Stage::Deployment => "Deployment",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Violation {
    Format(FormatViolation),
    Syntax(SyntaxViolation),
    Deployment(DeploymentFailure),
}

impl Violation {
    pub fn message(&self) -> &str {
        match self {
            Violation::Format(v) => &v.message,
            Violation::Syntax(v) => &v.message,
            Violation::Deployment(v) => &v.message,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl StageReport {
    /// `passed` is derived from the violation list.
    pub fn new(stage: Stage, violations: Vec<Violation>) -> Self {
        StageReport {
            stage,
            passed: violations.is_empty(),
            violations,
        }
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.message().to_string()).collect()
    }
}
