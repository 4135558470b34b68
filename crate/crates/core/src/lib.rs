//! Deployability-focused CloudFormation generation and evaluation.
//!
//! A language model is driven through a fail/learn/refine loop. Each candidate
//! template is checked in three stages (format lint, syntax check against a
//! resource specification, and a simulated stack deployment) and the failing
//! stage produces escalating feedback. Benchmark runs are scored with
//! `passItr@n`, an error taxonomy, intent coverage and policy compliance.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod llm;
pub mod orchestrator;
pub mod sim;
pub mod template;
pub mod trust;
pub mod validate;

pub use bench::{build_report, classify_error, load_manifest, pass_itr, ErrorCategory, Report, Task};
pub use llm::{ChatMessage, Conversation, GenerationSettings, Role, Usage};
pub use orchestrator::{run_task, FeedbackTier, IterationRecord, RunOptions, RunRecord, StageBudget};
pub use sim::{deploy, DeploymentFailure, EnvConfig, SimEnvironment, StackState, StackStatus};
pub use template::{
    classify_difficulty, dependency_graph, extract_code_block, measure, parse_template, DifficultyLevel,
    SourceFormat, Template, TemplateMetrics, Value,
};
pub use validate::{check_format, check_syntax, ResourceSpec, Stage, StageReport, Violation};
