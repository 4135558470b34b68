//! The generate, validate, feedback loop for one task.

mod human;
mod server;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bench::Task;
use crate::llm::{generate, ChatMessage, Conversation, GenerationSettings, LlmError, Provider, Role, Usage};
use crate::sim::DeploymentBackend;
use crate::template::{extract_code_block, parse_template, Template};
use crate::validate::{
    check_format, check_syntax, syntax_report_for_parse_error, FormatRule, FormatViolation, ResourceSpec, Stage,
    StageReport, Violation,
};

pub use human::{HumanError, HumanRequest, HumanResponder, ScriptedResponder, TtyResponder};
pub use server::{
    router, spawn_server, RunSummary, ServerHandle, SessionBoard, SessionDetail, SessionError, SessionSummary,
};

pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackTier {
    General,
    Detailed,
    Human,
}

impl std::fmt::Display for FeedbackTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeedbackTier::General => "general",
            FeedbackTier::Detailed => "detailed",
            FeedbackTier::Human => "human",
        })
    }
}

/// Attempts allowed per feedback tier at each validation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageBudget {
    pub general_attempts: u32,
    pub detailed_attempts: u32,
    pub human_attempts: u32,
}

impl Default for StageBudget {
    fn default() -> Self {
        StageBudget {
            general_attempts: 2,
            detailed_attempts: 4,
            human_attempts: 4,
        }
    }
}

impl StageBudget {
    pub fn per_stage_total(&self, human_enabled: bool) -> u32 {
        self.general_attempts + self.detailed_attempts + if human_enabled { self.human_attempts } else { 0 }
    }
}

/// Tier for a failure at a stage that has already failed `prior_failures`
/// times in this run, or `None` once the stage budget is spent.
pub fn next_tier(prior_failures: u32, budget: &StageBudget, human_enabled: bool) -> Option<FeedbackTier> {
    let general = budget.general_attempts;
    let detailed = general + budget.detailed_attempts;
    if prior_failures < general {
        Some(FeedbackTier::General)
    } else if prior_failures < detailed {
        Some(FeedbackTier::Detailed)
    } else if human_enabled && prior_failures < detailed + budget.human_attempts {
        Some(FeedbackTier::Human)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub tier: FeedbackTier,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("human tier requires operator feedback text")]
    MissingHumanText,
}

pub fn general_feedback(stage: Stage) -> String {
    format!("Based on the evaluation, the template contains {} Errors.", stage.error_label())
}

pub fn make_feedback(
    report: &StageReport,
    tier: FeedbackTier,
    human_text: Option<&str>,
) -> Result<FeedbackMessage, FeedbackError> {
    let text = match tier {
        FeedbackTier::General => general_feedback(report.stage),
        FeedbackTier::Detailed => {
            let mut text = general_feedback(report.stage);
            for m in report.messages() {
                text.push('\n');
                text.push_str(&m);
            }
            text
        }
        FeedbackTier::Human => match human_text {
            Some(t) if !t.trim().is_empty() => t.to_string(),
            _ => return Err(FeedbackError::MissingHumanText),
        },
    };
    Ok(FeedbackMessage { tier, text })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageReached {
    Format,
    Syntax,
    Deployment,
    Deployed,
}

impl From<Stage> for StageReached {
    fn from(s: Stage) -> Self {
        match s {
            Stage::Format => StageReached::Format,
            Stage::Syntax => StageReached::Syntax,
            Stage::Deployment => StageReached::Deployment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryMode {
    #[default]
    Full,
    LastErrorOnly,
}

impl std::str::FromStr for HistoryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(HistoryMode::Full),
            "last-error-only" => Ok(HistoryMode::LastErrorOnly),
            other => Err(format!("unknown history mode {other:?} (expected full or last-error-only)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalStatus {
    Deployed,
    BudgetExhausted,
    ProviderFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub template_text: String,
    pub stage_reached: StageReached,
    /// Messages of the failing stage; empty when deployed.
    pub violations_summary: Vec<String>,
    /// Tier chosen for this failure. Set even on the final iteration.
    pub feedback_tier_used: Option<FeedbackTier>,
    /// Feedback actually sent back; absent when the run stopped here.
    pub feedback_text: Option<String>,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub task_id: String,
    pub model_name: String,
    pub history_mode: HistoryMode,
    pub iterations: Vec<IterationRecord>,
    pub success_iteration: Option<u32>,
    pub final_status: FinalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    /// Stage of the first failed iteration, if any iteration failed.
    pub fn first_failure_stage(&self) -> Option<StageReached> {
        self.iterations
            .iter()
            .map(|i| i.stage_reached)
            .find(|s| *s != StageReached::Deployed)
    }

    /// Highest tier whose feedback was delivered during the run.
    pub fn max_tier_delivered(&self) -> Option<FeedbackTier> {
        self.iterations
            .iter()
            .filter(|i| i.feedback_text.is_some())
            .filter_map(|i| i.feedback_tier_used)
            .max()
    }
}

/// Result of running the three stages on one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    /// Reports of the stages that ran, in order; only the last may fail.
    pub reports: Vec<StageReport>,
    pub reached: StageReached,
}

impl PipelineOutcome {
    pub fn failed_report(&self) -> Option<&StageReport> {
        self.reports.last().filter(|r| !r.passed)
    }
}

pub(crate) fn extraction_failure_report(message: &str) -> StageReport {
    StageReport::new(
        Stage::Format,
        vec![Violation::Format(FormatViolation {
            line: 1,
            column: None,
            rule_id: FormatRule::ParseFailure,
            message: message.to_string(),
        })],
    )
}

/// Format, then syntax, then deployment, stopping at the first failing stage.
/// A successful deployment is deleted again before returning.
/// Format then syntax. Returns the parsed template when both pass.
pub fn check_static(text: &str, spec: &ResourceSpec) -> (PipelineOutcome, Option<Template>) {
    let mut reports = Vec::with_capacity(2);
    let format = check_format(text);
    let format_ok = format.passed;
    reports.push(format);
    if !format_ok {
        let outcome = PipelineOutcome {
            reports,
            reached: StageReached::Format,
        };
        return (outcome, None);
    }

    let template = match parse_template(text, None) {
        Ok(t) => t,
        Err(e) => {
            reports.push(syntax_report_for_parse_error(&e));
            let outcome = PipelineOutcome {
                reports,
                reached: StageReached::Syntax,
            };
            return (outcome, None);
        }
    };
    let syntax = check_syntax(&template, spec);
    let syntax_ok = syntax.passed;
    reports.push(syntax);
    let outcome = PipelineOutcome {
        reports,
        // Deployment is the next stage to run once syntax passes.
        reached: if syntax_ok { StageReached::Deployment } else { StageReached::Syntax },
    };
    (outcome, syntax_ok.then_some(template))
}

pub fn run_pipeline(text: &str, spec: &ResourceSpec, backend: &mut dyn DeploymentBackend) -> PipelineOutcome {
    let (outcome, template) = check_static(text, spec);
    let Some(template) = template else {
        return outcome;
    };
    let mut reports = outcome.reports;

    match backend.create_stack(&template, &BTreeMap::new()) {
        Ok(state) => {
            if let Err(e) = backend.delete_stack(&state.stack_id) {
                tracing::warn!(error = %e, "cleanup of deployed stack failed");
            }
            reports.push(StageReport::new(Stage::Deployment, Vec::new()));
            PipelineOutcome {
                reports,
                reached: StageReached::Deployed,
            }
        }
        Err(failure) => {
            reports.push(StageReport::new(Stage::Deployment, vec![Violation::Deployment(failure)]));
            PipelineOutcome {
                reports,
                reached: StageReached::Deployment,
            }
        }
    }
}

pub type EnvFactory<'a> = dyn Fn() -> Box<dyn DeploymentBackend> + Send + Sync + 'a;

#[derive(Clone)]
pub struct RunOptions {
    pub history_mode: HistoryMode,
    pub settings: GenerationSettings,
    pub system_prompt: String,
    /// Enables the human tier.
    pub human: Option<Arc<dyn HumanResponder>>,
    pub global_cap: u32,
    pub global_cap_human: u32,
    pub spec: Arc<ResourceSpec>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            history_mode: HistoryMode::Full,
            settings: GenerationSettings::default(),
            system_prompt: crate::llm::build_system_prompt(&Default::default()),
            human: None,
            global_cap: 15,
            global_cap_human: 25,
            spec: Arc::new(ResourceSpec::bundled().clone()),
        }
    }
}

impl std::fmt::Debug for RunOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunOptions")
            .field("history_mode", &self.history_mode)
            .field("settings", &self.settings)
            .field("human", &self.human.is_some())
            .field("global_cap", &self.global_cap)
            .field("global_cap_human", &self.global_cap_human)
            .finish_non_exhaustive()
    }
}

impl RunOptions {
    pub fn effective_cap(&self) -> u32 {
        if self.human.is_some() {
            self.global_cap_human
        } else {
            self.global_cap
        }
    }
}

fn user_message(text: String) -> ChatMessage {
    ChatMessage::new(Role::User, text).expect("feedback text is never empty")
}

/// Drives one task to deployment or budget exhaustion.
pub fn run_task(
    task: &Task,
    provider: &dyn Provider,
    env_factory: &EnvFactory<'_>,
    budgets: &StageBudget,
    options: &RunOptions,
) -> RunRecord {
    let mut record = RunRecord {
        schema: RUN_SCHEMA_VERSION,
        task_id: task.task_id.clone(),
        model_name: options.settings.model_name.clone(),
        history_mode: options.history_mode,
        iterations: Vec::new(),
        success_iteration: None,
        final_status: FinalStatus::BudgetExhausted,
        error: None,
    };
    let mut conversation = match Conversation::new(&options.system_prompt, &task.prompt) {
        Ok(c) => c,
        Err(e) => {
            record.final_status = FinalStatus::ProviderFailed;
            record.error = Some(e.to_string());
            return record;
        }
    };
    let human_enabled = options.human.is_some();
    let cap = options.effective_cap();
    let mut failures: HashMap<Stage, u32> = HashMap::new();

    for index in 1..=cap {
        let (reply, usage) = match generate(provider, &conversation, &options.settings) {
            Ok(r) => r,
            Err(e) => {
                record.final_status = FinalStatus::ProviderFailed;
                record.error = Some(provider_error_text(&e));
                return record;
            }
        };

        let (template_text, outcome) = match extract_code_block(&reply.content) {
            Ok(text) => {
                let mut backend = env_factory();
                let outcome = run_pipeline(&text, &options.spec, backend.as_mut());
                (text, outcome)
            }
            Err(e) => (
                String::new(),
                PipelineOutcome {
                    reports: vec![extraction_failure_report(&e.to_string())],
                    reached: StageReached::Format,
                },
            ),
        };

        let Some(report) = outcome.failed_report() else {
            record.iterations.push(IterationRecord {
                index,
                template_text,
                stage_reached: StageReached::Deployed,
                violations_summary: Vec::new(),
                feedback_tier_used: None,
                feedback_text: None,
                usage,
            });
            record.success_iteration = Some(index);
            record.final_status = FinalStatus::Deployed;
            return record;
        };

        let stage = report.stage;
        let prior = failures.entry(stage).or_insert(0);
        let tier = next_tier(*prior, budgets, human_enabled);
        *prior += 1;
        let stage_spent = *prior >= budgets.per_stage_total(human_enabled);
        let stop = tier.is_none() || stage_spent || index == cap;

        let mut iteration = IterationRecord {
            index,
            template_text: template_text.clone(),
            stage_reached: outcome.reached,
            violations_summary: report.messages(),
            feedback_tier_used: tier,
            feedback_text: None,
            usage,
        };
        if stop {
            record.iterations.push(iteration);
            return record;
        }
        let tier = tier.expect("checked above");

        let human_text = if tier == FeedbackTier::Human {
            let responder = options.human.as_ref().expect("human tier implies a responder");
            let request = HumanRequest {
                task_id: task.task_id.clone(),
                stage,
                attempt: index,
                violations: report.messages(),
                conversation: {
                    let mut c = conversation.clone();
                    // The reply is already validated as non-empty.
                    let _ = c.push(reply.clone());
                    c
                },
                current_template: template_text,
                reference_template: task.reference_text(),
            };
            match responder.request(request) {
                Ok(text) => Some(text),
                Err(e) => {
                    record.iterations.push(iteration);
                    record.final_status = FinalStatus::ProviderFailed;
                    record.error = Some(format!("human feedback unavailable: {e}"));
                    return record;
                }
            }
        } else {
            None
        };
        let feedback = match make_feedback(report, tier, human_text.as_deref()) {
            Ok(f) => f,
            Err(e) => {
                record.iterations.push(iteration);
                record.final_status = FinalStatus::ProviderFailed;
                record.error = Some(e.to_string());
                return record;
            }
        };
        iteration.feedback_text = Some(feedback.text.clone());
        record.iterations.push(iteration);

        match options.history_mode {
            HistoryMode::Full => {
                conversation.push(reply).expect("assistant turn follows user turn");
                conversation
                    .push(user_message(feedback.text))
                    .expect("user turn follows assistant turn");
            }
            HistoryMode::LastErrorOnly => {
                let mut fresh = Conversation::new(&options.system_prompt, &task.prompt).expect("validated at start");
                fresh.push(reply).expect("assistant turn follows user turn");
                fresh
                    .push(user_message(feedback.text))
                    .expect("user turn follows assistant turn");
                conversation = fresh;
            }
        }
    }
    record
}

fn provider_error_text(e: &LlmError) -> String {
    e.to_string()
}
