//! Benchmark manifests, pass@iteration metrics, error taxonomy and reports.

mod metrics;
mod report;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::orchestrator::{run_pipeline, StageReached};
use crate::sim::{EnvConfig, SimEnvironment};
use crate::template::{classify_difficulty, measure, DifficultyLevel};
use crate::validate::ResourceSpec;

pub use metrics::{classify_error, pass_itr, ErrorCategory, ErrorKind, MetricError};
pub use report::{build_report, render_text, FeedbackAttribution, ModelReport, Report, StageDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub prompt: String,
    pub reference_path: Option<PathBuf>,
    pub difficulty: DifficultyLevel,
    pub services: Vec<String>,
    pub intent_path: Option<PathBuf>,
}

impl Task {
    /// A task with no reference template, for ad-hoc prompts.
    pub fn inline(task_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Task {
            task_id: task_id.into(),
            prompt: prompt.into(),
            reference_path: None,
            difficulty: DifficultyLevel::new(1).expect("1 is a valid level"),
            services: Vec::new(),
            intent_path: None,
        }
    }

    pub fn reference_text(&self) -> Option<String> {
        self.reference_path.as_ref().and_then(|p| std::fs::read_to_string(p).ok())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    prompt: String,
    reference: PathBuf,
    #[serde(default)]
    services: Vec<String>,
    difficulty: Option<u8>,
    intent: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntryError {
    pub task_id: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest: {0}")]
    Malformed(String),
    #[error("invalid manifest entries:\n{}", .0.iter().map(|e| format!("  {}: {}", e.task_id, e.message)).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<EntryError>),
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub tasks: Vec<Task>,
    /// Non-fatal findings, such as a stored difficulty that disagrees with
    /// the recomputed one.
    pub warnings: Vec<String>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    load_manifest_with(path, &EnvConfig::default(), ResourceSpec::bundled())
}

/// Loads and eagerly validates every entry: its reference must exist, parse
/// and pass all three stages in a fresh environment built from `env`.
pub fn load_manifest_with(
    path: impl AsRef<Path>,
    env: &EnvConfig,
    spec: &ResourceSpec,
) -> Result<Manifest, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let entries: Vec<ManifestEntry> = serde_yaml::from_str(&text).map_err(|e| ManifestError::Malformed(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));

    let mut tasks = Vec::new();
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    for entry in entries {
        let fail = |message: String| EntryError {
            task_id: entry.id.clone(),
            message,
        };
        if !seen.insert(entry.id.clone()) {
            errors.push(fail("duplicate task id".into()));
            continue;
        }
        let reference_path = base.join(&entry.reference);
        let reference = match std::fs::read_to_string(&reference_path) {
            Ok(t) => t,
            Err(e) => {
                errors.push(fail(format!("reference {}: {e}", reference_path.display())));
                continue;
            }
        };
        let mut sim = match SimEnvironment::new(env) {
            Ok(s) => s,
            Err(e) => return Err(ManifestError::Malformed(e.to_string())),
        };
        let outcome = run_pipeline(&reference, spec, &mut sim);
        if outcome.reached != StageReached::Deployed {
            let messages = outcome.failed_report().map(|r| r.messages().join("; ")).unwrap_or_default();
            errors.push(fail(format!("reference fails at {:?}: {messages}", outcome.reached)));
            continue;
        }

        let computed = classify_difficulty(&measure(&reference));
        let difficulty = match entry.difficulty.map(DifficultyLevel::try_from) {
            Some(Ok(stored)) if stored != computed => {
                warnings.push(format!(
                    "{}: stored difficulty {stored} differs from computed {computed}; using {computed}",
                    entry.id
                ));
                computed
            }
            Some(Err(e)) => {
                warnings.push(format!("{}: {e}; using computed {computed}", entry.id));
                computed
            }
            _ => computed,
        };

        let intent_path = match entry.intent {
            Some(p) => Some(base.join(p)),
            None => Some(base.join("intents").join(format!("{}.yaml", entry.id))).filter(|p| p.exists()),
        };
        if let Some(p) = &intent_path {
            if !p.exists() {
                errors.push(fail(format!("intent spec {} does not exist", p.display())));
                continue;
            }
        }
        tasks.push(Task {
            task_id: entry.id,
            prompt: entry.prompt,
            reference_path: Some(reference_path),
            difficulty,
            services: entry.services,
            intent_path,
        });
    }
    if errors.is_empty() {
        Ok(Manifest { tasks, warnings })
    } else {
        Err(ManifestError::Invalid(errors))
    }
}
