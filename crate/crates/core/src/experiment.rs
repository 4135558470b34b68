//! Experiment execution and the on-disk experiment directory.
//!
//! Layout: `config.resolved.yaml`, `runs.jsonl` (one run record per line),
//! `tasks.json` (task id to difficulty), `report.json`, `report.txt`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::bench::{build_report, render_text, Report, Task};
use crate::llm::ProviderFactory;
use crate::orchestrator::{run_task, FinalStatus, RunOptions, RunRecord, StageBudget};
use crate::sim::{DeploymentBackend, EnvConfig, SimEnvironment};
use crate::template::DifficultyLevel;

pub const RUN_LOG_FILE: &str = "runs.jsonl";
pub const TASKS_FILE: &str = "tasks.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const DEFAULT_HORIZONS: [u32; 5] = [1, 5, 10, 15, 25];

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: malformed run record: {message}")]
    MalformedRecord { path: PathBuf, line: usize, message: String },
    #[error("environment: {0}")]
    Environment(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs every task, `workers` at a time. Records come back in task order
/// whatever the worker count. `on_record` sees each record as it finishes.
pub fn run_experiment(
    tasks: &[Task],
    providers: &dyn ProviderFactory,
    env: &EnvConfig,
    budgets: &StageBudget,
    options: &RunOptions,
    workers: usize,
    on_record: &(dyn Fn(&RunRecord) + Sync),
) -> Result<Vec<RunRecord>, ExperimentError> {
    SimEnvironment::new(env).map_err(|e| ExperimentError::Environment(e.to_string()))?;
    let env_factory = || -> Box<dyn DeploymentBackend> { Box::new(SimEnvironment::new(env).expect("validated above")) };

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunRecord>>> = Mutex::new(vec![None; tasks.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, tasks.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let record = match providers.for_task(&task.task_id) {
                    Ok(provider) => run_task(task, provider.as_ref(), &env_factory, budgets, options),
                    Err(e) => RunRecord {
                        schema: crate::orchestrator::RUN_SCHEMA_VERSION,
                        task_id: task.task_id.clone(),
                        model_name: options.settings.model_name.clone(),
                        history_mode: options.history_mode,
                        iterations: Vec::new(),
                        success_iteration: None,
                        final_status: FinalStatus::ProviderFailed,
                        error: Some(e.to_string()),
                    },
                };
                tracing::info!(task = %task.task_id, status = ?record.final_status, iterations = record.iterations.len(), "run finished");
                on_record(&record);
                slots.lock().expect("result slots poisoned")[i] = Some(record);
            });
        }
    });
    Ok(slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every task produces a record"))
        .collect())
}

pub fn write_run_log(dir: &Path, records: &[RunRecord]) -> Result<PathBuf, ExperimentError> {
    let path = dir.join(RUN_LOG_FILE);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err(&path))?);
    for r in records {
        let line = serde_json::to_string(r).expect("run records serialize");
        writeln!(out, "{line}").map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_run_log(dir: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    let path = dir.join(RUN_LOG_FILE);
    let file = std::fs::File::open(&path).map_err(io_err(&path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| ExperimentError::MalformedRecord {
            path: path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

pub fn write_task_levels(dir: &Path, tasks: &[Task]) -> Result<(), ExperimentError> {
    let path = dir.join(TASKS_FILE);
    let levels: BTreeMap<&str, DifficultyLevel> = tasks.iter().map(|t| (t.task_id.as_str(), t.difficulty)).collect();
    let text = serde_json::to_string_pretty(&levels).expect("levels serialize");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Task levels recorded with the run; empty when the file is absent.
pub fn read_task_levels(dir: &Path) -> Result<BTreeMap<String, DifficultyLevel>, ExperimentError> {
    let path = dir.join(TASKS_FILE);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| ExperimentError::MalformedRecord {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
        Err(e) => Err(io_err(&path)(e)),
    }
}

/// Builds the report from the directory's run log and writes both renderings.
pub fn report_directory(dir: &Path, horizons: &[u32]) -> Result<Report, ExperimentError> {
    let records = read_run_log(dir)?;
    let levels = read_task_levels(dir)?;
    let report = build_report(&records, &levels, horizons);
    let json_path = dir.join(REPORT_JSON_FILE);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&json_path, json + "\n").map_err(io_err(&json_path))?;
    let text_path = dir.join(REPORT_TEXT_FILE);
    std::fs::write(&text_path, render_text(&report)).map_err(io_err(&text_path))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptFixture;

    const GOOD: &str = "Resources:\n  Topic:\n    Type: AWS::SNS::Topic\n";

    #[test]
    fn order_independent_of_workers() {
        let tasks: Vec<Task> = (0..6).map(|i| Task::inline(format!("t{i}"), "make a topic")).collect();
        let replies: BTreeMap<String, Vec<String>> = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut q = vec!["a: [ 1 ]\n".to_string(); i % 3];
                q.push(GOOD.to_string());
                (t.task_id.clone(), q)
            })
            .collect();
        let fixture = ScriptFixture::from_map(replies);
        let run = |workers| {
            run_experiment(
                &tasks,
                &fixture,
                &EnvConfig::default(),
                &StageBudget::default(),
                &RunOptions::default(),
                workers,
                &|_| {},
            )
            .unwrap()
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(
            one.iter().map(|r| r.success_iteration.unwrap()).collect::<Vec<_>>(),
            [1, 2, 3, 1, 2, 3]
        );

        let dir = tempfile::tempdir().unwrap();
        write_run_log(dir.path(), &one).unwrap();
        write_task_levels(dir.path(), &tasks).unwrap();
        assert_eq!(read_run_log(dir.path()).unwrap(), one);
        let first = report_directory(dir.path(), &[1, 5]).unwrap();
        let text = std::fs::read(dir.path().join(REPORT_JSON_FILE)).unwrap();
        assert_eq!(report_directory(dir.path(), &[1, 5]).unwrap(), first);
        assert_eq!(std::fs::read(dir.path().join(REPORT_JSON_FILE)).unwrap(), text);
        assert!((first.models["scripted"].pass_itr[&1] - 100.0 / 3.0).abs() < 1e-9);
    }
}
