use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{classify_error, pass_itr, ErrorKind};
use crate::orchestrator::{FeedbackTier, FinalStatus, RunRecord, StageReached};
use crate::template::DifficultyLevel;
use crate::validate::Stage;

/// Where each run first failed; runs that never failed go to `no_failure`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDistribution {
    pub format: usize,
    pub syntax: usize,
    pub deployment: usize,
    pub no_failure: usize,
}

/// Highest feedback tier delivered before each successful run deployed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackAttribution {
    pub none_needed: usize,
    pub general: usize,
    pub detailed: usize,
    pub human: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub runs: usize,
    pub pass_itr: BTreeMap<u32, f64>,
    /// passItr@1 per difficulty level, for levels with at least one run.
    pub pass_at_1_by_difficulty: BTreeMap<u8, f64>,
    pub error_stages: StageDistribution,
    /// Every violation of every failed iteration, by catalog category.
    pub error_categories: BTreeMap<ErrorKind, usize>,
    pub feedback_levels: FeedbackAttribution,
    pub final_status: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub horizons: Vec<u32>,
    pub models: BTreeMap<String, ModelReport>,
}

fn stage_of(reached: StageReached) -> Option<Stage> {
    match reached {
        StageReached::Format => Some(Stage::Format),
        StageReached::Syntax => Some(Stage::Syntax),
        StageReached::Deployment => Some(Stage::Deployment),
        StageReached::Deployed => None,
    }
}

fn status_label(s: FinalStatus) -> &'static str {
    match s {
        FinalStatus::Deployed => "deployed",
        FinalStatus::BudgetExhausted => "budget-exhausted",
        FinalStatus::ProviderFailed => "provider-failed",
    }
}

fn model_report(records: &[&RunRecord], difficulties: &BTreeMap<String, DifficultyLevel>, horizons: &[u32]) -> ModelReport {
    let owned: Vec<RunRecord> = records.iter().map(|r| (*r).clone()).collect();
    let pass = horizons
        .iter()
        .filter_map(|&n| pass_itr(&owned, n).ok().map(|v| (n, v)))
        .collect();

    let mut by_level: BTreeMap<u8, Vec<RunRecord>> = BTreeMap::new();
    for r in &owned {
        if let Some(level) = difficulties.get(&r.task_id) {
            by_level.entry(level.get()).or_default().push(r.clone());
        }
    }
    let pass_at_1_by_difficulty = by_level
        .into_iter()
        .filter_map(|(level, rs)| pass_itr(&rs, 1).ok().map(|v| (level, v)))
        .collect();

    let mut error_stages = StageDistribution::default();
    let mut error_categories = BTreeMap::new();
    let mut feedback_levels = FeedbackAttribution::default();
    let mut final_status = BTreeMap::new();
    for r in &owned {
        match r.first_failure_stage() {
            Some(StageReached::Format) => error_stages.format += 1,
            Some(StageReached::Syntax) => error_stages.syntax += 1,
            Some(StageReached::Deployment) => error_stages.deployment += 1,
            Some(StageReached::Deployed) | None => error_stages.no_failure += 1,
        }
        for it in &r.iterations {
            if let Some(stage) = stage_of(it.stage_reached) {
                for m in &it.violations_summary {
                    *error_categories.entry(classify_error(m, stage).category).or_insert(0) += 1;
                }
            }
        }
        if r.success_iteration.is_some() {
            match r.max_tier_delivered() {
                None => feedback_levels.none_needed += 1,
                Some(FeedbackTier::General) => feedback_levels.general += 1,
                Some(FeedbackTier::Detailed) => feedback_levels.detailed += 1,
                Some(FeedbackTier::Human) => feedback_levels.human += 1,
            }
        }
        *final_status.entry(status_label(r.final_status).to_string()).or_insert(0) += 1;
    }

    ModelReport {
        runs: owned.len(),
        pass_itr: pass,
        pass_at_1_by_difficulty,
        error_stages,
        error_categories,
        feedback_levels,
        final_status,
    }
}

/// Aggregates records per model. `difficulties` maps task ids to levels.
pub fn build_report(records: &[RunRecord], difficulties: &BTreeMap<String, DifficultyLevel>, horizons: &[u32]) -> Report {
    let mut grouped: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.model_name.clone()).or_default().push(r);
    }
    let models = grouped
        .into_iter()
        .map(|(model, rs)| (model, model_report(&rs, difficulties, horizons)))
        .collect();
    Report {
        schema: 1,
        horizons: horizons.to_vec(),
        models,
    }
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(header));
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        let _ = writeln!(out, "{}", line(r));
    }
    out.push('\n');
}

/// Aligned plain-text rendering of a report.
pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let models: Vec<(&String, &ModelReport)> = report.models.iter().collect();

    let mut header = vec!["model".to_string(), "runs".to_string()];
    header.extend(report.horizons.iter().map(|n| format!("passItr@{n}")));
    let rows: Vec<Vec<String>> = models
        .iter()
        .map(|(name, m)| {
            let mut row = vec![(*name).clone(), m.runs.to_string()];
            row.extend(
                report
                    .horizons
                    .iter()
                    .map(|n| m.pass_itr.get(n).map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into())),
            );
            row
        })
        .collect();
    table(&mut out, &header, &rows);

    let levels: Vec<u8> = (1..=5).collect();
    let mut header = vec!["passItr@1 by level".to_string()];
    header.extend(levels.iter().map(|l| format!("L{l}")));
    let rows: Vec<Vec<String>> = models
        .iter()
        .map(|(name, m)| {
            let mut row = vec![(*name).clone()];
            row.extend(levels.iter().map(|l| {
                m.pass_at_1_by_difficulty
                    .get(l)
                    .map(|v| format!("{v:.1}"))
                    .unwrap_or_else(|| "-".into())
            }));
            row
        })
        .collect();
    table(&mut out, &header, &rows);

    let header: Vec<String> = ["first failure", "format", "syntax", "deployment", "none"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = models
        .iter()
        .map(|(name, m)| {
            let d = m.error_stages;
            vec![
                (*name).clone(),
                d.format.to_string(),
                d.syntax.to_string(),
                d.deployment.to_string(),
                d.no_failure.to_string(),
            ]
        })
        .collect();
    table(&mut out, &header, &rows);

    let header: Vec<String> = ["deployed with", "none", "general", "detailed", "human"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = models
        .iter()
        .map(|(name, m)| {
            let f = m.feedback_levels;
            vec![
                (*name).clone(),
                f.none_needed.to_string(),
                f.general.to_string(),
                f.detailed.to_string(),
                f.human.to_string(),
            ]
        })
        .collect();
    table(&mut out, &header, &rows);

    let kinds = [
        ErrorKind::MissingValue,
        ErrorKind::SelfDefinedProperty,
        ErrorKind::NullSubstitution,
        ErrorKind::UnnecessaryWhitespace,
        ErrorKind::ArbitraryDefaultValue,
        ErrorKind::Uncategorized,
    ];
    let mut header = vec!["error category".to_string()];
    header.extend(kinds.iter().map(|k| k.to_string()));
    let rows: Vec<Vec<String>> = models
        .iter()
        .map(|(name, m)| {
            let mut row = vec![(*name).clone()];
            row.extend(kinds.iter().map(|k| m.error_categories.get(k).copied().unwrap_or(0).to_string()));
            row
        })
        .collect();
    table(&mut out, &header, &rows);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Usage;
    use crate::orchestrator::{HistoryMode, IterationRecord};

    fn it(index: u32, reached: StageReached, tier: Option<FeedbackTier>, messages: &[&str]) -> IterationRecord {
        IterationRecord {
            index,
            template_text: String::new(),
            stage_reached: reached,
            violations_summary: messages.iter().map(|s| s.to_string()).collect(),
            feedback_tier_used: tier,
            feedback_text: tier.map(|t| t.to_string()),
            usage: Usage::default(),
        }
    }

    fn run(task: &str, model: &str, its: Vec<IterationRecord>) -> RunRecord {
        let success = its
            .last()
            .filter(|i| i.stage_reached == StageReached::Deployed)
            .map(|i| i.index);
        RunRecord {
            schema: 1,
            task_id: task.into(),
            model_name: model.into(),
            history_mode: HistoryMode::Full,
            iterations: its,
            success_iteration: success,
            final_status: if success.is_some() {
                FinalStatus::Deployed
            } else {
                FinalStatus::BudgetExhausted
            },
            error: None,
        }
    }

    #[test]
    fn first_failure_distribution() {
        use FeedbackTier::*;
        use StageReached::*;
        let records = vec![
            run("a", "m", vec![it(1, Syntax, Some(General), &["x"]), it(2, Deployed, None, &[])]),
            run(
                "b",
                "m",
                vec![
                    it(1, Deployment, Some(General), &["y"]),
                    it(2, Format, Some(General), &["Line 3: too many spaces inside brackets"]),
                ],
            ),
        ];
        let r = build_report(&records, &BTreeMap::new(), &[1, 5]);
        let m = &r.models["m"];
        assert_eq!(
            m.error_stages,
            StageDistribution {
                format: 0,
                syntax: 1,
                deployment: 1,
                no_failure: 0
            }
        );
        assert_eq!(m.error_categories[&ErrorKind::UnnecessaryWhitespace], 1);
        assert_eq!(m.error_categories[&ErrorKind::Uncategorized], 2);
    }

    #[test]
    fn hand_tallied_report() {
        use FeedbackTier::*;
        use StageReached::*;
        let lvl = |n| DifficultyLevel::new(n).unwrap();
        let difficulties: BTreeMap<String, DifficultyLevel> =
            [("a", lvl(1)), ("b", lvl(1)), ("c", lvl(3)), ("d", lvl(5))]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
        let missing = "An error occurred (ValidationError) when calling the CreateStack operation: Parameters: [K] must have values";
        let records = vec![
            run("a", "m1", vec![it(1, Deployed, None, &[])]),
            run(
                "b",
                "m1",
                vec![
                    it(1, Deployment, Some(General), &[missing]),
                    it(2, Deployment, Some(General), &[missing]),
                    it(3, Deployment, Some(Detailed), &[missing]),
                    it(4, Deployed, None, &[]),
                ],
            ),
            run("c", "m1", vec![it(1, Syntax, Some(General), &["Additional properties are not allowed ('Q' was unexpected)"])]),
            run("d", "m1", vec![it(1, Deployed, None, &[])]),
            run("a", "m2", vec![it(1, Format, Some(General), &["zzz"])]),
        ];
        let r = build_report(&records, &difficulties, &[1, 5, 10]);
        let m1 = &r.models["m1"];
        assert_eq!(m1.runs, 4);
        // Hand tally: successes at 1, 4, none, 1.
        assert_eq!(m1.pass_itr[&1], 50.0);
        assert_eq!(m1.pass_itr[&5], 75.0);
        assert_eq!(m1.pass_itr[&10], 75.0);
        assert_eq!(m1.pass_at_1_by_difficulty[&1], 50.0);
        assert_eq!(m1.pass_at_1_by_difficulty[&3], 0.0);
        assert_eq!(m1.pass_at_1_by_difficulty[&5], 100.0);
        assert_eq!(
            m1.feedback_levels,
            FeedbackAttribution {
                none_needed: 2,
                general: 0,
                detailed: 1,
                human: 0
            }
        );
        assert_eq!(m1.error_categories[&ErrorKind::MissingValue], 3);
        assert_eq!(m1.error_categories[&ErrorKind::SelfDefinedProperty], 1);
        assert_eq!(m1.error_stages.no_failure, 2);
        assert_eq!(m1.final_status["deployed"], 3);
        assert_eq!(r.models["m2"].pass_itr[&10], 0.0);

        let text = render_text(&r);
        assert!(text.contains("passItr@5"));
        assert!(text.lines().any(|l| l.starts_with("m1") && l.contains("75.0")));
    }
}
