//! Acceptance suite: one PASS/FAIL/SKIP line per criterion, nonzero exit on
//! any failure. Runs offline except the live smoke check, which is skipped
//! unless `STACKFORGE_LIVE_BASE_URL` is set.

mod common;

use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stackforge::bench::ErrorKind;
use stackforge::experiment::{run_experiment, write_run_log};
use stackforge::llm::{HttpProvider, HttpProviderConfig, ScriptFixture, ScriptedProvider};
use stackforge::orchestrator::{
    check_static, run_pipeline, FinalStatus, HistoryMode, HumanResponder, ScriptedResponder, StageReached,
};
use stackforge::sim::DeploymentBackend;
use stackforge::trust::{compliance_rates, intent_coverage, scan_security, IntentResult, PolicyCheck, PolicyScan, PolicySet, Severity};
use stackforge::{
    check_format, classify_difficulty, classify_error, deploy, load_manifest, measure, parse_template, pass_itr,
    run_task, EnvConfig, FeedbackTier, ResourceSpec, RunOptions, RunRecord, SimEnvironment, Stage, StageBudget, Task,
    Template,
};

/// Wall-clock ceiling for the whole offline suite.
const SUITE_LIMIT: Duration = Duration::from_secs(60);
/// Tolerance on the worked compliance example, in percentage points.
const PCT_TOLERANCE: f64 = 0.1;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn verdict(r: Result<String, String>) -> Verdict {
    match r {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

fn sim_factory() -> impl Fn() -> Box<dyn DeploymentBackend> {
    let env = EnvConfig::default();
    move || -> Box<dyn DeploymentBackend> { Box::new(SimEnvironment::new(&env).unwrap()) }
}

fn run_script(task_id: &str, replies: Vec<String>, options: &RunOptions) -> RunRecord {
    let provider = ScriptedProvider::new(task_id, replies);
    run_task(&Task::inline(task_id, "p"), &provider, &sim_factory(), &StageBudget::default(), options)
}

const KEY_PARAM: &str = "Parameters:\n  KeyName:\n    Type: AWS::EC2::KeyPair::KeyName\n";

fn error_fidelity() -> Verdict {
    let topic = "Resources:\n  T:\n    Type: AWS::SNS::Topic\n";
    let fixtures: [(String, &str, ErrorKind, Stage); 5] = [
        (
            format!("{KEY_PARAM}{topic}"),
            "An error occurred (ValidationError) when calling the CreateStack operation: Parameters: [KeyName] must have values",
            ErrorKind::MissingValue,
            Stage::Deployment,
        ),
        (
            format!("{topic}    Properties:\n      Encrypted: true\n"),
            "Additional properties are not allowed ('Encrypted' was unexpected)",
            ErrorKind::SelfDefinedProperty,
            Stage::Syntax,
        ),
        (
            format!("{topic}    Properties:\n      TopicName: !Sub plain-name\n"),
            "'Fn::Sub' isn't needed because there are no variables",
            ErrorKind::NullSubstitution,
            Stage::Syntax,
        ),
        (
            format!("{topic}    Properties:\n      Tags: [ {{Key: a, Value: b}}]\n"),
            "Line 5: too many spaces inside brackets",
            ErrorKind::UnnecessaryWhitespace,
            Stage::Format,
        ),
        (
            format!("{KEY_PARAM}    Default: my-key\n{topic}"),
            "Parameter validation failed: parameter value my-key for parameter name KeyName does not exist",
            ErrorKind::ArbitraryDefaultValue,
            Stage::Deployment,
        ),
    ];
    let mut failures = Vec::new();
    for (text, message, kind, stage) in &fixtures {
        let mut env = SimEnvironment::new(&EnvConfig::default()).unwrap();
        let outcome = run_pipeline(text, ResourceSpec::bundled(), &mut env);
        let got: Vec<&str> = outcome
            .failed_report()
            .map(|r| r.violations.iter().map(|v| v.message()).collect())
            .unwrap_or_default();
        let category = classify_error(message, Stage::Format);
        let ok = got == [*message]
            && outcome.reached == StageReached::from(*stage)
            && category.category == *kind
            && category.stage == *stage;
        if !ok {
            failures.push(format!("{kind}: got {got:?} at {:?}", outcome.reached));
        }
    }
    verdict(if failures.is_empty() {
        Ok("5/5 catalog messages exact and classified".into())
    } else {
        Err(failures.join("; "))
    })
}

fn stage_gating() -> Verdict {
    let desk = common::desk_templates();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut seen: BTreeMap<StageReached, usize> = BTreeMap::new();
    for case in 0..100 {
        let (name, text) = &desk[rng.gen_range(0..desk.len())];
        let mutated = common::mutate(text, &mut rng);
        let record = run_script(name, vec![mutated], &RunOptions::default());
        let it = &record.iterations[0];
        *seen.entry(it.stage_reached).or_default() += 1;
        let format_ok = check_format(&it.template_text).passed;
        let (statics, _) = check_static(&it.template_text, ResourceSpec::bundled());
        let static_ok = statics.failed_report().is_none();
        if (it.stage_reached > StageReached::Format) != format_ok {
            return Verdict::Fail(format!("case {case} ({name}): {:?} but format pass = {format_ok}", it.stage_reached));
        }
        if it.stage_reached >= StageReached::Deployment && !static_ok {
            return Verdict::Fail(format!("case {case} ({name}): deployment reached without a syntax pass"));
        }
    }
    Verdict::Pass(format!("100 mutated templates, stages reached {seen:?}"))
}

fn budget_machine() -> Verdict {
    let failing = [
        (Stage::Format, "Resources: \n  T:\n    Type: AWS::SNS::Topic\n".to_string(), "YAML Syntax"),
        (
            Stage::Syntax,
            "Resources:\n  T:\n    Type: AWS::SNS::Topic\n    Properties:\n      Encrypted: true\n".to_string(),
            "CloudFormation Template Syntax",
        ),
        (Stage::Deployment, format!("{KEY_PARAM}Resources:\n  T:\n    Type: AWS::SNS::Topic\n"), "Deployment"),
    ];
    use FeedbackTier::{Detailed as D, General as G, Human as H};
    let check = || -> Result<String, String> {
        for (stage, text, label) in &failing {
            let plain = run_script("t", vec![text.clone(); 30], &RunOptions::default());
            let tiers = tier_sequence(&plain);
            ensure(plain.final_status == FinalStatus::BudgetExhausted, format!("{stage:?}: {:?}", plain.final_status))?;
            ensure(tiers == [G, G, D, D, D, D], format!("{stage:?}: tiers {tiers:?}"))?;
            ensure(
                plain.iterations.iter().all(|i| i.stage_reached == StageReached::from(*stage)),
                format!("{stage:?}: wrong failing stage"),
            )?;
            let general = format!("Based on the evaluation, the template contains {label} Errors.");
            ensure(
                plain.iterations[0].feedback_text.as_deref() == Some(general.as_str()),
                format!("{stage:?}: general text {:?}", plain.iterations[0].feedback_text),
            )?;
            ensure(plain.iterations[5].feedback_text.is_none(), format!("{stage:?}: final iteration sent feedback"))?;

            let responder = Arc::new(ScriptedResponder::new(vec!["fix it".into(); 10]));
            let options = RunOptions {
                human: Some(responder.clone() as Arc<dyn HumanResponder>),
                ..RunOptions::default()
            };
            let human = run_script("t", vec![text.clone(); 30], &options);
            let tiers = tier_sequence(&human);
            ensure(human.final_status == FinalStatus::BudgetExhausted, format!("{stage:?}+human: {:?}", human.final_status))?;
            ensure(tiers == [G, G, D, D, D, D, H, H, H, H], format!("{stage:?}+human: tiers {tiers:?}"))?;
            ensure(responder.served() == 3, format!("{stage:?}+human: responder asked {} times", responder.served()))?;
        }
        Ok("3 stages: 2 general + 4 detailed = 6, with human 2 + 4 + 4 = 10".into())
    };
    verdict(check())
}

fn tier_sequence(r: &RunRecord) -> Vec<FeedbackTier> {
    r.iterations.iter().filter_map(|i| i.feedback_tier_used).collect()
}

fn record(success: Option<u32>) -> RunRecord {
    RunRecord {
        schema: 1,
        task_id: "t".into(),
        model_name: "m".into(),
        history_mode: HistoryMode::Full,
        iterations: Vec::new(),
        success_iteration: success,
        final_status: if success.is_some() { FinalStatus::Deployed } else { FinalStatus::BudgetExhausted },
        error: None,
    }
}

fn pass_itr_correctness() -> Verdict {
    let check = || -> Result<String, String> {
        let fixed: Vec<RunRecord> = [Some(1), Some(3), None, Some(10)].into_iter().map(record).collect();
        let got: Vec<f64> = [1, 5, 10, 15].iter().map(|&n| pass_itr(&fixed, n).unwrap()).collect();
        ensure(got == [25.0, 50.0, 75.0, 75.0], format!("synthetic set gave {got:?}"))?;

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
        for set in 0..1000 {
            let records: Vec<RunRecord> = (0..rng.gen_range(1..40))
                .map(|_| record(rng.gen_bool(0.7).then(|| rng.gen_range(1..=25))))
                .collect();
            let mut prev = 0.0;
            for n in 1..=25 {
                let v = pass_itr(&records, n).unwrap();
                let hits = records.iter().filter(|r| matches!(r.success_iteration, Some(s) if s <= n)).count();
                let oracle = hits as f64 * 100.0 / records.len() as f64;
                ensure((v - oracle).abs() < 1e-9, format!("set {set} n={n}: {v} vs {oracle}"))?;
                ensure(v >= prev && (0.0..=100.0).contains(&v), format!("set {set}: not monotone at n={n}"))?;
                prev = v;
            }
        }
        Ok("{1,5,10,15} -> {25, 50, 75, 75}; monotone over 1000 random sets".into())
    };
    verdict(check())
}

fn clean_state() -> Verdict {
    let mut pool: Vec<Template> = common::desk_templates()
        .iter()
        .map(|(_, t)| parse_template(t, None).unwrap())
        .collect();
    pool.extend(common::desk_variants());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut rollbacks = 0;
    for seq in 0..200 {
        let mut env = SimEnvironment::new(&EnvConfig::default()).unwrap();
        let start = env.state().clone();
        match common::random_sim_sequence(&mut env, &pool, &mut rng) {
            Ok(n) => rollbacks += n,
            Err(e) => return Verdict::Fail(format!("sequence {seq}: {e}")),
        }
        if *env.state() != start || env.state() != env.initial_snapshot() {
            return Verdict::Fail(format!("sequence {seq}: state differs from the initial snapshot"));
        }
    }
    if rollbacks == 0 {
        return Verdict::Fail("no sequence exercised a rollback".into());
    }
    Verdict::Pass(format!("200 sequences restored, {rollbacks} rollbacks exercised"))
}

fn topological() -> Verdict {
    let mut checked = Vec::new();
    for (name, text) in common::desk_templates() {
        let t = parse_template(&text, None).unwrap();
        if t.resources.len() > 6 {
            continue;
        }
        let orders = common::brute_force_orders(&t);
        let mut env = SimEnvironment::new(&EnvConfig::default()).unwrap();
        let state = match deploy(&mut env, &t, &BTreeMap::new()) {
            Ok(s) => s,
            Err(e) => return Verdict::Fail(format!("{name}: {e}")),
        };
        let order: Vec<String> = state.provisioned.iter().map(|p| p.logical_id.clone()).collect();
        if !orders.contains(&order) {
            return Verdict::Fail(format!("{name}: {order:?} violates a dependency"));
        }
        checked.push(format!("{name}({}/{})", orders.len(), t.resources.len()));
    }
    Verdict::Pass(format!("{} templates: {}", checked.len(), checked.join(", ")))
}

/// A template with exactly `loc` non-blank lines, `resources` resources and
/// `params` parameters.
fn sized_template(loc: usize, resources: usize, params: usize) -> String {
    let mut out = String::new();
    let mut lines = 0;
    if params > 0 {
        out.push_str("Parameters:\n");
        lines += 1;
        for i in 0..params {
            out.push_str(&format!("  P{i}:\n    Type: String\n"));
            lines += 2;
        }
    }
    out.push_str("Resources:\n");
    lines += 1;
    for i in 0..resources {
        out.push_str(&format!("  Q{i}:\n    Type: AWS::SQS::Queue\n"));
        lines += 2;
    }
    assert!(lines <= loc, "{loc} lines cannot hold {resources} resources and {params} parameters");
    for _ in lines..loc {
        out.push_str("# padding\n");
    }
    out
}

fn difficulty_boundaries() -> Verdict {
    let cases = [
        ((49, 1, 1), 1),
        ((50, 1, 1), 2),
        ((99, 3, 4), 2),
        ((100, 1, 1), 3),
        ((200, 12, 14), 5),
        ((170, 5, 3), 4),
        ((60, 12, 0), 5),
        ((30, 1, 9), 4),
    ];
    let mut wrong = Vec::new();
    for ((loc, res, params), want) in cases {
        let m = measure(&sized_template(loc, res, params));
        let got = classify_difficulty(&m).get();
        if (m.loc, m.resource_count, m.parameter_count) != (loc, res, params) || got != want {
            wrong.push(format!("{loc}/{res}/{params}: measured {}/{}/{} level {got}", m.loc, m.resource_count, m.parameter_count));
        }
    }
    verdict(if wrong.is_empty() {
        Ok(format!("{} fixtures incl. 49/1/1->1, 50/1/1->2, 200/12/14->5, 170/5/3->4", cases.len()))
    } else {
        Err(wrong.join("; "))
    })
}

fn random_scan(rng: &mut impl Rng) -> PolicyScan {
    let checks = (0..rng.gen_range(0..6))
        .map(|i| {
            let applicable = rng.gen_bool(0.6);
            PolicyCheck {
                policy_id: format!("P{i}"),
                severity: Severity::Medium,
                applicable,
                passed: applicable.then(|| rng.gen_bool(0.7)),
                failing_resource: None,
            }
        })
        .collect();
    PolicyScan { checks }
}

const HARDENED_BUCKET: &str = "  Bucket:\n    Type: AWS::S3::Bucket\n    Properties:\n      BucketEncryption:\n        ServerSideEncryptionConfiguration:\n          - ServerSideEncryptionByDefault:\n              SSEAlgorithm: AES256\n      PublicAccessBlockConfiguration:\n        BlockPublicAcls: true\n        BlockPublicPolicy: true\n        IgnorePublicAcls: true\n        RestrictPublicBuckets: true\n      VersioningConfiguration:\n        Status: Enabled\n";
const ENCRYPTED_TOPIC: &str = "  Topic:\n    Type: AWS::SNS::Topic\n    Properties:\n      KmsMasterKeyId: alias/aws/sns\n";

fn trust_invariants() -> Verdict {
    let check = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
        for set in 0..500 {
            let n = rng.gen_range(1..30);
            let intents: Vec<IntentResult> = (0..n).map(|_| IntentResult::new(rng.gen_bool(0.7), rng.gen_bool(0.6))).collect();
            let cov = intent_coverage(&intents).unwrap();
            ensure(
                cov.both_pct <= cov.resource_pct.min(cov.attribute_pct) + 1e-9,
                format!("intent set {set}: {cov:?}"),
            )?;
            let scans: Vec<PolicyScan> = (0..n).map(|_| random_scan(&mut rng)).collect();
            let rates = compliance_rates(&scans).unwrap();
            if let Some(filtered) = rates.filtered_pct {
                ensure(filtered <= rates.unfiltered_pct + 1e-9, format!("scan set {set}: {rates:?}"))?;
            }
        }

        let a = format!("Resources:\n{HARDENED_BUCKET}{ENCRYPTED_TOPIC}");
        let b = format!("{a}  Queue:\n    Type: AWS::SQS::Queue\n");
        let c = "Resources:\n  Table:\n    Type: AWS::DynamoDB::Table\n    Properties:\n      AttributeDefinitions:\n        - AttributeName: id\n          AttributeType: S\n      KeySchema:\n        - AttributeName: id\n          KeyType: HASH\n      BillingMode: PAY_PER_REQUEST\n";
        let scans: Vec<PolicyScan> = [a.as_str(), b.as_str(), c]
            .iter()
            .map(|t| scan_security(&parse_template(t, None).unwrap(), PolicySet::bundled()))
            .collect();
        let shape: Vec<(usize, usize)> = scans.iter().map(|s| (s.applicable().count(), s.failed().count())).collect();
        ensure(shape == [(4, 0), (5, 1), (0, 0)], format!("worked example scans {shape:?}"))?;
        let rates = compliance_rates(&scans).unwrap();
        let got = [rates.policy_pass_pct.unwrap_or(f64::NAN), rates.unfiltered_pct, rates.filtered_pct.unwrap_or(f64::NAN)];
        let want = [88.9, 66.7, 50.0];
        ensure(
            got.iter().zip(want).all(|(g, w)| (g - w).abs() <= PCT_TOLERANCE),
            format!("worked example gave {got:?}"),
        )?;
        Ok(format!("500 random sets hold; worked example {:.1}/{:.1}/{:.1}", got[0], got[1], got[2]))
    };
    verdict(check())
}

fn desk_run_log(dir: &std::path::Path, workers: usize) -> Result<Vec<u8>, String> {
    let desk = common::desk_dir();
    let manifest = load_manifest(desk.join("manifest.yaml")).map_err(|e| e.to_string())?;
    let fixture = ScriptFixture::load(desk.join("script.yaml")).map_err(|e| e.to_string())?;
    let records = run_experiment(
        &manifest.tasks,
        &fixture,
        &EnvConfig::default(),
        &StageBudget::default(),
        &RunOptions::default(),
        workers,
        &|_| {},
    )
    .map_err(|e| e.to_string())?;
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let path = write_run_log(dir, &records).map_err(|e| e.to_string())?;
    std::fs::read(path).map_err(|e| e.to_string())
}

fn e2e_determinism(suite_start: Instant) -> Verdict {
    let check = || -> Result<String, String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let first = desk_run_log(&tmp.path().join("a"), 4)?;
        let second = desk_run_log(&tmp.path().join("b"), 1)?;
        ensure(first == second, "run logs differ between executions")?;
        let lines = first.iter().filter(|&&b| b == b'\n').count();
        ensure(lines == 12, format!("expected 12 records, got {lines}"))?;
        let elapsed = suite_start.elapsed();
        ensure(elapsed < SUITE_LIMIT, format!("suite took {elapsed:.1?}"))?;
        Ok(format!("12-task desk logs byte-identical ({} bytes); suite so far {elapsed:.2?}", first.len()))
    };
    verdict(check())
}

fn live_smoke() -> Verdict {
    let Ok(base_url) = std::env::var("STACKFORGE_LIVE_BASE_URL") else {
        return Verdict::Skip("STACKFORGE_LIVE_BASE_URL not set".into());
    };
    let key_env = std::env::var("STACKFORGE_LIVE_KEY_ENV").unwrap_or_else(|_| "OPENAI_API_KEY".into());
    let mut cfg = HttpProviderConfig::new(base_url);
    cfg.api_key = std::env::var(&key_env).ok();
    let provider = match HttpProvider::new(cfg) {
        Ok(p) => p,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let desk = common::desk_dir();
    let manifest = load_manifest(desk.join("manifest.yaml")).unwrap();
    let task = manifest.tasks.iter().find(|t| t.difficulty.get() == 1).unwrap();
    let mut options = RunOptions::default();
    if let Ok(model) = std::env::var("STACKFORGE_LIVE_MODEL") {
        options.settings.model_name = model;
    }
    let record = run_task(task, &provider, &sim_factory(), &StageBudget::default(), &options);
    match record.final_status {
        FinalStatus::ProviderFailed => Verdict::Fail(format!("{}: {}", task.task_id, record.error.unwrap_or_default())),
        status => Verdict::Pass(format!(
            "{}: {status:?} after {} iteration(s)",
            task.task_id,
            record.iterations.len()
        )),
    }
}

fn main() {
    let suite_start = Instant::now();
    let checks: [(&str, Check); 8] = [
        ("error-message-fidelity", error_fidelity),
        ("stage-gating", stage_gating),
        ("budget-state-machine", budget_machine),
        ("passitr-correctness", pass_itr_correctness),
        ("clean-state", clean_state),
        ("topological-soundness", topological),
        ("difficulty-boundaries", difficulty_boundaries),
        ("trustworthiness-invariants", trust_invariants),
    ];
    let mut failed = 0;
    let mut report = |name: &str, started: Instant, v: Verdict| {
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name:<28} {detail} [{secs:.2}s]");
    };
    let guarded = |f: &dyn Fn() -> Verdict| {
        std::panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        })
    };
    for (name, check) in checks {
        let t = Instant::now();
        report(name, t, guarded(&check));
    }
    let t = Instant::now();
    report("end-to-end-determinism", t, guarded(&|| e2e_determinism(suite_start)));
    let t = Instant::now();
    report("live-smoke", t, guarded(&live_smoke));

    println!("acceptance: {failed} failed, total {:.2?}", suite_start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
