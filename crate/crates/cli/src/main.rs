use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use stackforge::config::{load_config, AppConfig, ConfigOverrides, HumanMode, ProviderKind};
use stackforge::experiment::{
    read_run_log, report_directory, run_experiment, write_run_log, write_task_levels, DEFAULT_HORIZONS,
    REPORT_TEXT_FILE,
};
use stackforge::orchestrator::{
    check_static, spawn_server, FinalStatus, HistoryMode, HumanResponder, RunOptions, SessionBoard, TtyResponder,
};
use stackforge::sim::{deploy, EnvConfig, SimEnvironment, StackStatus};
use stackforge::trust::{compliance_rates, eval_intent, scan_security, IntentSpec, PolicySet};
use stackforge::{parse_template, run_task, DeploymentFailure, ResourceSpec, Task};

/// Exit status for a completed check that found a problem.
const EXIT_FAILED: u8 = 1;
/// Exit status for bad arguments, configuration or unreadable inputs.
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "stackforge", version, about = "Generate, validate and benchmark CloudFormation templates")]
struct Cli {
    /// YAML configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the feedback loop for one prompt and print the final template.
    Generate(GenerateArgs),
    /// Run the format and syntax stages on a template file.
    Validate(ValidateArgs),
    /// Deploy a template into a fresh simulated environment.
    DeploySim(DeploySimArgs),
    /// Benchmark runs and reports.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Check a template against an intent spec.
    IntentEval(IntentEvalArgs),
    /// Scan a template with the security policy set.
    SecurityScan(SecurityScanArgs),
    /// Serve the human-review session API.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run every manifest task and write the experiment directory.
    Run(BenchRunArgs),
    /// Rebuild report.json and report.txt from an experiment directory.
    Report(BenchReportArgs),
}

#[derive(Args, Default)]
struct LoopArgs {
    #[arg(long)]
    provider: Option<ProviderKind>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Scripted reply fixture for `--provider script`.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    human: Option<HumanMode>,
    #[arg(long)]
    history: Option<HistoryMode>,
    #[arg(long)]
    global_cap: Option<u32>,
    /// Simulated environment fixture.
    #[arg(long)]
    env: Option<PathBuf>,
    /// Listen address for `--human serve`.
    #[arg(long)]
    serve_addr: Option<String>,
}

impl LoopArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            provider: self.provider,
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            script: self.script.clone(),
            global_cap: self.global_cap,
            history_mode: self.history,
            human: self.human,
            serve_addr: self.serve_addr.clone(),
            env_fixture: self.env.clone(),
            ..ConfigOverrides::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Natural-language description of the infrastructure.
    #[arg(long, conflicts_with = "prompt_file", required_unless_present = "prompt_file")]
    prompt: Option<String>,
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    /// Task id; selects the reply queue of a scripted provider.
    #[arg(long, default_value = "adhoc")]
    task_id: String,
    /// Write the run record as JSON to this file.
    #[arg(long)]
    record: Option<PathBuf>,
    #[command(flatten)]
    run: LoopArgs,
}

#[derive(Args)]
struct ValidateArgs {
    template: PathBuf,
    /// Resource specification overriding the bundled one.
    #[arg(long)]
    resource_spec: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DeploySimArgs {
    template: PathBuf,
    #[arg(long)]
    env: Option<PathBuf>,
    /// Parameter value as KEY=VALUE; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, String)>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchRunArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Experiment directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    run: LoopArgs,
}

#[derive(Args)]
struct BenchReportArgs {
    /// Experiment directory.
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma-separated iteration horizons.
    #[arg(long, value_delimiter = ',')]
    at: Vec<u32>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct IntentEvalArgs {
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Args)]
struct SecurityScanArgs {
    #[arg(long)]
    template: PathBuf,
    /// Policy set overriding the bundled defaults.
    #[arg(long)]
    policies: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    addr: Option<String>,
    /// Experiment directory whose runs are listed under /runs.
    #[arg(long)]
    runs: Option<PathBuf>,
}

fn parse_param(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected KEY=VALUE, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Generate(args) => generate(config, args),
        Command::Validate(args) => validate(args),
        Command::DeploySim(args) => deploy_sim(args),
        Command::Bench(BenchCommand::Run(args)) => bench_run(config, args),
        Command::Bench(BenchCommand::Report(args)) => bench_report(args),
        Command::IntentEval(args) => intent_eval(args),
        Command::SecurityScan(args) => security_scan(args),
        Command::Serve(args) => serve(config, args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

/// Human responder for the configured mode, plus the server when serving.
fn attach_human(
    cfg: &AppConfig,
    options: &mut RunOptions,
) -> anyhow::Result<Option<(Arc<SessionBoard>, stackforge::orchestrator::ServerHandle)>> {
    match cfg.human {
        HumanMode::Off => Ok(None),
        HumanMode::Tty => {
            options.human = Some(Arc::new(TtyResponder::new()));
            Ok(None)
        }
        HumanMode::Serve => {
            let addr: SocketAddr = cfg.serve_addr.parse().context("serve_addr")?;
            let board = Arc::new(SessionBoard::new());
            let handle = spawn_server(board.clone(), addr).with_context(|| format!("cannot listen on {addr}"))?;
            eprintln!("session API listening on {}", handle.base_url());
            options.human = Some(board.clone() as Arc<dyn HumanResponder>);
            Ok(Some((board, handle)))
        }
    }
}

fn generate(config: Option<&Path>, args: GenerateArgs) -> anyhow::Result<ExitCode> {
    let prompt = match (&args.prompt, &args.prompt_file) {
        (Some(p), _) => p.clone(),
        (None, Some(f)) => read(f)?,
        (None, None) => bail!("one of --prompt or --prompt-file is required"),
    };
    let cfg = load_config(config, &args.run.overrides())?;
    let mut options = cfg.run_options()?;
    let server = attach_human(&cfg, &mut options)?;
    let env = cfg.env_config()?;
    SimEnvironment::new(&env)?;
    let provider = cfg.provider_factory()?.for_task(&args.task_id)?;

    let task = Task::inline(args.task_id.clone(), prompt);
    let env_factory = || -> Box<dyn stackforge::sim::DeploymentBackend> {
        Box::new(SimEnvironment::new(&env).expect("validated above"))
    };
    let record = run_task(&task, provider.as_ref(), &env_factory, &cfg.stage_budget(), &options);
    if let Some((board, handle)) = server {
        board.record_run(record.clone());
        board.close();
        handle.shutdown();
    }
    if let Some(path) = &args.record {
        let text = serde_json::to_string_pretty(&record).expect("run record serializes");
        std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    }

    if let Some(last) = record.iterations.last() {
        print!("{}", last.template_text);
        if !last.template_text.ends_with('\n') {
            println!();
        }
    }
    let iterations = record.iterations.len();
    match (record.final_status, &record.error) {
        (FinalStatus::Deployed, _) => eprintln!("deployed after {iterations} iteration(s)"),
        (status, Some(err)) => eprintln!("{status:?} after {iterations} iteration(s): {err}"),
        (status, None) => eprintln!("{status:?} after {iterations} iteration(s)"),
    }
    Ok(status(record.final_status == FinalStatus::Deployed))
}

fn validate(args: ValidateArgs) -> anyhow::Result<ExitCode> {
    let text = read(&args.template)?;
    let spec = match &args.resource_spec {
        Some(p) => stackforge::validate::load_resource_spec(p)?,
        None => ResourceSpec::bundled().clone(),
    };
    let (outcome, _) = check_static(&text, &spec);
    let ok = outcome.failed_report().is_none();
    if args.json {
        print_json(&json!({ "passed": ok, "stages": outcome.reports }));
    } else {
        for report in &outcome.reports {
            println!("{}: {}", report.stage, if report.passed { "pass" } else { "FAIL" });
            for m in report.messages() {
                println!("  {m}");
            }
        }
    }
    Ok(status(ok))
}

fn deploy_sim(args: DeploySimArgs) -> anyhow::Result<ExitCode> {
    let text = read(&args.template)?;
    let env_cfg = match &args.env {
        Some(p) => EnvConfig::load(p)?,
        None => EnvConfig::default(),
    };
    let mut env = SimEnvironment::new(&env_cfg)?;
    let template = match parse_template(&text, stackforge::SourceFormat::from_path(&args.template)) {
        Ok(t) => t,
        Err(e) => {
            let failure = json!({ "status": null, "message": e.to_string() });
            if args.json {
                print_json(&failure);
            } else {
                println!("status: NOT_CREATED");
                println!("message: {e}");
            }
            return Ok(ExitCode::from(EXIT_FAILED));
        }
    };
    let params: BTreeMap<String, String> = args.params.into_iter().collect();
    let result = deploy(&mut env, &template, &params);
    let ok = matches!(&result, Ok(s) if s.status == StackStatus::CreateComplete);
    if args.json {
        match &result {
            Ok(state) => print_json(state),
            Err(failure) => print_json(failure),
        }
    } else {
        match &result {
            Ok(state) => {
                println!("stack: {}", state.stack_id);
                println!("status: {}", state.status);
                for (k, v) in &state.outputs {
                    println!("output {k}: {v}");
                }
            }
            Err(failure) => print_failure(failure),
        }
    }
    Ok(status(ok))
}

fn print_failure(failure: &DeploymentFailure) {
    match &failure.stack_id {
        Some(id) => {
            println!("stack: {id}");
            println!("status: {}", StackStatus::RollbackComplete);
        }
        None => println!("status: NOT_CREATED"),
    }
    if let Some(r) = &failure.failing_resource {
        println!("resource: {r}");
    }
    println!("message: {}", failure.message);
}

fn bench_run(config: Option<&Path>, args: BenchRunArgs) -> anyhow::Result<ExitCode> {
    let overrides = ConfigOverrides {
        manifest: args.manifest.clone(),
        output_dir: args.out.clone(),
        workers: args.workers,
        ..args.run.overrides()
    };
    let cfg = load_config(config, &overrides)?;
    let Some(manifest_path) = &cfg.manifest else {
        bail!("no manifest given (--manifest or `manifest` in the config file)");
    };
    let Some(out) = &cfg.output_dir else {
        bail!("no experiment directory given (--out or `output_dir` in the config file)");
    };
    let env = cfg.env_config()?;
    let spec = cfg.resource_spec()?;
    let manifest = stackforge::bench::load_manifest_with(manifest_path, &env, &spec)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    let providers = cfg.provider_factory()?;
    let mut options = cfg.run_options()?;
    let server = attach_human(&cfg, &mut options)?;
    let workers = if cfg.human == HumanMode::Tty { 1 } else { cfg.workers };

    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    cfg.write_resolved(out)?;
    write_task_levels(out, &manifest.tasks)?;
    let board = server.as_ref().map(|(b, _)| b.clone());
    let on_record = |r: &stackforge::RunRecord| {
        if let Some(b) = &board {
            b.record_run(r.clone());
        }
    };
    let records = run_experiment(
        &manifest.tasks,
        providers.as_ref(),
        &env,
        &cfg.stage_budget(),
        &options,
        workers,
        &on_record,
    )?;
    if let Some((board, handle)) = server {
        board.close();
        handle.shutdown();
    }
    write_run_log(out, &records)?;
    report_directory(out, &DEFAULT_HORIZONS)?;
    print!("{}", read(&out.join(REPORT_TEXT_FILE))?);
    Ok(ExitCode::SUCCESS)
}

fn bench_report(args: BenchReportArgs) -> anyhow::Result<ExitCode> {
    let horizons = if args.at.is_empty() { DEFAULT_HORIZONS.to_vec() } else { args.at };
    if horizons.contains(&0) {
        bail!("--at horizons must be at least 1");
    }
    let report = report_directory(&args.input, &horizons)?;
    if args.json {
        print_json(&report);
    } else {
        print!("{}", read(&args.input.join(REPORT_TEXT_FILE))?);
    }
    Ok(ExitCode::SUCCESS)
}

fn intent_eval(args: IntentEvalArgs) -> anyhow::Result<ExitCode> {
    let spec = IntentSpec::load(&args.spec)?;
    let text = read(&args.template)?;
    let template = parse_template(&text, stackforge::SourceFormat::from_path(&args.template))?;
    let result = eval_intent(&template, &spec, ResourceSpec::bundled())?;
    print_json(&json!({
        "task_id": spec.task_id,
        "resource_ok": result.resource_ok,
        "attribute_ok": result.attribute_ok,
        "both_ok": result.both_ok,
    }));
    Ok(status(result.both_ok))
}

fn security_scan(args: SecurityScanArgs) -> anyhow::Result<ExitCode> {
    let owned;
    let policies = match &args.policies {
        Some(p) => {
            owned = PolicySet::load(p)?;
            &owned
        }
        None => PolicySet::bundled(),
    };
    let text = read(&args.template)?;
    let template = parse_template(&text, stackforge::SourceFormat::from_path(&args.template))?;
    let scan = scan_security(&template, policies);
    let rates = compliance_rates(std::slice::from_ref(&scan)).expect("one scan");
    let failed: Vec<_> = scan.failed().collect();
    print_json(&json!({
        "template": args.template.display().to_string(),
        "applicable": scan.applicable().count(),
        "failed": failed.len(),
        "compliant": scan.compliant(),
        "policy_pass_pct": rates.policy_pass_pct,
        "failures": failed,
    }));
    Ok(status(scan.compliant()))
}

fn serve(config: Option<&Path>, args: ServeArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(
        config,
        &ConfigOverrides {
            serve_addr: args.addr.clone(),
            ..ConfigOverrides::default()
        },
    )?;
    let addr: SocketAddr = cfg.serve_addr.parse().context("serve_addr")?;
    let board = Arc::new(SessionBoard::new());
    if let Some(dir) = &args.runs {
        for r in read_run_log(dir)? {
            board.record_run(r);
        }
    }
    let handle = spawn_server(board, addr).with_context(|| format!("cannot listen on {addr}"))?;
    eprintln!("session API listening on {}", handle.base_url());
    handle.join();
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_pairs() {
        assert_eq!(parse_param("KeyName=abc=d").unwrap(), ("KeyName".into(), "abc=d".into()));
        assert!(parse_param("novalue").is_err());
        assert!(parse_param("=x").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
