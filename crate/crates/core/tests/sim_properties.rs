mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stackforge::llm::ScriptedProvider;
use stackforge::orchestrator::{check_static, StageReached};
use stackforge::sim::DeploymentBackend;
use stackforge::{
    check_format, deploy, parse_template, run_task, EnvConfig, ResourceSpec, RunOptions, SimEnvironment, StageBudget,
    Task, Template,
};

fn pool() -> &'static Vec<Template> {
    static POOL: OnceLock<Vec<Template>> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut out: Vec<Template> = common::desk_templates()
            .iter()
            .map(|(_, text)| parse_template(text, None).unwrap())
            .collect();
        out.extend(common::desk_variants());
        out
    })
}

fn small_references() -> Vec<(String, Template)> {
    common::desk_templates()
        .into_iter()
        .map(|(name, text)| (name, parse_template(&text, None).unwrap()))
        .filter(|(_, t)| t.resources.len() <= 6)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deleting_everything_restores_the_environment(seed in any::<u64>()) {
        let mut env = SimEnvironment::new(&EnvConfig::default()).unwrap();
        let start = env.state().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::random_sim_sequence(&mut env, pool(), &mut rng).map_err(TestCaseError::fail)?;
        prop_assert!(env.stack_ids().is_empty());
        prop_assert_eq!(env.state(), &start);
        prop_assert!(env.is_clean());
    }

    #[test]
    fn stage_reached_respects_gating(pick in 0usize..12, seed in any::<u64>()) {
        let (name, text) = &common::desk_templates()[pick];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mutated = common::mutate(text, &mut rng);

        let provider = ScriptedProvider::new(name.clone(), vec![mutated]);
        let env = EnvConfig::default();
        let factory = move || -> Box<dyn DeploymentBackend> { Box::new(SimEnvironment::new(&env).unwrap()) };
        let budget = StageBudget::default();
        let record = run_task(&Task::inline(name.clone(), "p"), &provider, &factory, &budget, &RunOptions::default());
        let first = &record.iterations[0];
        let checked = &first.template_text;

        let format_ok = check_format(checked).passed;
        prop_assert_eq!(first.stage_reached > StageReached::Format, format_ok);
        if first.stage_reached >= StageReached::Deployment {
            let (outcome, template) = check_static(checked, ResourceSpec::bundled());
            prop_assert!(outcome.failed_report().is_none());
            let template = template.unwrap();
            let deployed = deploy(&mut SimEnvironment::new(&EnvConfig::default()).unwrap(), &template, &BTreeMap::new());
            prop_assert_eq!(first.stage_reached == StageReached::Deployed, deployed.is_ok());
        }
        if first.stage_reached == StageReached::Deployed {
            prop_assert!(first.violations_summary.is_empty());
        } else {
            prop_assert!(!first.violations_summary.is_empty());
        }
    }
}

#[test]
fn provisioning_order_is_topological() {
    let references = small_references();
    assert!(references.len() >= 6);
    for (name, t) in references {
        let orders = common::brute_force_orders(&t);
        let mut env = SimEnvironment::new(&EnvConfig::default()).unwrap();
        let state = deploy(&mut env, &t, &BTreeMap::new()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let order: Vec<String> = state.provisioned.iter().map(|p| p.logical_id.clone()).collect();
        assert!(orders.contains(&order), "{name}: {order:?} is not a valid order");
    }
}

#[test]
fn oracle_sees_every_reference_form() {
    let t = parse_template(
        "Resources:\n  A:\n    Type: AWS::SNS::Topic\n  B:\n    Type: AWS::SQS::Queue\n    DependsOn: A\n  C:\n    Type: AWS::SQS::Queue\n    Properties:\n      QueueName: !Sub '${B.QueueName}-${!Literal}-${AWS::Region}'\n      Tags:\n        - Key: k\n          Value: !GetAtt A.TopicName\n  D:\n    Type: AWS::SQS::Queue\n    Properties:\n      QueueName: !Sub ['${X}', {X: !Ref C}]\n",
        None,
    )
    .unwrap();
    let edges = common::oracle_edges(&t);
    let deps = |id: &str| edges[id].iter().cloned().collect::<Vec<_>>();
    assert!(deps("A").is_empty());
    assert_eq!(deps("B"), ["A"]);
    assert_eq!(deps("C"), ["A", "B"]);
    assert_eq!(deps("D"), ["C"]);
    let orders = common::brute_force_orders(&t);
    assert_eq!(orders.len(), 1);
    assert_eq!(orders.iter().next().unwrap(), &["A", "B", "C", "D"]);
}

