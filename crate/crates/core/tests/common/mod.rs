//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance target.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;

use stackforge::sim::{delete_stack, deploy, SimEnvironment};
use stackforge::{extract_code_block, parse_template, Template, Value};

pub fn desk_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/desk")
}

/// Reference templates of the desk manifest, sorted by file name.
pub fn desk_templates() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(desk_dir().join("templates"))
        .expect("desk templates")
        .map(|e| {
            let path = e.expect("dir entry").path();
            let name = path.file_stem().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&path).expect("template text"))
        })
        .collect();
    out.sort();
    out
}

/// Parsed templates of the scripted replies that fail only at deployment
/// time or not at all; used to exercise rollback.
pub fn desk_variants() -> Vec<Template> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(desk_dir().join("replies"))
        .expect("desk replies")
        .map(|e| e.expect("dir entry").path())
        .collect();
    paths.sort();
    paths
        .iter()
        .filter_map(|p| {
            let text = extract_code_block(&std::fs::read_to_string(p).ok()?).ok()?;
            parse_template(&text, None).ok()
        })
        .collect()
}

fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else { break };
        let inner = &after[..end];
        if !inner.starts_with('!') {
            out.push(inner.split('.').next().unwrap_or(inner).to_string());
        }
        rest = &after[end + 1..];
    }
    out
}

fn collect_refs(v: &Value, out: &mut BTreeSet<String>) {
    match v {
        Value::Intrinsic(i) => match i.name.as_str() {
            "Ref" => {
                if let Value::String(s) = &i.argument {
                    out.insert(s.clone());
                }
            }
            "Fn::GetAtt" => match &i.argument {
                Value::String(s) => {
                    out.insert(s.split('.').next().unwrap_or(s).to_string());
                }
                Value::Sequence(items) => {
                    if let Some(Value::String(s)) = items.first() {
                        out.insert(s.clone());
                    }
                }
                _ => {}
            },
            "Fn::Sub" => match &i.argument {
                Value::String(s) => out.extend(placeholders(s)),
                Value::Sequence(items) => {
                    let vars: BTreeSet<String> = match items.get(1) {
                        Some(Value::Map(m)) => m.keys().cloned().collect(),
                        _ => BTreeSet::new(),
                    };
                    if let Some(Value::String(s)) = items.first() {
                        out.extend(placeholders(s).into_iter().filter(|p| !vars.contains(p)));
                    }
                    if let Some(vals) = items.get(1) {
                        collect_refs(vals, out);
                    }
                }
                other => collect_refs(other, out),
            },
            _ => collect_refs(&i.argument, out),
        },
        Value::Sequence(items) => items.iter().for_each(|x| collect_refs(x, out)),
        Value::Map(m) => m.values().for_each(|x| collect_refs(x, out)),
        _ => {}
    }
}

/// Resource-to-resource dependencies, recomputed from the raw template.
pub fn oracle_edges(t: &Template) -> BTreeMap<String, BTreeSet<String>> {
    t.resources
        .iter()
        .map(|(id, r)| {
            let mut deps: BTreeSet<String> = r.depends_on.iter().cloned().collect();
            r.properties.values().for_each(|v| collect_refs(v, &mut deps));
            deps.retain(|d| d != id && t.resources.contains_key(d));
            (id.clone(), deps)
        })
        .collect()
}

/// Every ordering of the resources in which dependencies come first, found
/// by trying all permutations.
pub fn brute_force_orders(t: &Template) -> BTreeSet<Vec<String>> {
    let edges = oracle_edges(t);
    let ids: Vec<String> = t.resources.keys().cloned().collect();
    let mut valid = BTreeSet::new();
    let mut perm = ids.clone();
    permute(&mut perm, 0, &mut |p| {
        let pos: BTreeMap<&String, usize> = p.iter().enumerate().map(|(i, id)| (id, i)).collect();
        if edges.iter().all(|(id, deps)| deps.iter().all(|d| pos[d] < pos[id])) {
            valid.insert(p.to_vec());
        }
    });
    valid
}

fn permute(items: &mut [String], k: usize, visit: &mut dyn FnMut(&[String])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Applies up to three random text edits. Edits target every stage: some
/// break the YAML layout, some the resource schema, some only deployment.
pub fn mutate(text: &str, rng: &mut impl Rng) -> String {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    for _ in 0..rng.gen_range(0..=3) {
        let i = rng.gen_range(0..lines.len());
        match rng.gen_range(0..8) {
            0 => {
                let dup = lines[i].clone();
                lines.insert(i, dup);
            }
            1 => lines[i].push(' '),
            2 => {
                if let Some(p) = lines.iter().position(|l| l.trim() == "Properties:") {
                    let indent = lines[p].len() - lines[p].trim_start().len() + 2;
                    lines.insert(p + 1, format!("{}NotARealProperty: 1", " ".repeat(indent)));
                }
            }
            3 => {
                lines.remove(i);
                if lines.is_empty() {
                    lines.push("Resources: {}".into());
                }
            }
            4 => {
                if let Some(l) = lines.iter_mut().filter(|l| l.contains("!Ref ")).nth(rng.gen_range(0..3)) {
                    let at = l.find("!Ref ").unwrap();
                    l.replace_range(at.., "!Ref MissingThing");
                }
            }
            5 => {
                if let Some(l) = lines.iter_mut().find(|l| l.trim_start().starts_with("Default:")) {
                    let indent = l.len() - l.trim_start().len();
                    *l = format!("{}Default: arbitrary-value", " ".repeat(indent));
                }
            }
            6 => lines[i].insert(0, ' '),
            _ => {
                if let Some(l) = lines.iter_mut().find(|l| l.contains('[')) {
                    *l = l.replacen('[', "[ ", 1);
                }
            }
        }
    }
    lines.join("\n") + "\n"
}

/// A random run of deploys (good references and failing variants) and
/// deletes, ending with every stack deleted. A failed deploy must leave the
/// state exactly as it found it. Returns how many deploys rolled back.
pub fn random_sim_sequence(env: &mut SimEnvironment, pool: &[Template], rng: &mut impl Rng) -> Result<usize, String> {
    let mut rollbacks = 0;
    for step in 0..rng.gen_range(1..=8) {
        let live = env.stack_ids();
        if !live.is_empty() && rng.gen_bool(0.35) {
            let id = live.choose(rng).unwrap().clone();
            delete_stack(env, &id).map_err(|e| format!("step {step}: {e}"))?;
        } else {
            let t = pool.choose(rng).unwrap();
            let before = env.state().clone();
            if let Err(f) = deploy(env, t, &BTreeMap::new()) {
                rollbacks += usize::from(f.stack_id.is_some());
                if *env.state() != before {
                    return Err(format!("step {step}: failed deploy changed state ({f})"));
                }
            }
        }
    }
    for id in env.stack_ids() {
        delete_stack(env, &id).map_err(|e| e.to_string())?;
    }
    Ok(rollbacks)
}
