use std::collections::BTreeSet;

use indexmap::{IndexMap, IndexSet};

use super::{Template, Value};

/// Resource dependency DAG. `dependencies[a]` lists the resources `a` needs first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    pub dependencies: IndexMap<String, Vec<String>>,
    /// Topological order, dependencies before dependents. Ties keep declaration order.
    pub order: Vec<String>,
}

impl DependencyGraph {
    pub fn position(&self, id: &str) -> Option<usize> {
        self.order.iter().position(|o| o == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("Circular dependency between resources: [{}]", .members.join(", "))]
pub struct CycleError {
    /// Logical ids on one cycle, in traversal order.
    pub members: Vec<String>,
}

/// Names referenced from a value via `Ref`, `Fn::GetAtt` and `Fn::Sub` placeholders.
pub fn references_of(value: &Value) -> IndexSet<String> {
    let mut out = IndexSet::new();
    collect_refs(value, &mut out);
    out
}

fn collect_refs(value: &Value, out: &mut IndexSet<String>) {
    match value {
        Value::Intrinsic(i) => {
            match (i.name.as_str(), &i.argument) {
                ("Ref", Value::String(name)) => {
                    out.insert(name.clone());
                }
                ("Fn::GetAtt", Value::Sequence(parts)) => {
                    if let Some(Value::String(name)) = parts.first() {
                        out.insert(name.clone());
                    }
                }
                ("Fn::Sub", arg) => {
                    let (text, vars) = match arg {
                        Value::String(s) => (Some(s.as_str()), None),
                        Value::Sequence(items) => (items.first().and_then(Value::as_str), items.get(1)),
                        _ => (None, None),
                    };
                    let local: BTreeSet<&str> = vars
                        .and_then(Value::as_map)
                        .map(|m| m.keys().map(String::as_str).collect())
                        .unwrap_or_default();
                    if let Some(text) = text {
                        for placeholder in sub_placeholders(text) {
                            let target = placeholder.split('.').next().unwrap_or(&placeholder);
                            if !local.contains(target) {
                                out.insert(target.to_string());
                            }
                        }
                    }
                    if let Some(v) = vars {
                        collect_refs(v, out);
                    }
                    return;
                }
                _ => {}
            }
            collect_refs(&i.argument, out);
        }
        Value::Sequence(items) => items.iter().for_each(|v| collect_refs(v, out)),
        Value::Map(m) => m.values().for_each(|v| collect_refs(v, out)),
        _ => {}
    }
}

/// `${Name}` / `${Name.Attr}` placeholders of a `Fn::Sub` string; `${!Literal}` is skipped.
pub fn sub_placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        let after = &rest[start + 2..];
        match after.find('}') {
            Some(end) => {
                let inner = &after[..end];
                if !inner.starts_with('!') {
                    out.push(inner.trim().to_string());
                }
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

/// Builds the resource DAG from `Ref`/`GetAtt`/`Sub` references and `DependsOn`.
/// References to parameters, pseudo-parameters or unknown names add no edge.
pub fn dependency_graph(template: &Template) -> Result<DependencyGraph, CycleError> {
    let mut dependencies: IndexMap<String, Vec<String>> = IndexMap::new();
    for (id, res) in &template.resources {
        let mut deps: IndexSet<String> = IndexSet::new();
        for v in res.properties.values() {
            deps.extend(references_of(v));
        }
        for v in res.attributes.values() {
            deps.extend(references_of(v));
        }
        deps.extend(res.depends_on.iter().cloned());
        let deps = deps
            .into_iter()
            .filter(|d| template.resources.contains_key(d))
            .collect();
        dependencies.insert(id.clone(), deps);
    }

    let mut placed: IndexSet<String> = IndexSet::new();
    while placed.len() < dependencies.len() {
        let next = dependencies
            .iter()
            .find(|(id, deps)| !placed.contains(*id) && deps.iter().all(|d| placed.contains(d)))
            .map(|(id, _)| id.clone());
        match next {
            Some(id) => {
                placed.insert(id);
            }
            None => {
                return Err(CycleError {
                    members: find_cycle(&dependencies, &placed),
                })
            }
        }
    }
    Ok(DependencyGraph {
        dependencies,
        order: placed.into_iter().collect(),
    })
}

fn find_cycle(deps: &IndexMap<String, Vec<String>>, placed: &IndexSet<String>) -> Vec<String> {
    // Every unplaced node has an unplaced dependency, so following them must revisit a node.
    let start = deps.keys().find(|k| !placed.contains(*k)).expect("an unplaced node exists");
    let mut path: Vec<String> = vec![start.clone()];
    loop {
        let current = path.last().expect("non-empty");
        let next = deps[current]
            .iter()
            .find(|d| !placed.contains(*d))
            .expect("unplaced nodes keep an unplaced dependency")
            .clone();
        if let Some(pos) = path.iter().position(|p| *p == next) {
            let mut cycle = path.split_off(pos);
            cycle.sort();
            return cycle;
        }
        path.push(next);
    }
}
