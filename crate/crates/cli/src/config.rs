//! Building an `ExperimentConfig` from defaults, a JSON file and
//! `key=value` overrides.
//!
//! Keys are either dotted paths from the root (`learner.lambda_g`) or a bare
//! field name that appears exactly once in the config tree (`lambda_g`).
//! A bare name that is also a root field refers to the root field, so `seed`
//! means the experiment seed.

use std::path::Path;

use nodl_core::{Error, ExperimentConfig, Result};
use serde_json::Value;

/// Recursively merge `patch` into `base`. An object whose `kind` tag changes
/// replaces the old object instead of merging into it.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            if p.get("kind").is_some_and(|k| b.get("kind") != Some(k)) {
                *b = p;
                return;
            }
            for (key, value) in p {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, patch) => *slot = patch,
    }
}

fn leaf_paths(value: &Value, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (key, child) in map {
                prefix.push(key.clone());
                leaf_paths(child, prefix, out);
                prefix.pop();
            }
        }
        _ => out.push(prefix.clone()),
    }
}

fn lookup<'a>(tree: &'a Value, path: &[String]) -> Option<&'a Value> {
    path.iter()
        .try_fold(tree, |node, key| node.as_object()?.get(key))
}

/// Resolve an override key against the current tree.
pub fn resolve_key(tree: &Value, key: &str) -> Result<Vec<String>> {
    let path: Vec<String> = key.split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::InvalidConfig(format!("malformed key {key:?}")));
    }
    if lookup(tree, &path).is_some() {
        return Ok(path);
    }
    if path.len() == 1 {
        let mut leaves = Vec::new();
        leaf_paths(tree, &mut Vec::new(), &mut leaves);
        let hits: Vec<_> = leaves
            .into_iter()
            .filter(|p| p.last() == Some(&path[0]))
            .collect();
        match hits.len() {
            1 => return Ok(hits.into_iter().next().unwrap()),
            0 => {}
            _ => {
                let names: Vec<String> = hits.iter().map(|p| p.join(".")).collect();
                return Err(Error::InvalidConfig(format!(
                    "key {key:?} is ambiguous; use one of {}",
                    names.join(", ")
                )));
            }
        }
    }
    Err(Error::InvalidConfig(format!("unknown config key {key:?}")))
}

/// JSON literal if the text parses as one, otherwise a plain string.
pub fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_owned()))
}

pub fn set(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let path = resolve_key(tree, key)?;
    let (last, parents) = path.split_last().expect("resolved keys are non-empty");
    let mut node = tree;
    for p in parents {
        node = node.get_mut(p).expect("resolved path exists");
    }
    node.as_object_mut()
        .expect("resolved parent is an object")
        .insert(last.clone(), value);
    Ok(())
}

pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| {
        Error::InvalidConfig(format!(
            "override {assignment:?} is not of the form key=value"
        ))
    })?;
    set(tree, key.trim(), parse_value(value.trim()))
}

/// Defaults, then the config file, then overrides in order.
pub fn build(base: &ExperimentConfig, file: Option<&Path>, overrides: &[String]) -> Result<Value> {
    let mut tree = serde_json::to_value(base)?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        let patch: Value = serde_json::from_str(&text).map_err(|e| {
            Error::InvalidConfig(format!("config {} is not valid JSON: {e}", path.display()))
        })?;
        if !patch.is_object() {
            return Err(Error::InvalidConfig(format!(
                "config {} must be a JSON object",
                path.display()
            )));
        }
        merge(&mut tree, patch);
    }
    for assignment in overrides {
        apply_override(&mut tree, assignment)?;
    }
    Ok(tree)
}

pub fn finish(tree: Value) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_value(tree)
        .map_err(|e| Error::InvalidConfig(format!("config does not match the schema: {e}")))?;
    config.validate()?;
    Ok(config)
}
