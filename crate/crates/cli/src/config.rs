//! Effective configuration: defaults, then the config file, then dotted-path
//! overrides, then the seed from the environment or the command line.

use std::path::Path;

use coalition_sense::scenario::ScenarioConfig;
use serde_json::{Map, Value};

use crate::CliError;

pub const SEED_ENV: &str = "COALITION_SENSE_SEED";

pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let mut doc = serde_json::to_value(ScenarioConfig::default()).expect("default config serializes");
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config("--config", format!("{} is not valid JSON: {e}", path.display())))?;
        if !file.is_object() {
            return Err(CliError::config("--config", "top level must be a JSON object"));
        }
        merge(&mut doc, file);
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let mut config = parse(doc)?;
    let seed = match seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::config(SEED_ENV, format!("expected an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

/// Deserializes with the failing field's dotted path in the error.
pub fn parse(doc: Value) -> Result<ScenarioConfig, CliError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "<root>".to_string() } else { path };
        CliError::config(field, e.into_inner().to_string())
    })
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// `a.b.c=value`; the value is read as JSON, falling back to a bare string.
pub fn apply_override(doc: &mut Value, pair: &str) -> Result<(), CliError> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| CliError::config("--overrides", format!("expected key=value, got `{pair}`")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config("--overrides", format!("malformed key `{key}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let (last, parents) = parts.split_last().expect("key has at least one part");
    let mut node = doc;
    for p in parents {
        let obj = node.as_object_mut().expect("walk only descends into objects");
        let child = obj.entry(p.to_string()).or_insert(Value::Null);
        if child.is_null() {
            *child = Value::Object(Map::new());
        }
        if !child.is_object() {
            return Err(CliError::config(key, format!("`{p}` is not an object")));
        }
        node = child;
    }
    node.as_object_mut()
        .expect("walk ends on an object")
        .insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_creates_missing_parents() {
        let mut doc = json!({"requirement": null});
        apply_override(&mut doc, "requirement.chi=0.9").unwrap();
        assert_eq!(doc, json!({"requirement": {"chi": 0.9}}));
    }

    #[test]
    fn override_values_are_json_or_strings() {
        let mut doc = json!({});
        apply_override(&mut doc, "a=[1,2]").unwrap();
        apply_override(&mut doc, "b=nearest-first").unwrap();
        apply_override(&mut doc, "c=null").unwrap();
        assert_eq!(doc, json!({"a": [1, 2], "b": "nearest-first", "c": null}));
    }

    #[test]
    fn override_through_a_scalar_is_rejected() {
        let mut doc = json!({"n_sus": 3});
        let err = apply_override(&mut doc, "n_sus.x=1").unwrap_err();
        assert!(err.to_string().contains("n_sus.x"));
    }

    #[test]
    fn merge_keeps_unspecified_defaults() {
        let mut base = json!({"detection": {"m": 5, "alpha": 0.1}, "n_sus": 50});
        merge(&mut base, json!({"detection": {"m": 10}}));
        assert_eq!(base, json!({"detection": {"m": 10, "alpha": 0.1}, "n_sus": 50}));
    }

    #[test]
    fn parse_names_the_nested_field() {
        let mut doc = serde_json::to_value(ScenarioConfig::default()).unwrap();
        apply_override(&mut doc, "detection.bogus=1").unwrap();
        let err = parse(doc).unwrap_err().to_string();
        assert!(err.contains("detection"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }
}
