//! Shared helpers for CLI integration tests: binary invocation, config
//! scaffolding, and a small JSON-Schema validator covering the keyword
//! subset the shipped schemas use.

#![allow(dead_code)] // each integration test binary uses a different slice

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_langevin-deviations"));
    c.env_remove("LANGEVIN_DEVIATIONS_OUT");
    c
}

/// Run the binary with `--config <config> --out-dir <out>` plus `args`.
pub fn run_cli(config: &Path, out: &Path, args: &[&str]) -> Output {
    let mut c = bin();
    c.arg("--config").arg(config).arg("--out-dir").arg(out).args(args);
    c.output().expect("spawning the CLI binary")
}

pub fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed (status {:?})\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("CLI terminated by signal")
}

/// A minimal single-model config on the 1-d linear model.
pub const LINEAR_BASE: &str = r#"
[model]
name = "linear"
dim = 1
[model.params]
a = 1.0
sigma = 1.0
alpha = 1.0

[grid]
horizon = 1.0
steps = 50

[scales]
epsilon = 0.1
kappa = 0.25

[initial]
position = [0.5]

[run]
seed = 7
samples = 200

[rate]
delta = 0.8
target = [0.6]
steps = 800

[sweep]
epsilons = [0.2, 0.12, 0.08]
rate_steps = 400
samples_per_scale = 150

[control]
kind = "constant"
values = [1.0]

[domain]
lower = [-2.0]
upper = [2.0]
"#;

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).expect("writing test config");
    path
}

pub fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

/// The `report` subtree: what must be identical across reruns.
pub fn report_of(envelope: &Value) -> Value {
    envelope
        .get("report")
        .unwrap_or_else(|| panic!("envelope without report field: {envelope}"))
        .clone()
}

pub fn schema_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema")
}

/// Validate `value` against the schema subset used by `schema/*.json`:
/// `type` (string or array), `properties`, `required`, `additionalProperties`
/// (boolean), `items` (single schema), `enum`, `minimum`. Returns the list of
/// violations; empty means valid.
pub fn schema_violations(schema: &Value, value: &Value) -> Vec<String> {
    let mut errors = Vec::new();
    check_node(schema, value, "$", &mut errors);
    errors
}

pub fn assert_matches_schema(schema_file: &str, value: &Value) {
    let schema = read_json(&schema_dir().join(schema_file));
    let errors = schema_violations(&schema, value);
    assert!(
        errors.is_empty(),
        "{schema_file} violations:\n  {}",
        errors.join("\n  ")
    );
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                "integer"
            } else {
                "number"
            }
        }
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn type_accepts(wanted: &str, value: &Value) -> bool {
    let actual = type_name(value);
    // every integer is a number
    wanted == actual || (wanted == "number" && actual == "integer")
}

fn check_node(schema: &Value, value: &Value, path: &str, errors: &mut Vec<String>) {
    let Some(schema) = schema.as_object() else {
        errors.push(format!("{path}: schema node is not an object"));
        return;
    };

    if let Some(expected) = schema.get("type") {
        let options: Vec<&str> = match expected {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(|v| v.as_str()).collect(),
            _ => vec![],
        };
        if !options.iter().any(|t| type_accepts(t, value)) {
            errors.push(format!(
                "{path}: expected type {options:?}, got {}",
                type_name(value)
            ));
            return;
        }
    }

    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            errors.push(format!("{path}: {value} not in enum {allowed:?}"));
        }
    }

    if let (Some(min), Some(x)) = (
        schema.get("minimum").and_then(Value::as_f64),
        value.as_f64(),
    ) {
        if x < min {
            errors.push(format!("{path}: {x} below minimum {min}"));
        }
    }

    if let Some(obj) = value.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(key) {
                    errors.push(format!("{path}: missing required key {key:?}"));
                }
            }
        }
        if schema.get("additionalProperties").and_then(Value::as_bool) == Some(false) {
            for key in obj.keys() {
                if props.is_none_or(|p| !p.contains_key(key)) {
                    errors.push(format!("{path}: unexpected key {key:?}"));
                }
            }
        }
        if let Some(props) = props {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    check_node(sub, v, &format!("{path}.{key}"), errors);
                }
            }
        }
    }

    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            check_node(items, v, &format!("{path}[{i}]"), errors);
        }
    }
}
