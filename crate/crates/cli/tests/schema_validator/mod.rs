//! Minimal JSON-Schema checker covering exactly the keywords used by the
//! schemas in `schemas/`: type, properties, required, additionalProperties,
//! items (schema or tuple), enum, minimum/maximum, exclusiveMinimum,
//! minItems/maxItems, $ref (same-document and sibling-file), definitions.

use std::fs;
use std::path::Path;

use serde_json::Value;

pub fn validate(value: &Value, schema: &Value, schema_dir: &Path) -> Result<(), String> {
    check(value, schema, schema, schema_dir, "$")
}

fn check(
    value: &Value,
    schema: &Value,
    root: &Value,
    dir: &Path,
    at: &str,
) -> Result<(), String> {
    let obj = match schema.as_object() {
        Some(o) => o,
        None => return Ok(()),
    };

    if let Some(reference) = obj.get("$ref").and_then(|r| r.as_str()) {
        let (doc, pointer) = match reference.split_once('#') {
            Some(("", p)) => (root.clone(), p.to_string()),
            Some((file, p)) => {
                let text = fs::read_to_string(dir.join(file))
                    .map_err(|e| format!("{at}: cannot read $ref file {file}: {e}"))?;
                (serde_json::from_str(&text).map_err(|e| format!("{at}: {file}: {e}"))?, p.to_string())
            }
            None => return Err(format!("{at}: unsupported $ref {reference}")),
        };
        let target = if pointer.is_empty() {
            doc.clone()
        } else {
            doc.pointer(&pointer)
                .ok_or_else(|| format!("{at}: $ref pointer {pointer} not found"))?
                .clone()
        };
        return check(value, &target, &doc, dir, at);
    }

    if let Some(types) = obj.get("type") {
        let allowed: Vec<&str> = match types {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(|v| v.as_str()).collect(),
            _ => vec![],
        };
        let actual = match value {
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
        };
        let ok = allowed.iter().any(|t| *t == actual || (*t == "number" && actual == "integer"));
        if !ok {
            return Err(format!("{at}: expected type {allowed:?}, got {actual}"));
        }
    }

    if let Some(options) = obj.get("enum").and_then(|e| e.as_array()) {
        if !options.contains(value) {
            return Err(format!("{at}: {value} not in enum {options:?}"));
        }
    }

    if let Some(n) = value.as_f64() {
        if let Some(min) = obj.get("minimum").and_then(|v| v.as_f64()) {
            if n < min {
                return Err(format!("{at}: {n} < minimum {min}"));
            }
        }
        if let Some(max) = obj.get("maximum").and_then(|v| v.as_f64()) {
            if n > max {
                return Err(format!("{at}: {n} > maximum {max}"));
            }
        }
        if let Some(xmin) = obj.get("exclusiveMinimum").and_then(|v| v.as_f64()) {
            if n <= xmin {
                return Err(format!("{at}: {n} <= exclusiveMinimum {xmin}"));
            }
        }
    }

    if let Some(map) = value.as_object() {
        if let Some(required) = obj.get("required").and_then(|r| r.as_array()) {
            for key in required.iter().filter_map(|k| k.as_str()) {
                if !map.contains_key(key) {
                    return Err(format!("{at}: missing required property `{key}`"));
                }
            }
        }
        let props = obj.get("properties").and_then(|p| p.as_object());
        for (key, item) in map {
            let sub = props.and_then(|p| p.get(key));
            match sub {
                Some(s) => check(item, s, root, dir, &format!("{at}.{key}"))?,
                None => {
                    if obj.get("additionalProperties") == Some(&Value::Bool(false)) {
                        return Err(format!("{at}: unexpected property `{key}`"));
                    }
                }
            }
        }
    }

    if let Some(arr) = value.as_array() {
        if let Some(min) = obj.get("minItems").and_then(|v| v.as_u64()) {
            if (arr.len() as u64) < min {
                return Err(format!("{at}: {} items < minItems {min}", arr.len()));
            }
        }
        if let Some(max) = obj.get("maxItems").and_then(|v| v.as_u64()) {
            if (arr.len() as u64) > max {
                return Err(format!("{at}: {} items > maxItems {max}", arr.len()));
            }
        }
        match obj.get("items") {
            Some(Value::Array(tuple)) => {
                for (i, (item, s)) in arr.iter().zip(tuple.iter()).enumerate() {
                    check(item, s, root, dir, &format!("{at}[{i}]"))?;
                }
            }
            Some(s) => {
                for (i, item) in arr.iter().enumerate() {
                    check(item, s, root, dir, &format!("{at}[{i}]"))?;
                }
            }
            None => {}
        }
    }

    Ok(())
}
