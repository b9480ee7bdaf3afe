#![allow(dead_code)]

use std::path::PathBuf;

use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn schema(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn type_matches(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "integer" => v.is_u64() || v.is_i64(),
        "number" => v.is_number(),
        "null" => v.is_null(),
        _ => false,
    }
}

/// Checks the subset of JSON Schema used by the files in `schema/`:
/// type, required, properties, items, enum, oneOf, minimum, maximum,
/// exclusiveMinimum.
pub fn validate(schema: &Value, v: &Value, path: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type").and_then(Value::as_str) {
        if !type_matches(t, v) {
            return Err(format!("{path}: expected {t}, found {v}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(v) {
            return Err(format!("{path}: {v} not in {options:?}"));
        }
    }
    if let Some(x) = v.as_f64() {
        if let Some(m) = schema.get("minimum").and_then(Value::as_f64) {
            if x < m {
                return Err(format!("{path}: {x} < minimum {m}"));
            }
        }
        if let Some(m) = schema.get("maximum").and_then(Value::as_f64) {
            if x > m {
                return Err(format!("{path}: {x} > maximum {m}"));
            }
        }
        if let Some(m) = schema.get("exclusiveMinimum").and_then(Value::as_f64) {
            if x <= m {
                return Err(format!("{path}: {x} <= exclusiveMinimum {m}"));
            }
        }
    }
    if let Some(req) = schema.get("required").and_then(Value::as_array) {
        for key in req {
            let key = key.as_str().unwrap();
            if v.get(key).is_none() {
                return Err(format!("{path}: missing key {key}"));
            }
        }
    }
    if let (Some(props), Some(obj)) = (schema.get("properties").and_then(Value::as_object), v.as_object()) {
        for (key, sub) in props {
            if let Some(child) = obj.get(key) {
                validate(sub, child, &format!("{path}.{key}"))?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            validate(items, child, &format!("{path}[{i}]"))?;
        }
    }
    if let Some(options) = schema.get("oneOf").and_then(Value::as_array) {
        let matching = options.iter().filter(|o| validate(o, v, path).is_ok()).count();
        if matching != 1 {
            return Err(format!("{path}: matches {matching} of the oneOf branches"));
        }
    }
    Ok(())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|x| (x - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
