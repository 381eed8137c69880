//! Canonical JSON output: sorted keys (serde_json's default map), floats
//! rounded to 12 significant digits, so identical runs produce byte-identical
//! files.

use serde_json::Value;

pub const FLOAT_SIG_DIGITS: usize = 12;

/// Round a float to 12 significant decimal digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", FLOAT_SIG_DIGITS - 1, x).parse().expect("formatted float parses")
}

/// Render a float at the canonical precision.
pub fn format_float(x: f64) -> String {
    let rounded = round_sig(x);
    let mut s = serde_json::to_string(&rounded).expect("float serializes");
    if s == "null" {
        s = "NaN".to_string();
    }
    s
}

/// Recursively round every number in a JSON value.
pub fn round_floats(value: Value) -> Value {
    match value {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::from(i)
            } else if let Some(u) = n.as_u64() {
                Value::from(u)
            } else {
                let f = n.as_f64().expect("number is f64");
                serde_json::Number::from_f64(round_sig(f)).map(Value::Number).unwrap_or(Value::Null)
            }
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

/// Canonical pretty rendering of any serializable value.
pub fn canonical_string<T: serde::Serialize>(value: &T) -> String {
    let v = round_floats(serde_json::to_value(value).expect("value serializes"));
    let mut s = serde_json::to_string_pretty(&v).expect("json renders");
    s.push('\n');
    s
}

/// Write canonical JSON to a file.
pub fn write_canonical<T: serde::Serialize>(value: &T, path: &std::path::Path) -> crate::Result<()> {
    std::fs::write(path, canonical_string(value))
        .map_err(|e| crate::Error::io(crate::Stage::Cli, path.display().to_string(), e))
}
