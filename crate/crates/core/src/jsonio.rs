//! Deterministic JSON emission for file outputs.
//!
//! Floating-point values are printed with 17 significant digits in
//! scientific notation, which round-trips every finite f64 exactly and
//! keeps outputs byte-stable. Object keys are emitted in sorted order.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// Serialize any value to the deterministic 17-significant-digit format.
pub fn to_json_string<S: Serialize>(value: &S) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    emit(&v, &mut out);
    Ok(out)
}

fn emit(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().expect("JSON number");
                emit_f64(f, out);
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"))
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                emit(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serialization"));
                out.push(':');
                emit(item, out);
            }
            out.push('}');
        }
    }
}

fn emit_f64(f: f64, out: &mut String) {
    // 1 leading + 16 fractional digits = 17 significant digits.
    out.push_str(&format!("{f:.16e}"));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, 55.0, 1e-300, -2.5e17, f64::MIN_POSITIVE] {
            let s = to_json_string(&x).unwrap();
            let back: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn integers_stay_integers() {
        let s = to_json_string(&serde_json::json!({"n": 42, "x": 0.5})).unwrap();
        assert_eq!(s, "{\"n\":42,\"x\":5.0000000000000000e-1}");
    }

    #[test]
    fn keys_are_sorted() {
        let s = to_json_string(&serde_json::json!({"b": 1, "a": 2})).unwrap();
        assert_eq!(s, "{\"a\":2,\"b\":1}");
    }
}
