//! Deterministic JSON rendering: object keys come out sorted (serde_json's
//! default map is a BTreeMap) and every float is serialized through the
//! fixed 12-significant-digit scheme (with an exact fallback), so identical
//! runs produce identical bytes and emitted data can be read back in.

use gromovlab::format_sig12;
use ndarray::{Array1, Array2, ArrayD, Axis};
use serde_json::Value;

pub fn render(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_value(value: &Value, depth: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&format_sig12(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                indent(depth + 1, out);
                write_value(item, depth + 1, out);
            }
            out.push('\n');
            indent(depth, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                indent(depth + 1, out);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(v, depth + 1, out);
            }
            out.push('\n');
            indent(depth, out);
            out.push('}');
        }
    }
}

pub fn vec_value(v: &Array1<f64>) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

pub fn matrix_value(m: &Array2<f64>) -> Value {
    Value::Array(m.rows().into_iter().map(|row| Value::Array(row.iter().map(|&x| num(x)).collect())).collect())
}

pub fn tensor_value(t: &ArrayD<f64>) -> Value {
    if t.ndim() == 1 {
        return Value::Array(t.iter().map(|&x| num(x)).collect());
    }
    Value::Array(
        (0..t.shape()[0])
            .map(|i| tensor_value(&t.index_axis(Axis(0), i).to_owned()))
            .collect(),
    )
}

/// NaN marks failed entries; JSON carries them as null.
pub fn num(x: f64) -> Value {
    match serde_json::Number::from_f64(x) {
        Some(n) => Value::Number(n),
        None => Value::Null,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_use_fixed_significant_digits() {
        let v = json!({"value": 0.5, "count": 3});
        let s = render(&v);
        assert!(s.contains("5.00000000000e-1"), "{s}");
        assert!(s.contains("\"count\": 3"), "{s}");
    }

    #[test]
    fn floats_round_trip_exactly() {
        for x in [2.0f64.sqrt(), 1.0 / 6.0, 0.1 + 0.2, 5e-324] {
            let rendered = gromovlab::format_sig12(x);
            assert_eq!(rendered.parse::<f64>().unwrap(), x, "{rendered}");
        }
    }

    #[test]
    fn keys_are_sorted() {
        let v = json!({"zeta": 1, "alpha": 2});
        let s = render(&v);
        let a = s.find("alpha").unwrap();
        let z = s.find("zeta").unwrap();
        assert!(a < z);
    }

    #[test]
    fn nan_becomes_null() {
        let v = Value::Array(vec![num(f64::NAN), num(1.0)]);
        let s = render(&v);
        assert!(s.contains("null"));
    }
}
