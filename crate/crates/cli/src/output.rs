//! Canonical report serialization.
//!
//! Report JSON is written with sorted keys, floats in %.12g format,
//! UTF-8 and a trailing newline, so identical analyses produce
//! byte-identical files. Twelve significant digits re-read into the same
//! doubles, which makes read + re-serialize a fixed point.

use serde_json::Value;

/// C-style `%.12g`: 12 significant digits, fixed or scientific notation
/// by exponent, trailing zeros trimmed.
pub fn fmt_g(x: f64) -> String {
    if !x.is_finite() {
        // JSON output maps non-finite to null before reaching here; this
        // path only serves human-facing summaries
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", 11, x);
    let (mant, exp) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..12).contains(&exp) {
        format!(
            "{}e{}{:02}",
            trim_zeros(mant),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        let prec = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.prec$}"))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn escape_into(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&fmt_g(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => escape_into(s, out),
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
                out.push_str(&"  ".repeat(indent + 1));
                write_value(item, indent + 1, out);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                escape_into(key, out);
                out.push_str(": ");
                write_value(&map[*key], indent + 1, out);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

/// Serialize a JSON value canonically (sorted keys, %.12g floats,
/// trailing newline).
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

/// Long-format curve CSV: `t,series_id,value`.
pub fn curves_csv(series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut out = String::from("t,series_id,value\n");
    for (id, points) in series {
        for &(t, value) in points {
            out.push_str(&fmt_g(t));
            out.push(',');
            out.push_str(id);
            out.push(',');
            out.push_str(&fmt_g(value));
            out.push('\n');
        }
    }
    out
}
