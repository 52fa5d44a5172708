//! Certification reports.
//!
//! A verdict is always the outcome of a sampled check: "no violation
//! found on N samples" plus the worst margin observed, never a formal
//! proof. Every numeric knob that influenced the check is echoed into
//! `config`, and identical seed + configuration reproduce the report
//! exactly.

use std::collections::BTreeMap;

use serde_json::Value;

/// Empirical stability classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Incrementally exponentially stable evidence.
    Ies,
    /// Incrementally asymptotically stable evidence.
    Ias,
    /// Incrementally stable (distances bounded) evidence.
    Is,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Ies => "IES",
            Verdict::Ias => "IAS",
            Verdict::Is => "IS",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Estimated envelope `d(t) <= K e^(-lambda t) d(0)`; `r_squared` is the
/// goodness of the pooled log-linear fit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateEstimate {
    pub k: Option<f64>,
    pub lambda: Option<f64>,
    pub r_squared: Option<f64>,
}

/// One broken inequality: where, at which tangent, by how much.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub slack: f64,
}

pub type ConfigEcho = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub verdict: Verdict,
    pub rate: RateEstimate,
    /// Worst slack of the checked inequality over all samples
    /// (negative means satisfied with room to spare).
    pub margin: f64,
    pub violations: Vec<Violation>,
    /// Samples actually evaluated.
    pub samples: usize,
    /// Samples skipped because of per-sample failures; any skip caps the
    /// verdict at inconclusive.
    pub skipped: usize,
    pub notes: Vec<String>,
    pub config: ConfigEcho,
}

impl CertReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.skipped == 0
    }
}

/// Insert a float knob into a config echo, mapping non-finite to null.
pub fn echo_num(echo: &mut ConfigEcho, key: &str, value: f64) {
    echo.insert(key.to_string(), json_num(value));
}

pub fn echo_int(echo: &mut ConfigEcho, key: &str, value: usize) {
    echo.insert(key.to_string(), Value::from(value as u64));
}

pub fn echo_str(echo: &mut ConfigEcho, key: &str, value: &str) {
    echo.insert(key.to_string(), Value::from(value));
}

/// JSON number with non-finite values mapped to null (canonical output
/// cannot represent them).
pub fn json_num(value: f64) -> Value {
    if value.is_finite() {
        serde_json::Number::from_f64(value).map(Value::Number).unwrap_or(Value::Null)
    } else {
        Value::Null
    }
}
