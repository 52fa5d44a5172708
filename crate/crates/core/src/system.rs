//! System-definition files.
//!
//! The format is line oriented, `key = value`, with `#` comments. Arrays
//! use brackets; expressions and names are double-quoted strings.
//!
//! ```text
//! name = "damped cubic"
//! state = ["x1"]
//! f = ["-x1 - x1^3"]
//! h = ["-x1 - x1^3"]              # optional companion field (time-invariant)
//! metric.kind = "euclidean"       # "euclidean" | "constant" | "expr"
//! metric.P = [[1]]                # constant kind only
//! metric.m = ["exp(2*x1)"]        # expr kind only: diagonal entries m_i(x) > 0
//! domain.lower = [-2]
//! domain.upper = [2]
//! equilibrium = [0]               # optional
//! ```
//!
//! Missing optional fields default to `metric.kind = "euclidean"` and
//! `domain = [-1, 1]^n`. Everything is validated at load time: dimensions,
//! positive definiteness of a constant metric (by eigenvalues), positivity
//! of expression metric entries (by sampling the domain box), and time
//! invariance of `h`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::metric::MetricSpec;

/// A parsed and validated system definition.
#[derive(Debug, Clone)]
pub struct SystemDef {
    pub name: String,
    pub state_names: Vec<String>,
    pub f: Vec<Expr>,
    pub f_src: Vec<String>,
    /// Optional companion vector field h(x), time-invariant.
    pub h: Option<Vec<Expr>>,
    pub h_src: Vec<String>,
    pub metric: MetricSpec,
    /// Per-coordinate box `[lower_i, upper_i]`.
    pub domain: Vec<(f64, f64)>,
    pub equilibrium: Option<DVector<f64>>,
}

impl SystemDef {
    pub fn dim(&self) -> usize {
        self.state_names.len()
    }

    /// True when f never references the time variable.
    pub fn is_autonomous(&self) -> bool {
        !self.f.iter().any(|e| e.references_time())
    }

    /// Evaluate the vector field into `out`.
    pub fn eval_f(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        expr::eval_field(&self.f, x, t, out)
    }

    /// ∂f/∂x at (x, t) by dual-number differentiation.
    pub fn jacobian(&self, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        expr::jacobian(&self.f, x, t)
    }

    /// Evaluate the companion field h at x.
    pub fn eval_h(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.h.as_ref().ok_or_else(|| {
            Error::Precondition("system has no companion field h".into())
        })?;
        let mut out = DVector::zeros(self.dim());
        expr::eval_field(h, x, 0.0, &mut out)?;
        Ok(out)
    }

    /// Uniform sample inside the domain box.
    pub fn sample_domain<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.domain.iter().map(|&(lo, hi)| rng.random_range(lo..hi)),
        )
    }

    /// Parse a system definition from text.
    pub fn parse(text: &str) -> Result<SystemDef> {
        build(parse_entries(text)?)
    }

    /// Read and parse a system-definition file.
    pub fn from_path(path: &std::path::Path) -> Result<SystemDef> {
        let text = std::fs::read_to_string(path)?;
        SystemDef::parse(&text)
    }
}

// ---------------------------------------------------------------------------
// Raw value grammar: String | Number | Array
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Str(String),
    Num(f64),
    Arr(Vec<Val>),
}

impl Val {
    fn type_name(&self) -> &'static str {
        match self {
            Val::Str(_) => "string",
            Val::Num(_) => "number",
            Val::Arr(_) => "array",
        }
    }
}

const MAX_VALUE_DEPTH: usize = 32;

fn parse_value(s: &str, line: usize) -> Result<Val> {
    let mut chars = s.char_indices().peekable();
    let v = parse_value_inner(s, &mut chars, line, 0)?;
    skip_ws(&mut chars);
    if let Some((_, c)) = chars.peek() {
        return Err(Error::System(format!(
            "line {line}: unexpected trailing `{c}` in value"
        )));
    }
    Ok(v)
}

type CharIter<'a> = std::iter::Peekable<std::str::CharIndices<'a>>;

fn skip_ws(chars: &mut CharIter) {
    while matches!(chars.peek(), Some((_, c)) if c.is_whitespace()) {
        chars.next();
    }
}

fn parse_value_inner(src: &str, chars: &mut CharIter, line: usize, depth: usize) -> Result<Val> {
    if depth > MAX_VALUE_DEPTH {
        return Err(Error::System(format!(
            "line {line}: value nested deeper than {MAX_VALUE_DEPTH}"
        )));
    }
    skip_ws(chars);
    match chars.peek().copied() {
        Some((_, '"')) => {
            chars.next();
            let mut out = String::new();
            for (_, c) in chars.by_ref() {
                if c == '"' {
                    return Ok(Val::Str(out));
                }
                out.push(c);
            }
            Err(Error::System(format!("line {line}: unterminated string")))
        }
        Some((_, '[')) => {
            chars.next();
            let mut items = Vec::new();
            loop {
                skip_ws(chars);
                if matches!(chars.peek(), Some((_, ']'))) {
                    chars.next();
                    return Ok(Val::Arr(items));
                }
                items.push(parse_value_inner(src, chars, line, depth + 1)?);
                skip_ws(chars);
                match chars.peek().copied() {
                    Some((_, ',')) => {
                        chars.next();
                    }
                    Some((_, ']')) => {}
                    other => {
                        return Err(Error::System(format!(
                            "line {line}: expected `,` or `]` in array, got {other:?}"
                        )))
                    }
                }
            }
        }
        Some((start, c)) if c == '-' || c == '+' || c.is_ascii_digit() || c == '.' => {
            let mut end = start;
            while let Some(&(i, c)) = chars.peek() {
                if c.is_ascii_digit() || "+-.eE".contains(c) {
                    end = i + c.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let text = &src[start..end];
            text.parse::<f64>()
                .map(Val::Num)
                .map_err(|_| Error::System(format!("line {line}: invalid number `{text}`")))
        }
        other => Err(Error::System(format!(
            "line {line}: expected string, number or array, got {other:?}"
        ))),
    }
}

fn parse_entries(text: &str) -> Result<Vec<(String, Val, usize)>> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        // strip comments outside of quotes
        let mut in_str = false;
        let mut content = raw;
        for (i, c) in raw.char_indices() {
            match c {
                '"' => in_str = !in_str,
                '#' if !in_str => {
                    content = &raw[..i];
                    break;
                }
                _ => {}
            }
        }
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            return Err(Error::System(format!(
                "line {line}: expected `key = value`"
            )));
        };
        let key = content[..eq].trim().to_string();
        let value = parse_value(content[eq + 1..].trim(), line)?;
        if entries.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::System(format!("line {line}: duplicate key `{key}`")));
        }
        entries.push((key, value, line));
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// SystemDef construction and validation
// ---------------------------------------------------------------------------

const KNOWN_KEYS: &[&str] = &[
    "name",
    "state",
    "f",
    "h",
    "metric.kind",
    "metric.P",
    "metric.m",
    "domain.lower",
    "domain.upper",
    "equilibrium",
];

fn build(entries: Vec<(String, Val, usize)>) -> Result<SystemDef> {
    for (key, _, line) in &entries {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::System(format!("line {line}: unknown key `{key}`")));
        }
    }
    let get = |k: &str| entries.iter().find(|(key, _, _)| key == k).map(|(_, v, _)| v);

    let name = match get("name") {
        Some(Val::Str(s)) => s.clone(),
        Some(v) => return Err(Error::System(format!("`name` must be a string, got {}", v.type_name()))),
        None => "system".to_string(),
    };

    let state_names = string_array(get("state"), "state")?
        .ok_or_else(|| Error::System("missing required key `state`".into()))?;
    let n = state_names.len();
    if n == 0 {
        return Err(Error::System("`state` must declare at least one variable".into()));
    }
    const RESERVED: &[&str] = &[
        "t", "sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "sinh", "cosh", "atan",
    ];
    for (i, s) in state_names.iter().enumerate() {
        if RESERVED.contains(&s.as_str()) {
            return Err(Error::System(format!("state name `{s}` is reserved")));
        }
        if !s.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
            || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            return Err(Error::System(format!("invalid state name `{s}`")));
        }
        if state_names[..i].contains(s) {
            return Err(Error::System(format!("duplicate state name `{s}`")));
        }
    }

    let f_src = string_array(get("f"), "f")?
        .ok_or_else(|| Error::System("missing required key `f`".into()))?;
    if f_src.len() != n {
        return Err(Error::Dimension {
            context: "f".into(),
            expected: n,
            got: f_src.len(),
        });
    }
    let f = f_src
        .iter()
        .map(|s| expr::parse_with_names(s, &state_names))
        .collect::<Result<Vec<_>>>()?;

    let (h, h_src) = match string_array(get("h"), "h")? {
        Some(src) => {
            if src.len() != n {
                return Err(Error::Dimension {
                    context: "h".into(),
                    expected: n,
                    got: src.len(),
                });
            }
            let parsed = src
                .iter()
                .map(|s| expr::parse_with_names(s, &state_names))
                .collect::<Result<Vec<_>>>()?;
            if parsed.iter().any(|e| e.references_time()) {
                return Err(Error::System(
                    "companion field h must be time-invariant (references t)".into(),
                ));
            }
            (Some(parsed), src)
        }
        None => (None, Vec::new()),
    };

    let domain = match (get("domain.lower"), get("domain.upper")) {
        (None, None) => vec![(-1.0, 1.0); n],
        (Some(lo), Some(hi)) => {
            let lo = number_array(Some(lo), "domain.lower")?.unwrap();
            let hi = number_array(Some(hi), "domain.upper")?.unwrap();
            if lo.len() != n || hi.len() != n {
                return Err(Error::Dimension {
                    context: "domain".into(),
                    expected: n,
                    got: lo.len().min(hi.len()),
                });
            }
            let mut d = Vec::with_capacity(n);
            for i in 0..n {
                // negated form so NaN bounds fail validation
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !(lo[i] < hi[i]) {
                    return Err(Error::System(format!(
                        "domain.lower[{}] = {} must be < domain.upper[{}] = {}",
                        i, lo[i], i, hi[i]
                    )));
                }
                d.push((lo[i], hi[i]));
            }
            d
        }
        _ => {
            return Err(Error::System(
                "domain.lower and domain.upper must be given together".into(),
            ))
        }
    };

    let metric = build_metric(&entries, &state_names, &domain)?;

    let equilibrium = match number_array(get("equilibrium"), "equilibrium")? {
        Some(v) => {
            if v.len() != n {
                return Err(Error::Dimension {
                    context: "equilibrium".into(),
                    expected: n,
                    got: v.len(),
                });
            }
            Some(DVector::from_vec(v))
        }
        None => None,
    };

    Ok(SystemDef {
        name,
        state_names,
        f,
        f_src,
        h,
        h_src,
        metric,
        domain,
        equilibrium,
    })
}

fn build_metric(
    entries: &[(String, Val, usize)],
    names: &[String],
    domain: &[(f64, f64)],
) -> Result<MetricSpec> {
    let get = |k: &str| entries.iter().find(|(key, _, _)| key == k).map(|(_, v, _)| v);
    let n = names.len();
    let kind = match get("metric.kind") {
        Some(Val::Str(s)) => s.clone(),
        Some(v) => {
            return Err(Error::System(format!(
                "`metric.kind` must be a string, got {}",
                v.type_name()
            )))
        }
        None => "euclidean".to_string(),
    };
    match kind.as_str() {
        "euclidean" => {
            if get("metric.P").is_some() || get("metric.m").is_some() {
                return Err(Error::System(
                    "euclidean metric takes neither metric.P nor metric.m".into(),
                ));
            }
            Ok(MetricSpec::Euclidean)
        }
        "constant" => {
            let rows = match get("metric.P") {
                Some(Val::Arr(rows)) => rows.clone(),
                _ => return Err(Error::System("constant metric requires metric.P".into())),
            };
            if rows.len() != n {
                return Err(Error::Dimension {
                    context: "metric.P".into(),
                    expected: n,
                    got: rows.len(),
                });
            }
            let mut p = DMatrix::zeros(n, n);
            for (i, row) in rows.iter().enumerate() {
                let Val::Arr(cols) = row else {
                    return Err(Error::System("metric.P rows must be arrays".into()));
                };
                if cols.len() != n {
                    return Err(Error::Dimension {
                        context: format!("metric.P row {i}"),
                        expected: n,
                        got: cols.len(),
                    });
                }
                for (j, v) in cols.iter().enumerate() {
                    let Val::Num(x) = v else {
                        return Err(Error::System("metric.P entries must be numbers".into()));
                    };
                    p[(i, j)] = *x;
                }
            }
            let scale = p.amax().max(1.0);
            for i in 0..n {
                for j in 0..i {
                    if (p[(i, j)] - p[(j, i)]).abs() > 1e-12 * scale {
                        return Err(Error::System("metric.P must be symmetric".into()));
                    }
                }
            }
            let eig = p.clone().symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                return Err(Error::System(format!(
                    "metric.P is not positive definite (eigenvalue {min})"
                )));
            }
            Ok(MetricSpec::Constant(p))
        }
        "expr" => {
            let srcs = string_array(get("metric.m"), "metric.m")?
                .ok_or_else(|| Error::System("expr metric requires metric.m".into()))?;
            if srcs.len() != n {
                return Err(Error::Dimension {
                    context: "metric.m".into(),
                    expected: n,
                    got: srcs.len(),
                });
            }
            let exprs = srcs
                .iter()
                .map(|s| expr::parse_with_names(s, names))
                .collect::<Result<Vec<_>>>()?;
            if exprs.iter().any(|e| e.references_time()) {
                return Err(Error::System("metric.m entries must not reference t".into()));
            }
            // positivity checked by sampling the domain box
            let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_7472);
            for _ in 0..256 {
                let x = DVector::from_iterator(
                    n,
                    domain.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)),
                );
                for (i, e) in exprs.iter().enumerate() {
                    let v = expr::eval_expr(e, &x, 0.0)?;
                    if v <= 0.0 {
                        return Err(Error::System(format!(
                            "metric.m[{i}] evaluates to {v} <= 0 at sampled x = {:?}",
                            x.as_slice()
                        )));
                    }
                }
            }
            Ok(MetricSpec::DiagExpr(exprs))
        }
        other => Err(Error::System(format!("unknown metric.kind `{other}`"))),
    }
}

fn string_array(v: Option<&Val>, key: &str) -> Result<Option<Vec<String>>> {
    match v {
        None => Ok(None),
        Some(Val::Arr(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Val::Str(s) => out.push(s.clone()),
                    other => {
                        return Err(Error::System(format!(
                            "`{key}` must be an array of strings, found {}",
                            other.type_name()
                        )))
                    }
                }
            }
            Ok(Some(out))
        }
        Some(other) => Err(Error::System(format!(
            "`{key}` must be an array, got {}",
            other.type_name()
        ))),
    }
}

fn number_array(v: Option<&Val>, key: &str) -> Result<Option<Vec<f64>>> {
    match v {
        None => Ok(None),
        Some(Val::Arr(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Val::Num(x) => out.push(*x),
                    other => {
                        return Err(Error::System(format!(
                            "`{key}` must be an array of numbers, found {}",
                            other.type_name()
                        )))
                    }
                }
            }
            Ok(Some(out))
        }
        Some(other) => Err(Error::System(format!(
            "`{key}` must be an array, got {}",
            other.type_name()
        ))),
    }
}
