//! Scalar-expression DSL: AST, parser, evaluation and exact Jacobians.
//!
//! Grammar (operators listed from loosest to tightest binding):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-" unary | power
//! power  := atom ("^" unary)?          -- right associative
//! atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! `^` binds tighter than unary minus, so `-x1^2` is `-(x1^2)`. State
//! variables are `x1 .. xn` (or the names declared in a system file), `t`
//! is the time variable, and the function set is restricted to smooth
//! elementary functions so that every parsed field is C^1 on its domain.
//!
//! Evaluation is generic over a scalar type; plugging in [`Dual`] gives
//! exact forward-mode derivatives and [`jacobian`] builds ∂f/∂x with one
//! seed pass per coordinate direction.

use nalgebra::{DMatrix, DVector};

use crate::dual::Dual;
use crate::error::{Error, Result};

/// Elementary functions admitted by the DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Sinh,
    Cosh,
    Atan,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "atan" => Func::Atan,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Atan => "atan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// One AST node. `span` is the byte offset of the node in its source
/// string (for binary nodes, the operator position) and is ignored by
/// equality: two trees compare equal iff they have the same shape.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Const(f64),
    /// Zero-based state-variable index.
    Var(usize),
    Time,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Expr {
    fn new(kind: ExprKind, span: usize) -> Expr {
        Expr { kind, span }
    }

    /// True if the tree contains the time variable.
    pub fn references_time(&self) -> bool {
        match &self.kind {
            ExprKind::Time => true,
            ExprKind::Const(_) | ExprKind::Var(_) => false,
            ExprKind::Neg(c) | ExprKind::Call(_, c) => c.references_time(),
            ExprKind::Bin(_, l, r) => l.references_time() || r.references_time(),
        }
    }
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' | b'(' | b')' => {
                let tok = match c {
                    b'+' => Tok::Plus,
                    b'-' => Tok::Minus,
                    b'*' => Tok::Star,
                    b'/' => Tok::Slash,
                    b'^' => Tok::Caret,
                    b'(' => Tok::LParen,
                    _ => Tok::RParen,
                };
                toks.push(Token { tok, offset: i });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                // optional exponent
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| Error::Parse {
                    message: format!("invalid number `{text}`"),
                    offset: start,
                })?;
                toks.push(Token {
                    tok: Tok::Num(value),
                    offset: start,
                });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push(Token {
                    tok: Tok::Ident(src[start..i].to_string()),
                    offset: start,
                });
            }
            _ => {
                return Err(Error::Parse {
                    message: format!(
                        "unexpected character `{}`",
                        src[i..].chars().next().unwrap()
                    ),
                    offset: i,
                })
            }
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

// recursion guard: parsing is total, so pathological nesting must become
// an error instead of exhausting the stack
const MAX_DEPTH: usize = 256;

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    end: usize,
    names: &'a [String],
    depth: usize,
}

impl<'a> Parser<'a> {
    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(Error::Parse {
                message: format!("expression nested deeper than {MAX_DEPTH}"),
                offset: self.offset(),
            });
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.offset).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            let at = self.offset();
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::new(ExprKind::Bin(op, Box::new(lhs), Box::new(rhs)), at);
        }
        self.leave();
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            let at = self.offset();
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Bin(op, Box::new(lhs), Box::new(rhs)), at);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        self.enter()?;
        let out = if let Some(Tok::Minus) = self.peek() {
            let at = self.offset();
            self.bump();
            let inner = self.unary()?;
            Ok(Expr::new(ExprKind::Neg(Box::new(inner)), at))
        } else {
            self.power()
        };
        self.leave();
        out
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            let at = self.offset();
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::new(
                ExprKind::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)),
                at,
            ));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let at = self.offset();
        let Some(token) = self.bump() else {
            return Err(Error::Parse {
                message: "expected expression, found end of input".into(),
                offset: at,
            });
        };
        match token.tok.clone() {
            Tok::Num(v) => Ok(Expr::new(ExprKind::Const(v), at)),
            Tok::LParen => {
                let inner = self.expr()?;
                match self.bump() {
                    Some(t) if t.tok == Tok::RParen => Ok(inner),
                    _ => Err(Error::Parse {
                        message: "expected `)`".into(),
                        offset: self.toks.get(self.pos - 1).map(|t| t.offset).unwrap_or(self.end),
                    }),
                }
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    let open = self.offset();
                    match self.bump() {
                        Some(t) if t.tok == Tok::LParen => {}
                        _ => {
                            return Err(Error::Parse {
                                message: format!("expected `(` after function `{name}`"),
                                offset: open,
                            })
                        }
                    }
                    let arg = self.expr()?;
                    match self.bump() {
                        Some(t) if t.tok == Tok::RParen => {
                            Ok(Expr::new(ExprKind::Call(func, Box::new(arg)), at))
                        }
                        _ => Err(Error::Parse {
                            message: "expected `)`".into(),
                            offset: self
                                .toks
                                .get(self.pos.saturating_sub(1))
                                .map(|t| t.offset)
                                .unwrap_or(self.end),
                        }),
                    }
                } else if name == "t" {
                    Ok(Expr::new(ExprKind::Time, at))
                } else if let Some(idx) = self.names.iter().position(|n| *n == name) {
                    Ok(Expr::new(ExprKind::Var(idx), at))
                } else {
                    Err(Error::Parse {
                        message: format!("unknown identifier `{name}`"),
                        offset: at,
                    })
                }
            }
            other => Err(Error::Parse {
                message: format!("unexpected token {other:?}"),
                offset: at,
            }),
        }
    }
}

/// Parse an expression against canonical variable names `x1 .. xn`.
pub fn parse_expression(src: &str, dim: usize) -> Result<Expr> {
    let names: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    parse_with_names(src, &names)
}

/// Parse an expression against a caller-supplied name table.
pub fn parse_with_names(src: &str, names: &[String]) -> Result<Expr> {
    let toks = tokenize(src)?;
    let mut parser = Parser {
        toks: &toks,
        pos: 0,
        end: src.len(),
        names,
        depth: 0,
    };
    let e = parser.expr()?;
    if parser.pos != toks.len() {
        return Err(Error::Parse {
            message: "unexpected trailing input".into(),
            offset: parser.offset(),
        });
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Pretty-printing (round-trips through the parser)
// ---------------------------------------------------------------------------

fn prec(kind: &ExprKind) -> u8 {
    match kind {
        ExprKind::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        ExprKind::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        ExprKind::Neg(_) => 3,
        ExprKind::Bin(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

fn fmt_expr(e: &Expr, min_prec: u8, out: &mut String) {
    let p = prec(&e.kind);
    let parens = p < min_prec;
    if parens {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Const(c) => out.push_str(&format!("{c}")),
        ExprKind::Var(i) => out.push_str(&format!("x{}", i + 1)),
        ExprKind::Time => out.push('t'),
        ExprKind::Neg(c) => {
            out.push('-');
            fmt_expr(c, 3, out);
        }
        ExprKind::Bin(op, l, r) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => (" + ", 1, 2),
                BinOp::Sub => (" - ", 1, 2),
                BinOp::Mul => ("*", 2, 3),
                BinOp::Div => ("/", 2, 3),
                BinOp::Pow => ("^", 5, 3),
            };
            fmt_expr(l, lp, out);
            out.push_str(sym);
            fmt_expr(r, rp, out);
        }
        ExprKind::Call(f, arg) => {
            out.push_str(f.name());
            out.push('(');
            fmt_expr(arg, 0, out);
            out.push(')');
        }
    }
    if parens {
        out.push(')');
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        fmt_expr(self, 0, &mut s);
        f.write_str(&s)
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Scalar abstraction so the same tree walk evaluates plain values and
/// dual numbers.
pub trait Scalar:
    Copy
    + std::ops::Neg<Output = Self>
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn constant(c: f64) -> Self;
    /// Primal part, used for domain checks.
    fn value(self) -> f64;
    /// True when the scalar carries no seed derivative.
    fn is_const(self) -> bool;
    fn pow(self, e: Self) -> std::result::Result<Self, String>;
    fn apply(self, f: Func) -> Self;
}

fn check_pow(base: f64, expo: f64, expo_const: bool) -> std::result::Result<(), String> {
    if base > 0.0 {
        return Ok(());
    }
    if base == 0.0 {
        if expo < 0.0 {
            return Err("zero base with negative exponent".into());
        }
        if expo == 0.0 && !expo_const {
            return Err("zero base with varying zero exponent".into());
        }
        return Ok(());
    }
    // negative base: only constant integer exponents are defined
    if !expo_const || expo.fract() != 0.0 || expo.abs() > i32::MAX as f64 {
        return Err("negative base requires a constant integer exponent".into());
    }
    Ok(())
}

impl Scalar for f64 {
    fn constant(c: f64) -> f64 {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn is_const(self) -> bool {
        true
    }
    fn pow(self, e: f64) -> std::result::Result<f64, String> {
        check_pow(self, e, true)?;
        if self <= 0.0 && e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
            Ok(self.powi(e as i32))
        } else {
            Ok(self.powf(e))
        }
    }
    fn apply(self, f: Func) -> f64 {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Tan => self.tan(),
            Func::Exp => self.exp(),
            Func::Log => self.ln(),
            Func::Sqrt => self.sqrt(),
            Func::Tanh => self.tanh(),
            Func::Sinh => self.sinh(),
            Func::Cosh => self.cosh(),
            Func::Atan => self.atan(),
        }
    }
}

impl Scalar for Dual {
    fn constant(c: f64) -> Dual {
        Dual::constant(c)
    }
    fn value(self) -> f64 {
        self.val
    }
    fn is_const(self) -> bool {
        self.dot == 0.0
    }
    fn pow(self, e: Dual) -> std::result::Result<Dual, String> {
        check_pow(self.val, e.val, e.is_const())?;
        if self.val > 0.0 {
            let v = self.val.powf(e.val);
            let dot = v * (e.dot * self.val.ln() + e.val * self.dot / self.val);
            return Ok(Dual::new(v, dot));
        }
        if e.is_const() && e.val.fract() == 0.0 {
            // base <= 0, integer exponent k: d(b^k) = k b^(k-1) b'
            let k = e.val as i32;
            if k == 0 {
                return Ok(Dual::constant(1.0));
            }
            let v = self.val.powi(k);
            let dot = f64::from(k) * self.val.powi(k - 1) * self.dot;
            return Ok(Dual::new(v, dot));
        }
        // base == 0, fractional positive exponent
        let v = 0.0;
        let dot = e.val * 0.0f64.powf(e.val - 1.0) * self.dot;
        Ok(Dual::new(v, dot))
    }
    fn apply(self, f: Func) -> Dual {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Tan => self.tan(),
            Func::Exp => self.exp(),
            Func::Log => self.ln(),
            Func::Sqrt => self.sqrt(),
            Func::Tanh => self.tanh(),
            Func::Sinh => self.sinh(),
            Func::Cosh => self.cosh(),
            Func::Atan => self.atan(),
        }
    }
}

/// Evaluate an expression tree over any [`Scalar`].
pub fn eval_scalar<S: Scalar>(e: &Expr, x: &[S], t: S) -> Result<S> {
    match &e.kind {
        ExprKind::Const(c) => Ok(S::constant(*c)),
        ExprKind::Var(i) => x.get(*i).copied().ok_or_else(|| Error::Eval {
            message: format!("variable x{} out of range", i + 1),
            offset: e.span,
        }),
        ExprKind::Time => Ok(t),
        ExprKind::Neg(c) => Ok(-eval_scalar(c, x, t)?),
        ExprKind::Bin(op, l, r) => {
            let a = eval_scalar(l, x, t)?;
            let b = eval_scalar(r, x, t)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b.value() == 0.0 {
                        Err(Error::Eval {
                            message: "division by zero".into(),
                            offset: e.span,
                        })
                    } else {
                        Ok(a / b)
                    }
                }
                BinOp::Pow => a.pow(b).map_err(|message| Error::Eval {
                    message,
                    offset: e.span,
                }),
            }
        }
        ExprKind::Call(f, arg) => {
            let a = eval_scalar(arg, x, t)?;
            match f {
                Func::Log if a.value() <= 0.0 => Err(Error::Eval {
                    message: format!("log of non-positive value ({})", a.value()),
                    offset: e.span,
                }),
                Func::Sqrt if a.value() < 0.0 => Err(Error::Eval {
                    message: format!("sqrt of negative value ({})", a.value()),
                    offset: e.span,
                }),
                _ => Ok(a.apply(*f)),
            }
        }
    }
}

/// Evaluate an expression at a state vector and time.
pub fn eval_expr(e: &Expr, x: &DVector<f64>, t: f64) -> Result<f64> {
    eval_scalar(e, x.as_slice(), t)
}

/// Evaluate a vector of expressions into `out`.
pub fn eval_field(field: &[Expr], x: &DVector<f64>, t: f64, out: &mut DVector<f64>) -> Result<()> {
    for (i, e) in field.iter().enumerate() {
        out[i] = eval_expr(e, x, t)?;
    }
    Ok(())
}

/// Exact Jacobian ∂f/∂x via dual-number seeding: one pass per column.
pub fn jacobian(field: &[Expr], x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
    let rows = field.len();
    let cols = x.len();
    let mut jac = DMatrix::zeros(rows, cols);
    let tdual = Dual::constant(t);
    let mut seeds: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
    for j in 0..cols {
        seeds[j].dot = 1.0;
        for (i, e) in field.iter().enumerate() {
            jac[(i, j)] = eval_scalar(e, &seeds, tdual)?.dot;
        }
        seeds[j].dot = 0.0;
    }
    Ok(jac)
}
