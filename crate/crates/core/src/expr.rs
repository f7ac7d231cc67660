//! Integer/boolean expression trees used for guards, updates, and propositions.
//!
//! Expressions are parsed from strings with the grammar documented in
//! `docs/formats.md`. Precedence, loosest to tightest:
//! `->` < `or` < `and` < `not` < comparisons < `+ -` < `* div mod` < unary
//! minus. `div`/`mod` are Euclidean: `(a div b)*b + (a mod b) = a` with
//! `0 <= a mod b < |b|`. `and`/`or`/`->` short-circuit; `ite` evaluates only
//! the taken branch; `clamp(x, lo, hi)` is `min(max(x, lo), hi)`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Min,
    Max,
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Eq | BinOp::Ne | BinOp::Ge | BinOp::Gt
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Implies)
    }
}

/// Slot assigned to a name by `GameSpec` resolution. Freshly parsed
/// expressions carry `Unresolved`; evaluation then falls back to the
/// name map in [`Env`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Unresolved,
    Attr(u32),
    Param(u32),
    Choice(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    /// Attribute, parameter, or choice-variable reference.
    Var {
        name: String,
        slot: Slot,
    },
    /// Pre-state attribute reference `pre(x)`; only collision operators may
    /// use it.
    Pre {
        name: String,
        slot: Slot,
    },
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
    Clamp(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var {
            name: name.to_string(),
            slot: Slot::Unresolved,
        }
    }

    pub fn pre(name: &str) -> Expr {
        Expr::Pre {
            name: name.to_string(),
            slot: Slot::Unresolved,
        }
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Collects every `Var`/`Pre` name referenced in the tree.
    pub fn collect_names(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Var { name, .. } | Expr::Pre { name, .. } => {
                out.insert(name.clone());
            }
            Expr::Unary(_, a) => a.collect_names(out),
            Expr::Binary(_, a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
            Expr::Ite(a, b, c) | Expr::Clamp(a, b, c) => {
                a.collect_names(out);
                b.collect_names(out);
                c.collect_names(out);
            }
        }
    }

    /// Collects the attribute slots referenced in the tree (both current and
    /// pre-state references).
    pub fn collect_attr_slots(&self, out: &mut std::collections::BTreeSet<u32>) {
        match self {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Var { slot, .. } | Expr::Pre { slot, .. } => {
                if let Slot::Attr(i) = slot {
                    out.insert(*i);
                }
            }
            Expr::Unary(_, a) => a.collect_attr_slots(out),
            Expr::Binary(_, a, b) => {
                a.collect_attr_slots(out);
                b.collect_attr_slots(out);
            }
            Expr::Ite(a, b, c) | Expr::Clamp(a, b, c) => {
                a.collect_attr_slots(out);
                b.collect_attr_slots(out);
                c.collect_attr_slots(out);
            }
        }
    }

    /// True when evaluation can never raise an error (no division, no
    /// modulo). Used to decide whether a subtree may be dropped by folding.
    fn is_total(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Bool(_) | Expr::Var { .. } | Expr::Pre { .. } => true,
            Expr::Unary(_, a) => a.is_total(),
            Expr::Binary(op, a, b) => {
                !matches!(op, BinOp::Div | BinOp::Mod) && a.is_total() && b.is_total()
            }
            Expr::Ite(a, b, c) | Expr::Clamp(a, b, c) => {
                a.is_total() && b.is_total() && c.is_total()
            }
        }
    }

    /// Substitutes every reference to `name` (including `pre(name)`) with the
    /// integer constant `value`. Used by choice expansion and by attribute
    /// freezing, where the pre-state value of a frozen attribute equals the
    /// frozen constant.
    pub fn subst_name(&self, name: &str, value: i64) -> Expr {
        match self {
            Expr::Var { name: n, .. } | Expr::Pre { name: n, .. } if n == name => Expr::Int(value),
            Expr::Int(_) | Expr::Bool(_) | Expr::Var { .. } | Expr::Pre { .. } => self.clone(),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.subst_name(name, value))),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.subst_name(name, value)),
                Box::new(b.subst_name(name, value)),
            ),
            Expr::Ite(a, b, c) => Expr::Ite(
                Box::new(a.subst_name(name, value)),
                Box::new(b.subst_name(name, value)),
                Box::new(c.subst_name(name, value)),
            ),
            Expr::Clamp(a, b, c) => Expr::Clamp(
                Box::new(a.subst_name(name, value)),
                Box::new(b.subst_name(name, value)),
                Box::new(c.subst_name(name, value)),
            ),
        }
    }

    /// Constant folding. Evaluates literal subtrees and applies a few safe
    /// identities (`x+0`, `x*1`, boolean constants, constant conditions).
    /// Subtrees are only dropped when they cannot raise runtime errors.
    pub fn fold(&self) -> Expr {
        let folded = match self {
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.fold())),
            Expr::Binary(op, a, b) => Expr::Binary(*op, Box::new(a.fold()), Box::new(b.fold())),
            Expr::Ite(a, b, c) => {
                Expr::Ite(Box::new(a.fold()), Box::new(b.fold()), Box::new(c.fold()))
            }
            Expr::Clamp(a, b, c) => {
                Expr::Clamp(Box::new(a.fold()), Box::new(b.fold()), Box::new(c.fold()))
            }
            other => other.clone(),
        };
        if folded.is_const() {
            if let Ok(v) = eval(&folded, &Env::default()) {
                return match v {
                    Value::Int(i) => Expr::Int(i),
                    Value::Bool(b) => Expr::Bool(b),
                };
            }
        }
        match &folded {
            Expr::Binary(BinOp::Add, a, b) => match (a.as_ref(), b.as_ref()) {
                (x, Expr::Int(0)) | (Expr::Int(0), x) => x.clone(),
                (x, Expr::Int(k)) if *k < 0 && *k > i64::MIN => {
                    Expr::binary(BinOp::Sub, x.clone(), Expr::Int(-k))
                }
                _ => folded,
            },
            Expr::Binary(BinOp::Sub, a, b) => match (a.as_ref(), b.as_ref()) {
                (x, Expr::Int(0)) => x.clone(),
                _ => folded,
            },
            Expr::Binary(BinOp::Mul, a, b) => match (a.as_ref(), b.as_ref()) {
                (x, Expr::Int(1)) | (Expr::Int(1), x) => x.clone(),
                _ => folded,
            },
            Expr::Binary(BinOp::And, a, b) => match (a.as_ref(), b.as_ref()) {
                (Expr::Bool(true), x) | (x, Expr::Bool(true)) => x.clone(),
                (Expr::Bool(false), x) if x.is_total() => Expr::Bool(false),
                (x, Expr::Bool(false)) if x.is_total() => Expr::Bool(false),
                _ => folded,
            },
            Expr::Binary(BinOp::Or, a, b) => match (a.as_ref(), b.as_ref()) {
                (Expr::Bool(false), x) | (x, Expr::Bool(false)) => x.clone(),
                (Expr::Bool(true), x) if x.is_total() => Expr::Bool(true),
                (x, Expr::Bool(true)) if x.is_total() => Expr::Bool(true),
                _ => folded,
            },
            Expr::Binary(BinOp::Implies, a, b) => match (a.as_ref(), b.as_ref()) {
                (Expr::Bool(true), x) => x.clone(),
                (Expr::Bool(false), x) if x.is_total() => Expr::Bool(true),
                _ => folded,
            },
            Expr::Unary(UnaryOp::Not, a) => match a.as_ref() {
                Expr::Bool(v) => Expr::Bool(!v),
                _ => folded,
            },
            Expr::Ite(c, t, e) => match c.as_ref() {
                Expr::Bool(true) if e.is_total() => t.as_ref().clone(),
                Expr::Bool(false) if t.is_total() => e.as_ref().clone(),
                _ => folded,
            },
            _ => folded,
        }
    }

    fn is_const(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Bool(_) => true,
            Expr::Var { .. } | Expr::Pre { .. } => false,
            Expr::Unary(_, a) => a.is_const(),
            Expr::Binary(_, a, b) => a.is_const() && b.is_const(),
            Expr::Ite(a, b, c) | Expr::Clamp(a, b, c) => {
                a.is_const() && b.is_const() && c.is_const()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn as_int(self) -> Result<i64, EvalError> {
        match self {
            Value::Int(i) => Ok(i),
            Value::Bool(_) => Err(EvalError::TypeMismatch {
                expected: "integer",
                got: "boolean",
            }),
        }
    }

    pub fn as_bool(self) -> Result<bool, EvalError> {
        match self {
            Value::Bool(b) => Ok(b),
            Value::Int(_) => Err(EvalError::TypeMismatch {
                expected: "boolean",
                got: "integer",
            }),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound name `{0}`")]
    UnboundName(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow during evaluation")]
    Overflow,
    #[error("type mismatch: expected {expected}, got {got}")]
    TypeMismatch {
        expected: &'static str,
        got: &'static str,
    },
}

/// Evaluation environment. Resolved slots index the arrays; unresolved names
/// (or slots whose array is absent) fall back to `names`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Env<'a> {
    pub attrs: &'a [i64],
    pub pre: &'a [i64],
    pub params: &'a [i64],
    pub choices: &'a [i64],
    pub names: Option<&'a BTreeMap<String, i64>>,
}

impl<'a> Env<'a> {
    fn lookup(&self, name: &str, slot: Slot, pre_state: bool) -> Result<i64, EvalError> {
        let arr = match (slot, pre_state) {
            (Slot::Attr(i), false) => self.attrs.get(i as usize),
            (Slot::Attr(i), true) => self.pre.get(i as usize),
            (Slot::Param(i), _) => self.params.get(i as usize),
            (Slot::Choice(i), _) => self.choices.get(i as usize),
            (Slot::Unresolved, _) => None,
        };
        if let Some(v) = arr {
            return Ok(*v);
        }
        self.names
            .and_then(|m| m.get(name).copied())
            .ok_or_else(|| EvalError::UnboundName(name.to_string()))
    }
}

/// Evaluates an expression. Integer arithmetic is exact 64-bit with overflow
/// detection; `div`/`mod` are Euclidean.
pub fn eval(e: &Expr, env: &Env) -> Result<Value, EvalError> {
    match e {
        Expr::Int(i) => Ok(Value::Int(*i)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Var { name, slot } => env.lookup(name, *slot, false).map(Value::Int),
        Expr::Pre { name, slot } => env.lookup(name, *slot, true).map(Value::Int),
        Expr::Unary(op, a) => match op {
            UnaryOp::Neg => {
                let v = eval(a, env)?.as_int()?;
                v.checked_neg().map(Value::Int).ok_or(EvalError::Overflow)
            }
            UnaryOp::Abs => {
                let v = eval(a, env)?.as_int()?;
                v.checked_abs().map(Value::Int).ok_or(EvalError::Overflow)
            }
            UnaryOp::Not => Ok(Value::Bool(!eval(a, env)?.as_bool()?)),
        },
        Expr::Binary(op, a, b) => match op {
            BinOp::And => {
                if !eval(a, env)?.as_bool()? {
                    Ok(Value::Bool(false))
                } else {
                    Ok(Value::Bool(eval(b, env)?.as_bool()?))
                }
            }
            BinOp::Or => {
                if eval(a, env)?.as_bool()? {
                    Ok(Value::Bool(true))
                } else {
                    Ok(Value::Bool(eval(b, env)?.as_bool()?))
                }
            }
            BinOp::Implies => {
                if !eval(a, env)?.as_bool()? {
                    Ok(Value::Bool(true))
                } else {
                    Ok(Value::Bool(eval(b, env)?.as_bool()?))
                }
            }
            BinOp::Eq | BinOp::Ne => {
                let l = eval(a, env)?;
                let r = eval(b, env)?;
                let equal = match (l, r) {
                    (Value::Int(x), Value::Int(y)) => x == y,
                    (Value::Bool(x), Value::Bool(y)) => x == y,
                    _ => {
                        return Err(EvalError::TypeMismatch {
                            expected: "operands of one type",
                            got: "mixed integer/boolean",
                        })
                    }
                };
                Ok(Value::Bool(if *op == BinOp::Eq { equal } else { !equal }))
            }
            BinOp::Lt | BinOp::Le | BinOp::Ge | BinOp::Gt => {
                let l = eval(a, env)?.as_int()?;
                let r = eval(b, env)?.as_int()?;
                Ok(Value::Bool(match op {
                    BinOp::Lt => l < r,
                    BinOp::Le => l <= r,
                    BinOp::Ge => l >= r,
                    BinOp::Gt => l > r,
                    _ => unreachable!(),
                }))
            }
            _ => {
                let l = eval(a, env)?.as_int()?;
                let r = eval(b, env)?.as_int()?;
                let v = match op {
                    BinOp::Add => l.checked_add(r),
                    BinOp::Sub => l.checked_sub(r),
                    BinOp::Mul => l.checked_mul(r),
                    BinOp::Div => {
                        if r == 0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        l.checked_div_euclid(r)
                    }
                    BinOp::Mod => {
                        if r == 0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        l.checked_rem_euclid(r)
                    }
                    BinOp::Min => Some(l.min(r)),
                    BinOp::Max => Some(l.max(r)),
                    _ => unreachable!(),
                };
                v.map(Value::Int).ok_or(EvalError::Overflow)
            }
        },
        Expr::Ite(c, t, f) => {
            if eval(c, env)?.as_bool()? {
                eval(t, env)
            } else {
                eval(f, env)
            }
        }
        Expr::Clamp(x, lo, hi) => {
            let x = eval(x, env)?.as_int()?;
            let lo = eval(lo, env)?.as_int()?;
            let hi = eval(hi, env)?.as_int()?;
            Ok(Value::Int(x.max(lo).min(hi)))
        }
    }
}

/// Evaluates an expression against a plain name-to-integer binding.
pub fn eval_expr(e: &Expr, env: &BTreeMap<String, i64>) -> Result<Value, EvalError> {
    eval(
        e,
        &Env {
            names: Some(env),
            ..Env::default()
        },
    )
}

// ---------------------------------------------------------------------------
// Type inference
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Int,
    Bool,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int => write!(f, "integer"),
            Ty::Bool => write!(f, "boolean"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct TypeError(pub String);

/// Infers the type of a well-formed expression; names are always integers.
pub fn infer_type(e: &Expr) -> Result<Ty, TypeError> {
    let want = |e: &Expr, ty: Ty| -> Result<(), TypeError> {
        let got = infer_type(e)?;
        if got != ty {
            return Err(TypeError(format!("expected {ty} operand, got {got}")));
        }
        Ok(())
    };
    match e {
        Expr::Int(_) | Expr::Var { .. } | Expr::Pre { .. } => Ok(Ty::Int),
        Expr::Bool(_) => Ok(Ty::Bool),
        Expr::Unary(UnaryOp::Not, a) => {
            want(a, Ty::Bool)?;
            Ok(Ty::Bool)
        }
        Expr::Unary(_, a) => {
            want(a, Ty::Int)?;
            Ok(Ty::Int)
        }
        Expr::Binary(op, a, b) => {
            if op.is_logical() {
                want(a, Ty::Bool)?;
                want(b, Ty::Bool)?;
                Ok(Ty::Bool)
            } else if *op == BinOp::Eq || *op == BinOp::Ne {
                let l = infer_type(a)?;
                let r = infer_type(b)?;
                if l != r {
                    return Err(TypeError(format!(
                        "cannot compare {l} with {r} for equality"
                    )));
                }
                Ok(Ty::Bool)
            } else if op.is_comparison() {
                want(a, Ty::Int)?;
                want(b, Ty::Int)?;
                Ok(Ty::Bool)
            } else {
                want(a, Ty::Int)?;
                want(b, Ty::Int)?;
                Ok(Ty::Int)
            }
        }
        Expr::Ite(c, t, f) => {
            want(c, Ty::Bool)?;
            let l = infer_type(t)?;
            let r = infer_type(f)?;
            if l != r {
                return Err(TypeError(format!(
                    "ite branches have different types: {l} vs {r}"
                )));
            }
            Ok(l)
        }
        Expr::Clamp(x, lo, hi) => {
            want(x, Ty::Int)?;
            want(lo, Ty::Int)?;
            want(hi, Ty::Int)?;
            Ok(Ty::Int)
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message} at column {pos}")]
pub struct ParseError {
    pub message: String,
    /// Byte offset into the expression string.
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Ident(String),
    Sym(&'static str),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        match c {
            '0'..='9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let text = &src[i..j];
                let value: i64 = text.parse().map_err(|_| ParseError {
                    message: format!("integer literal `{text}` out of 64-bit range"),
                    pos: start,
                })?;
                toks.push((Tok::Int(value), start));
                i = j;
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                toks.push((Tok::Ident(src[i..j].to_string()), start));
                i = j;
            }
            '-' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'>' {
                    toks.push((Tok::Sym("->"), start));
                    i += 2;
                } else {
                    toks.push((Tok::Sym("-"), start));
                    i += 1;
                }
            }
            '<' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    toks.push((Tok::Sym("<="), start));
                    i += 2;
                } else {
                    toks.push((Tok::Sym("<"), start));
                    i += 1;
                }
            }
            '>' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    toks.push((Tok::Sym(">="), start));
                    i += 2;
                } else {
                    toks.push((Tok::Sym(">"), start));
                    i += 1;
                }
            }
            '!' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    toks.push((Tok::Sym("!="), start));
                    i += 2;
                } else {
                    toks.push((Tok::Sym("!"), start));
                    i += 1;
                }
            }
            '+' => {
                toks.push((Tok::Sym("+"), start));
                i += 1;
            }
            '*' => {
                toks.push((Tok::Sym("*"), start));
                i += 1;
            }
            '=' => {
                toks.push((Tok::Sym("="), start));
                i += 1;
            }
            '&' => {
                toks.push((Tok::Sym("&"), start));
                i += 1;
            }
            '|' => {
                toks.push((Tok::Sym("|"), start));
                i += 1;
            }
            '(' => {
                toks.push((Tok::Sym("("), start));
                i += 1;
            }
            ')' => {
                toks.push((Tok::Sym(")"), start));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Sym(","), start));
                i += 1;
            }
            other => {
                return Err(ParseError {
                    message: format!("unexpected character `{other}`"),
                    pos: start,
                })
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(self.len)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(t)) if *t == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(t)) if t == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &'static str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(ParseError {
                message: format!("expected `{s}`"),
                pos: self.here(),
            })
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            message: message.into(),
            pos: self.here(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.implies()
    }

    fn implies(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.or()?;
        if self.eat_sym("->") {
            let rhs = self.implies()?;
            Ok(Expr::binary(BinOp::Implies, lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and()?;
        while self.eat_kw("or") || self.eat_sym("|") {
            let rhs = self.and()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("and") || self.eat_sym("&") {
            let rhs = self.not_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_kw("not") || self.eat_sym("!") {
            let inner = self.not_expr()?;
            Ok(Expr::Unary(UnaryOp::Not, Box::new(inner)))
        } else {
            self.comparison()
        }
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Some(Tok::Sym("<")) => Some(BinOp::Lt),
            Some(Tok::Sym("<=")) => Some(BinOp::Le),
            Some(Tok::Sym("=")) => Some(BinOp::Eq),
            Some(Tok::Sym("!=")) => Some(BinOp::Ne),
            Some(Tok::Sym(">=")) => Some(BinOp::Ge),
            Some(Tok::Sym(">")) => Some(BinOp::Gt),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let rhs = self.sum()?;
            Ok(Expr::binary(op, lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat_sym("+") {
                let rhs = self.product()?;
                lhs = Expr::binary(BinOp::Add, lhs, rhs);
            } else if self.eat_sym("-") {
                let rhs = self.product()?;
                lhs = Expr::binary(BinOp::Sub, lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                BinOp::Mul
            } else if self.eat_kw("div") {
                BinOp::Div
            } else if self.eat_kw("mod") {
                BinOp::Mod
            } else {
                return Ok(lhs);
            };
            let at = self.here();
            let rhs = self.unary()?;
            if matches!(op, BinOp::Div | BinOp::Mod) && is_literal_zero(&rhs) {
                return Err(ParseError {
                    message: "division or modulo by literal zero".to_string(),
                    pos: at,
                });
            }
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_sym("-") {
            let inner = self.unary()?;
            // fold `-literal` immediately so i64::MIN round-trips
            if let Expr::Int(v) = inner {
                return v.checked_neg().map(Expr::Int).ok_or_else(|| ParseError {
                    message: "integer literal out of 64-bit range".to_string(),
                    pos: self.here(),
                });
            }
            Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.here();
        match self.bump() {
            Some(Tok::Int(v)) => Ok(Expr::Int(v)),
            Some(Tok::Ident(name)) => match name.as_str() {
                "true" => Ok(Expr::Bool(true)),
                "false" => Ok(Expr::Bool(false)),
                "pre" => {
                    self.expect_sym("(")?;
                    let inner = match self.bump() {
                        Some(Tok::Ident(n)) => n,
                        _ => return Err(self.err("pre() takes an attribute name")),
                    };
                    self.expect_sym(")")?;
                    Ok(Expr::pre(&inner))
                }
                "abs" => {
                    let mut args = self.args(1)?;
                    Ok(Expr::Unary(UnaryOp::Abs, Box::new(args.remove(0))))
                }
                "min" => {
                    let mut args = self.args(2)?;
                    let b = args.remove(1);
                    Ok(Expr::binary(BinOp::Min, args.remove(0), b))
                }
                "max" => {
                    let mut args = self.args(2)?;
                    let b = args.remove(1);
                    Ok(Expr::binary(BinOp::Max, args.remove(0), b))
                }
                "ite" => {
                    let mut args = self.args(3)?;
                    let e = args.remove(2);
                    let t = args.remove(1);
                    Ok(Expr::Ite(
                        Box::new(args.remove(0)),
                        Box::new(t),
                        Box::new(e),
                    ))
                }
                "clamp" => {
                    let mut args = self.args(3)?;
                    let hi = args.remove(2);
                    let lo = args.remove(1);
                    Ok(Expr::Clamp(
                        Box::new(args.remove(0)),
                        Box::new(lo),
                        Box::new(hi),
                    ))
                }
                _ => {
                    if matches!(self.peek(), Some(Tok::Sym("("))) {
                        Err(ParseError {
                            message: format!("unknown function `{name}`"),
                            pos: at,
                        })
                    } else {
                        Ok(Expr::var(&name))
                    }
                }
            },
            Some(Tok::Sym("(")) => {
                let inner = self.expr()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            _ => Err(ParseError {
                message: "expected expression".to_string(),
                pos: at,
            }),
        }
    }

    fn args(&mut self, n: usize) -> Result<Vec<Expr>, ParseError> {
        self.expect_sym("(")?;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                self.expect_sym(",")?;
            }
            out.push(self.expr()?);
        }
        self.expect_sym(")")?;
        Ok(out)
    }
}

fn is_literal_zero(e: &Expr) -> bool {
    matches!(e, Expr::Int(0))
}

/// Parses an expression string. Whitespace is insignificant; `&`, `|`, `!`
/// are accepted as synonyms for `and`, `or`, `not`.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        len: text.len(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(ParseError {
            message: "unexpected trailing input".to_string(),
            pos: p.here(),
        });
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, _, _) => match op {
            BinOp::Implies => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            op if op.is_comparison() => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 7,
            _ => 10,
        },
        Expr::Unary(UnaryOp::Not, _) => 4,
        Expr::Unary(UnaryOp::Neg, _) => 8,
        _ => 10,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var { name, .. } => write!(f, "{name}"),
            Expr::Pre { name, .. } => write!(f, "pre({name})"),
            Expr::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                child(f, a, prec(a) < prec(self))
            }
            Expr::Unary(UnaryOp::Not, a) => {
                write!(f, "not ")?;
                child(f, a, prec(a) < prec(self))
            }
            Expr::Unary(UnaryOp::Abs, a) => write!(f, "abs({a})"),
            Expr::Binary(BinOp::Min, a, b) => write!(f, "min({a}, {b})"),
            Expr::Binary(BinOp::Max, a, b) => write!(f, "max({a}, {b})"),
            Expr::Binary(op, a, b) => {
                let me = prec(self);
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "div",
                    BinOp::Mod => "mod",
                    BinOp::Lt => "<",
                    BinOp::Le => "<=",
                    BinOp::Eq => "=",
                    BinOp::Ne => "!=",
                    BinOp::Ge => ">=",
                    BinOp::Gt => ">",
                    BinOp::And => "and",
                    BinOp::Or => "or",
                    BinOp::Implies => "->",
                    BinOp::Min | BinOp::Max => unreachable!(),
                };
                // implies is right-associative, comparisons do not chain,
                // everything else associates left
                let (lp, rp) = match op {
                    BinOp::Implies => (prec(a) <= me, prec(b) < me),
                    op if op.is_comparison() => (prec(a) <= me, prec(b) <= me),
                    _ => (prec(a) < me, prec(b) <= me),
                };
                child(f, a, lp)?;
                write!(f, " {sym} ")?;
                child(f, b, rp)
            }
            Expr::Ite(c, t, e) => write!(f, "ite({c}, {t}, {e})"),
            Expr::Clamp(x, lo, hi) => write!(f, "clamp({x}, {lo}, {hi})"),
        }
    }
}
