//! CTL parsing and checking by backward fixpoint labeling.
//!
//! Sat sets are computed over the reachable states of a [`KripkeGraph`].
//! Formulas are rewritten into the adequate basis `{not, and, EX, EU, EG}`:
//!
//! - `AX p = !EX !p`
//! - `EF p = E[true U p]`
//! - `AG p = !EF !p`
//! - `AF p = !EG !p`
//! - `A[p U q] = !(E[!q U !p & !q] | EG !q)`
//!
//! `EX` is a predecessor image, `EU` a least fixpoint (backward reachability
//! through the hold set), `EG` a greatest fixpoint (pruning states that lose
//! all successors inside the candidate set).

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::bitset::StateSet;
use crate::kripke::{JointAction, KripkeGraph, StateId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CtlFormula {
    True,
    False,
    /// Proposition reference: resolved label index plus the source name.
    Prop(usize, String),
    Not(Box<CtlFormula>),
    And(Box<CtlFormula>, Box<CtlFormula>),
    Or(Box<CtlFormula>, Box<CtlFormula>),
    Implies(Box<CtlFormula>, Box<CtlFormula>),
    Ex(Box<CtlFormula>),
    Ax(Box<CtlFormula>),
    Ef(Box<CtlFormula>),
    Af(Box<CtlFormula>),
    Eg(Box<CtlFormula>),
    Ag(Box<CtlFormula>),
    Eu(Box<CtlFormula>, Box<CtlFormula>),
    Au(Box<CtlFormula>, Box<CtlFormula>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CtlError {
    #[error("malformed formula: {message} at column {pos}")]
    MalformedFormula { message: String, pos: usize },
    #[error("unknown proposition `{0}`")]
    UnknownProposition(String),
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct CtlParser<'a> {
    src: &'a str,
    toks: Vec<(String, usize)>,
    pos: usize,
    props: &'a [String],
}

fn ctl_lex(src: &str) -> Result<Vec<(String, usize)>, CtlError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        match c {
            'A'..='Z' | 'a'..='z' | '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push((src[start..i].to_string(), start));
            }
            '!' | '&' | '|' | '(' | ')' | '[' | ']' => {
                toks.push((c.to_string(), i));
                i += 1;
            }
            '-' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'>' {
                    toks.push(("->".to_string(), i));
                    i += 2;
                } else {
                    return Err(CtlError::MalformedFormula {
                        message: "stray `-`".to_string(),
                        pos: i,
                    });
                }
            }
            other => {
                return Err(CtlError::MalformedFormula {
                    message: format!("unexpected character `{other}`"),
                    pos: i,
                })
            }
        }
    }
    Ok(toks)
}

impl<'a> CtlParser<'a> {
    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(|(t, _)| t.as_str())
    }

    fn here(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, p)| *p)
            .unwrap_or(self.src.len())
    }

    fn eat(&mut self, t: &str) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &str) -> Result<(), CtlError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(CtlError::MalformedFormula {
                message: format!("expected `{t}`"),
                pos: self.here(),
            })
        }
    }

    fn formula(&mut self) -> Result<CtlFormula, CtlError> {
        let lhs = self.or_level()?;
        if self.eat("->") {
            let rhs = self.formula()?;
            Ok(CtlFormula::Implies(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn or_level(&mut self) -> Result<CtlFormula, CtlError> {
        let mut lhs = self.and_level()?;
        while self.eat("|") {
            let rhs = self.and_level()?;
            lhs = CtlFormula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_level(&mut self) -> Result<CtlFormula, CtlError> {
        let mut lhs = self.unary()?;
        while self.eat("&") {
            let rhs = self.unary()?;
            lhs = CtlFormula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<CtlFormula, CtlError> {
        if self.eat("!") {
            return Ok(CtlFormula::Not(Box::new(self.unary()?)));
        }
        for (kw, make) in [
            ("AG", CtlFormula::Ag as fn(Box<CtlFormula>) -> CtlFormula),
            ("AF", CtlFormula::Af),
            ("AX", CtlFormula::Ax),
            ("EG", CtlFormula::Eg),
            ("EF", CtlFormula::Ef),
            ("EX", CtlFormula::Ex),
        ] {
            if self.peek() == Some(kw) {
                self.pos += 1;
                return Ok(make(Box::new(self.unary()?)));
            }
        }
        // E [ p U q ] and A [ p U q ]
        if (self.peek() == Some("E") || self.peek() == Some("A"))
            && self.toks.get(self.pos + 1).map(|(t, _)| t.as_str()) == Some("[")
        {
            let existential = self.peek() == Some("E");
            self.pos += 2;
            let hold = self.formula()?;
            self.expect("U")?;
            let until = self.formula()?;
            self.expect("]")?;
            return Ok(if existential {
                CtlFormula::Eu(Box::new(hold), Box::new(until))
            } else {
                CtlFormula::Au(Box::new(hold), Box::new(until))
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<CtlFormula, CtlError> {
        let at = self.here();
        if self.eat("(") {
            let inner = self.formula()?;
            self.expect(")")?;
            return Ok(inner);
        }
        let Some(tok) = self.peek().map(|s| s.to_string()) else {
            return Err(CtlError::MalformedFormula {
                message: "expected formula".to_string(),
                pos: at,
            });
        };
        self.pos += 1;
        match tok.as_str() {
            "true" => Ok(CtlFormula::True),
            "false" => Ok(CtlFormula::False),
            name if name
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_') =>
            {
                let idx = self
                    .props
                    .iter()
                    .position(|p| p == name)
                    .ok_or_else(|| CtlError::UnknownProposition(name.to_string()))?;
                Ok(CtlFormula::Prop(idx, name.to_string()))
            }
            other => Err(CtlError::MalformedFormula {
                message: format!("unexpected token `{other}`"),
                pos: at,
            }),
        }
    }
}

/// Parses a CTL formula; identifiers resolve against `props` (proposition
/// names in label order).
pub fn parse_ctl(text: &str, props: &[String]) -> Result<CtlFormula, CtlError> {
    let toks = ctl_lex(text)?;
    let mut p = CtlParser {
        src: text,
        toks,
        pos: 0,
        props,
    };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return Err(CtlError::MalformedFormula {
            message: "unexpected trailing input".to_string(),
            pos: p.here(),
        });
    }
    Ok(f)
}

impl fmt::Display for CtlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn needs_parens(f: &CtlFormula) -> bool {
            matches!(
                f,
                CtlFormula::And(..) | CtlFormula::Or(..) | CtlFormula::Implies(..)
            )
        }
        fn unary(f: &mut fmt::Formatter<'_>, op: &str, inner: &CtlFormula) -> fmt::Result {
            if needs_parens(inner) {
                write!(f, "{op} ({inner})")
            } else {
                write!(f, "{op} {inner}")
            }
        }
        match self {
            CtlFormula::True => write!(f, "true"),
            CtlFormula::False => write!(f, "false"),
            CtlFormula::Prop(_, name) => write!(f, "{name}"),
            CtlFormula::Not(a) => {
                if needs_parens(a) {
                    write!(f, "!({a})")
                } else {
                    write!(f, "!{a}")
                }
            }
            CtlFormula::And(a, b) => {
                let wrap =
                    |x: &CtlFormula| matches!(x, CtlFormula::Or(..) | CtlFormula::Implies(..));
                match (wrap(a), wrap(b)) {
                    (true, true) => write!(f, "({a}) & ({b})"),
                    (true, false) => write!(f, "({a}) & {b}"),
                    (false, true) => write!(f, "{a} & ({b})"),
                    (false, false) => write!(f, "{a} & {b}"),
                }
            }
            CtlFormula::Or(a, b) => {
                let wrap = |x: &CtlFormula| matches!(x, CtlFormula::Implies(..));
                match (wrap(a), wrap(b)) {
                    (true, true) => write!(f, "({a}) | ({b})"),
                    (true, false) => write!(f, "({a}) | {b}"),
                    (false, true) => write!(f, "{a} | ({b})"),
                    (false, false) => write!(f, "{a} | {b}"),
                }
            }
            CtlFormula::Implies(a, b) => {
                if matches!(a.as_ref(), CtlFormula::Implies(..)) {
                    write!(f, "({a}) -> {b}")
                } else {
                    write!(f, "{a} -> {b}")
                }
            }
            CtlFormula::Ex(a) => unary(f, "EX", a),
            CtlFormula::Ax(a) => unary(f, "AX", a),
            CtlFormula::Ef(a) => unary(f, "EF", a),
            CtlFormula::Af(a) => unary(f, "AF", a),
            CtlFormula::Eg(a) => unary(f, "EG", a),
            CtlFormula::Ag(a) => unary(f, "AG", a),
            CtlFormula::Eu(a, b) => write!(f, "E [ {a} U {b} ]"),
            CtlFormula::Au(a, b) => write!(f, "A [ {a} U {b} ]"),
        }
    }
}

// ---------------------------------------------------------------------------
// Fixpoint labeling
// ---------------------------------------------------------------------------

/// Adequate-basis form used internally by [`sat_set`].
enum Basis {
    True,
    Prop(usize),
    Not(Box<Basis>),
    And(Box<Basis>, Box<Basis>),
    Ex(Box<Basis>),
    Eu(Box<Basis>, Box<Basis>),
    Eg(Box<Basis>),
}

fn to_basis(f: &CtlFormula) -> Basis {
    use Basis as B;
    use CtlFormula as C;
    fn not(b: B) -> B {
        B::Not(Box::new(b))
    }
    match f {
        C::True => B::True,
        C::False => not(B::True),
        C::Prop(i, _) => B::Prop(*i),
        C::Not(a) => not(to_basis(a)),
        C::And(a, b) => B::And(Box::new(to_basis(a)), Box::new(to_basis(b))),
        C::Or(a, b) => not(B::And(
            Box::new(not(to_basis(a))),
            Box::new(not(to_basis(b))),
        )),
        C::Implies(a, b) => not(B::And(Box::new(to_basis(a)), Box::new(not(to_basis(b))))),
        C::Ex(a) => B::Ex(Box::new(to_basis(a))),
        C::Ax(a) => not(B::Ex(Box::new(not(to_basis(a))))),
        C::Ef(a) => B::Eu(Box::new(B::True), Box::new(to_basis(a))),
        C::Ag(a) => not(B::Eu(Box::new(B::True), Box::new(not(to_basis(a))))),
        C::Af(a) => not(B::Eg(Box::new(not(to_basis(a))))),
        C::Eg(a) => B::Eg(Box::new(to_basis(a))),
        C::Eu(a, b) => B::Eu(Box::new(to_basis(a)), Box::new(to_basis(b))),
        C::Au(a, b) => {
            // A[p U q] = !(E[!q U !p & !q] | EG !q)
            let eu = B::Eu(
                Box::new(not(to_basis(b))),
                Box::new(B::And(
                    Box::new(not(to_basis(a))),
                    Box::new(not(to_basis(b))),
                )),
            );
            B::And(
                Box::new(not(eu)),
                Box::new(not(B::Eg(Box::new(not(to_basis(b)))))),
            )
        }
    }
}

fn sat_basis(g: &KripkeGraph, f: &Basis) -> StateSet {
    let n = g.state_count();
    match f {
        Basis::True => StateSet::full(n),
        Basis::Prop(i) => g.labels[*i].clone(),
        Basis::Not(a) => {
            let mut s = sat_basis(g, a);
            s.invert();
            s
        }
        Basis::And(a, b) => {
            let mut s = sat_basis(g, a);
            s.intersect_with(&sat_basis(g, b));
            s
        }
        Basis::Ex(a) => {
            let inner = sat_basis(g, a);
            let mut out = StateSet::new(n);
            for t in inner.iter() {
                for p in &g.predecessors[t] {
                    out.insert(p.idx());
                }
            }
            out
        }
        Basis::Eu(hold, until) => {
            let hold = sat_basis(g, hold);
            let until = sat_basis(g, until);
            let mut sat = until.clone();
            let mut queue: VecDeque<usize> = until.iter().collect();
            while let Some(t) = queue.pop_front() {
                for p in &g.predecessors[t] {
                    if hold.contains(p.idx()) && !sat.contains(p.idx()) {
                        sat.insert(p.idx());
                        queue.push_back(p.idx());
                    }
                }
            }
            sat
        }
        Basis::Eg(a) => {
            // greatest fixpoint by worklist pruning: drop states whose
            // distinct successors have all left the candidate set
            let mut sat = sat_basis(g, a);
            let mut count = vec![0usize; n];
            let mut queue: VecDeque<usize> = VecDeque::new();
            let mut scratch: Vec<usize> = Vec::new();
            for s in sat.iter() {
                scratch.clear();
                scratch.extend(g.successors_of(StateId(s as u32)).map(|d| d.idx()));
                scratch.sort_unstable();
                scratch.dedup();
                count[s] = scratch.iter().filter(|d| sat.contains(**d)).count();
                if count[s] == 0 {
                    queue.push_back(s);
                }
            }
            while let Some(s) = queue.pop_front() {
                if !sat.contains(s) {
                    continue;
                }
                sat.remove(s);
                for p in &g.predecessors[s] {
                    let p = p.idx();
                    if sat.contains(p) {
                        count[p] = count[p].saturating_sub(1);
                        if count[p] == 0 {
                            queue.push_back(p);
                        }
                    }
                }
            }
            sat
        }
    }
}

/// Set of reachable states satisfying `f`, by backward fixpoint labeling.
pub fn sat_set(g: &KripkeGraph, f: &CtlFormula) -> StateSet {
    sat_basis(g, &to_basis(f))
}

// ---------------------------------------------------------------------------
// Verdicts and traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TraceStep {
    pub state: StateId,
    pub values: Vec<i64>,
    /// Joint action leading to the next step; absent on the last step.
    pub action: Option<JointAction>,
}

/// A finite path through the graph; consecutive steps are connected by real
/// transitions.
#[derive(Debug, Clone)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub formula: CtlFormula,
    pub holds: bool,
    pub sat_count: usize,
    pub trace: Option<Trace>,
}

/// Shortest path (BFS over transitions) from an initial state into `targets`.
fn shortest_path_into(g: &KripkeGraph, targets: &StateSet) -> Option<Trace> {
    let n = g.state_count();
    let mut parent: Vec<Option<(StateId, u32)>> = vec![None; n];
    let mut seen = StateSet::new(n);
    let mut queue = VecDeque::new();
    let mut hit: Option<StateId> = None;
    for &s in &g.initial {
        if seen.contains(s.idx()) {
            continue;
        }
        seen.insert(s.idx());
        if targets.contains(s.idx()) {
            hit = Some(s);
            break;
        }
        queue.push_back(s);
    }
    'bfs: while hit.is_none() {
        let s = queue.pop_front()?;
        for (jid, dst) in &g.transitions[s.idx()] {
            if seen.contains(dst.idx()) {
                continue;
            }
            seen.insert(dst.idx());
            parent[dst.idx()] = Some((s, *jid));
            if targets.contains(dst.idx()) {
                hit = Some(*dst);
                break 'bfs;
            }
            queue.push_back(*dst);
        }
    }
    let mut rev: Vec<(StateId, Option<u32>)> = Vec::new();
    let mut cur = hit?;
    let mut edge_out: Option<u32> = None;
    loop {
        rev.push((cur, edge_out));
        match parent[cur.idx()] {
            Some((p, jid)) => {
                edge_out = Some(jid);
                cur = p;
            }
            None => break,
        }
    }
    rev.reverse();
    let steps = rev
        .into_iter()
        .map(|(s, action_out)| TraceStep {
            state: s,
            values: g.decode(s).to_vec(),
            action: action_out.map(|jid| g.joint_actions[jid as usize].clone()),
        })
        .collect();
    Some(Trace { steps })
}

/// Checks `f` against the initial states. A failed `AG p` yields a shortest
/// counterexample into `!Sat(p)`; a held `EF p` yields a shortest witness
/// into `Sat(p)`.
pub fn check(g: &KripkeGraph, f: &CtlFormula) -> Verdict {
    let sat = sat_set(g, f);
    let holds = g.initial.iter().all(|s| sat.contains(s.idx()));
    let trace = if !holds {
        if let CtlFormula::Ag(inner) = f {
            let mut bad = sat_set(g, inner);
            bad.invert();
            shortest_path_into(g, &bad)
        } else {
            None
        }
    } else if let CtlFormula::Ef(inner) = f {
        shortest_path_into(g, &sat_set(g, inner))
    } else {
        None
    };
    Verdict {
        formula: f.clone(),
        holds,
        sat_count: sat.len(),
        trace,
    }
}
