//! Semantics-by-definition CTL evaluation, used to cross-check [`sat_set`].
//!
//! Where the checker computes backward fixpoints over predecessor images,
//! this oracle answers each state by forward path search: reachability for
//! `EU`/`EF`/`AG`, lasso (reachable-cycle) detection for `EG`/`AF`/`AU`.
//! It shares no code with the fixpoint path and is capped to small graphs.
//!
//! [`sat_set`]: crate::ctl::sat_set

use thiserror::Error;

use crate::bitset::StateSet;
use crate::ctl::CtlFormula;
use crate::kripke::{KripkeGraph, StateId};

/// Oracle scale limit: definitional evaluation is quadratic and only meant
/// for differential testing.
pub const ORACLE_STATE_CAP: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle scale exceeded: {states} states (cap {cap})")]
    ScaleExceeded { states: usize, cap: usize },
}

/// Evaluates `f` on every reachable state by definition.
pub fn naive_check(g: &KripkeGraph, f: &CtlFormula) -> Result<StateSet, OracleError> {
    let n = g.state_count();
    if n > ORACLE_STATE_CAP {
        return Err(OracleError::ScaleExceeded {
            states: n,
            cap: ORACLE_STATE_CAP,
        });
    }
    let holds = eval_states(g, f);
    let mut out = StateSet::new(n);
    for (i, h) in holds.iter().enumerate() {
        if *h {
            out.insert(i);
        }
    }
    Ok(out)
}

fn eval_states(g: &KripkeGraph, f: &CtlFormula) -> Vec<bool> {
    let n = g.state_count();
    match f {
        CtlFormula::True => vec![true; n],
        CtlFormula::False => vec![false; n],
        CtlFormula::Prop(i, _) => (0..n).map(|s| g.labels[*i].contains(s)).collect(),
        CtlFormula::Not(a) => eval_states(g, a).into_iter().map(|b| !b).collect(),
        CtlFormula::And(a, b) => {
            let (va, vb) = (eval_states(g, a), eval_states(g, b));
            va.into_iter().zip(vb).map(|(x, y)| x && y).collect()
        }
        CtlFormula::Or(a, b) => {
            let (va, vb) = (eval_states(g, a), eval_states(g, b));
            va.into_iter().zip(vb).map(|(x, y)| x || y).collect()
        }
        CtlFormula::Implies(a, b) => {
            let (va, vb) = (eval_states(g, a), eval_states(g, b));
            va.into_iter().zip(vb).map(|(x, y)| !x || y).collect()
        }
        CtlFormula::Ex(a) => {
            let va = eval_states(g, a);
            (0..n)
                .map(|s| g.successors_of(StateId(s as u32)).any(|d| va[d.idx()]))
                .collect()
        }
        CtlFormula::Ax(a) => {
            let va = eval_states(g, a);
            (0..n)
                .map(|s| g.successors_of(StateId(s as u32)).all(|d| va[d.idx()]))
                .collect()
        }
        CtlFormula::Ef(a) => {
            let va = eval_states(g, a);
            (0..n).map(|s| can_reach(g, s, &va)).collect()
        }
        CtlFormula::Ag(a) => {
            let va = eval_states(g, a);
            let bad: Vec<bool> = va.iter().map(|b| !b).collect();
            (0..n).map(|s| !can_reach(g, s, &bad)).collect()
        }
        CtlFormula::Eg(a) => {
            let va = eval_states(g, a);
            (0..n).map(|s| has_lasso_within(g, s, &va)).collect()
        }
        CtlFormula::Af(a) => {
            let va = eval_states(g, a);
            let avoid: Vec<bool> = va.iter().map(|b| !b).collect();
            (0..n).map(|s| !has_lasso_within(g, s, &avoid)).collect()
        }
        CtlFormula::Eu(a, b) => {
            let (va, vb) = (eval_states(g, a), eval_states(g, b));
            (0..n).map(|s| eu_path_exists(g, s, &va, &vb)).collect()
        }
        CtlFormula::Au(a, b) => {
            let (va, vb) = (eval_states(g, a), eval_states(g, b));
            (0..n).map(|s| !au_failure_exists(g, s, &va, &vb)).collect()
        }
    }
}

/// Forward reachability (inclusive) into `target`-states.
fn can_reach(g: &KripkeGraph, start: usize, target: &[bool]) -> bool {
    if target[start] {
        return true;
    }
    let mut seen = vec![false; g.state_count()];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        for d in g.successors_of(StateId(s as u32)) {
            let d = d.idx();
            if target[d] {
                return true;
            }
            if !seen[d] {
                seen[d] = true;
                stack.push(d);
            }
        }
    }
    false
}

/// Path through `hold`-states ending at an `until`-state
/// (the `until`-state itself need not satisfy `hold`).
fn eu_path_exists(g: &KripkeGraph, start: usize, hold: &[bool], until: &[bool]) -> bool {
    if until[start] {
        return true;
    }
    if !hold[start] {
        return false;
    }
    let mut seen = vec![false; g.state_count()];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        for d in g.successors_of(StateId(s as u32)) {
            let d = d.idx();
            if seen[d] {
                continue;
            }
            seen[d] = true;
            if until[d] {
                return true;
            }
            if hold[d] {
                stack.push(d);
            }
        }
    }
    false
}

#[derive(Clone, Copy, PartialEq)]
enum Color {
    White,
    Gray,
    Black,
}

/// Is there an infinite path from `start` staying in `within`-states?
/// In a finite graph that is a path to a cycle inside the subgraph.
fn has_lasso_within(g: &KripkeGraph, start: usize, within: &[bool]) -> bool {
    if !within[start] {
        return false;
    }
    let mut color = vec![Color::White; g.state_count()];
    // iterative DFS with explicit post-processing marker
    let mut stack: Vec<(usize, bool)> = vec![(start, false)];
    while let Some((s, processed)) = stack.pop() {
        if processed {
            color[s] = Color::Black;
            continue;
        }
        if color[s] != Color::White {
            continue;
        }
        color[s] = Color::Gray;
        stack.push((s, true));
        for d in g.successors_of(StateId(s as u32)) {
            let d = d.idx();
            if !within[d] {
                continue;
            }
            match color[d] {
                Color::Gray => return true,
                Color::White => stack.push((d, false)),
                Color::Black => {}
            }
        }
    }
    false
}

/// Does some path from `start` violate `A[hold U until]`? A violation either
/// reaches a state with neither `hold` nor `until` before any `until`-state,
/// or avoids `until` forever (a cycle within `hold`-and-not-`until` states).
fn au_failure_exists(g: &KripkeGraph, start: usize, hold: &[bool], until: &[bool]) -> bool {
    if until[start] {
        return false;
    }
    if !hold[start] {
        return true;
    }
    let mut color = vec![Color::White; g.state_count()];
    let mut stack: Vec<(usize, bool)> = vec![(start, false)];
    while let Some((s, processed)) = stack.pop() {
        if processed {
            color[s] = Color::Black;
            continue;
        }
        if color[s] != Color::White {
            continue;
        }
        color[s] = Color::Gray;
        stack.push((s, true));
        for d in g.successors_of(StateId(s as u32)) {
            let d = d.idx();
            if until[d] {
                continue; // this branch satisfied the until
            }
            if !hold[d] {
                return true; // neither hold nor until
            }
            match color[d] {
                Color::Gray => return true, // until avoided forever
                Color::White => stack.push((d, false)),
                Color::Black => {}
            }
        }
    }
    false
}
