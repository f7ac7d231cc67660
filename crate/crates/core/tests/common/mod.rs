//! Shared test infrastructure: bundled-model paths, a generator for random
//! valid-by-construction specs, random CTL formulas, and independent oracle
//! implementations used for differential testing.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use gamemc::expr::{BinOp, Expr};
use gamemc::game::{
    ActionDecl, AttributeDecl, ChoiceDecl, CollisionDecl, GameSpec, InitialStates, PropositionDecl,
    WriteDecl,
};
use gamemc::kripke::KripkeGraph;
use gamemc::{CtlFormula, Trace};

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .canonicalize()
        .expect("models directory")
}

// ---------------------------------------------------------------------------
// Random specs
// ---------------------------------------------------------------------------

fn comparison(rng: &mut ChaCha8Rng, attrs: &[AttributeDecl]) -> Expr {
    let a = &attrs[rng.gen_range(0..attrs.len())];
    let op = match rng.gen_range(0..4) {
        0 => BinOp::Le,
        1 => BinOp::Ge,
        2 => BinOp::Eq,
        _ => BinOp::Ne,
    };
    let k = rng.gen_range(a.lo..=a.hi);
    Expr::binary(op, Expr::var(&a.name), Expr::Int(k))
}

/// Builds a spec that passes validation by construction: per-actor write
/// territories keep action writes disjoint, every actor has an always-on
/// keeper action, moves are either clamped or guard-protected, and collision
/// operators write dedicated flag attributes with disjoint targets.
pub fn random_spec(rng: &mut ChaCha8Rng) -> GameSpec {
    let n_actors = rng.gen_range(1..=3usize);
    let n_attrs = rng.gen_range(n_actors..=4.max(n_actors));
    let actors: Vec<String> = (0..n_actors).map(|i| format!("actor_{i}")).collect();

    let mut attributes = Vec::new();
    for i in 0..n_attrs {
        let lo = rng.gen_range(-2..=0i64);
        let size = rng.gen_range(2..=4i64);
        attributes.push(AttributeDecl {
            name: format!("v{i}"),
            lo,
            hi: lo + size - 1,
            owner: actors[i % n_actors].clone(),
        });
    }
    // flag attributes are written only by collision operators
    let n_flags = rng.gen_range(0..=2usize);
    for f in 0..n_flags {
        attributes.push(AttributeDecl {
            name: format!("flag{f}"),
            lo: 0,
            hi: 1,
            owner: actors[0].clone(),
        });
    }
    let plain = &attributes[..n_attrs];

    // write territory of each actor: the non-flag attributes it owns
    let territory =
        |actor: usize| -> Vec<usize> { (0..n_attrs).filter(|i| i % n_actors == actor).collect() };

    let mut actions: Vec<ActionDecl> = Vec::new();
    for (ai, actor) in actors.iter().enumerate() {
        let own = territory(ai);
        let keeper_target = &attributes[own[0]];
        actions.push(ActionDecl {
            name: format!("Keep{ai}"),
            actors: vec![actor.clone()],
            choices: vec![],
            guard: Expr::Bool(true),
            writes: vec![WriteDecl {
                target: keeper_target.name.clone(),
                target_slot: 0,
                expr: Expr::var(&keeper_target.name),
            }],
            actor_ids: vec![],
        });
        for extra in 0..rng.gen_range(1..=2usize) {
            let target = &attributes[own[rng.gen_range(0..own.len())]];
            let with_choice = rng.gen_bool(0.5);
            let choices = if with_choice {
                vec![ChoiceDecl {
                    name: "c".to_string(),
                    lo: 0,
                    hi: rng.gen_range(1..=2),
                }]
            } else {
                vec![]
            };
            let delta: Expr = if with_choice {
                Expr::binary(BinOp::Sub, Expr::var("c"), Expr::Int(1))
            } else {
                Expr::Int(rng.gen_range(-1..=1))
            };
            let moved = Expr::binary(BinOp::Add, Expr::var(&target.name), delta);
            let (guard, write_expr) = if rng.gen_bool(0.5) {
                // clamped move under a random guard
                let mut guard = comparison(rng, plain);
                if rng.gen_bool(0.4) {
                    guard = Expr::binary(BinOp::And, guard, comparison(rng, plain));
                }
                (
                    guard,
                    Expr::Clamp(
                        Box::new(moved),
                        Box::new(Expr::Int(target.lo)),
                        Box::new(Expr::Int(target.hi)),
                    ),
                )
            } else {
                // unclamped move protected by its own bounds guard
                let guard = Expr::binary(
                    BinOp::And,
                    Expr::binary(BinOp::Ge, moved.clone(), Expr::Int(target.lo)),
                    Expr::binary(BinOp::Le, moved.clone(), Expr::Int(target.hi)),
                );
                (guard, moved)
            };
            actions.push(ActionDecl {
                name: format!("Act{ai}_{extra}"),
                actors: vec![actor.clone()],
                choices,
                guard,
                writes: vec![WriteDecl {
                    target: target.name.clone(),
                    target_slot: 0,
                    expr: write_expr,
                }],
                actor_ids: vec![],
            });
        }
    }
    // occasionally a shared action across two neighbouring actors, writing
    // into both territories; no choices, so actors cannot disagree on it
    if n_actors >= 2 && rng.gen_bool(0.4) {
        let a = rng.gen_range(0..n_actors - 1);
        let ta = territory(a)[0];
        let tb = territory(a + 1)[0];
        let guard = comparison(rng, plain);
        actions.push(ActionDecl {
            name: "Joint".to_string(),
            actors: vec![actors[a].clone(), actors[a + 1].clone()],
            choices: vec![],
            guard,
            writes: [ta, tb]
                .iter()
                .map(|&t| WriteDecl {
                    target: attributes[t].name.clone(),
                    target_slot: 0,
                    expr: Expr::Clamp(
                        Box::new(Expr::binary(
                            BinOp::Add,
                            Expr::var(&attributes[t].name),
                            Expr::Int(1),
                        )),
                        Box::new(Expr::Int(attributes[t].lo)),
                        Box::new(Expr::Int(attributes[t].hi)),
                    ),
                })
                .collect(),
            actor_ids: vec![],
        });
    }

    let mut collisions = Vec::new();
    for f in 0..n_flags {
        let flag = format!("flag{f}");
        let mut cond = comparison(rng, plain);
        if rng.gen_bool(0.3) {
            // compare against the pre-state of the same attribute
            if let Expr::Binary(_, lhs, _) = &cond {
                if let Expr::Var { name, .. } = lhs.as_ref() {
                    cond = Expr::binary(BinOp::Ne, Expr::var(name), Expr::pre(name));
                }
            }
        }
        collisions.push(CollisionDecl {
            name: format!("coll{f}"),
            guard: if rng.gen_bool(0.5) {
                Expr::Bool(true)
            } else {
                comparison(rng, plain)
            },
            writes: vec![WriteDecl {
                target: flag,
                target_slot: 0,
                expr: Expr::Ite(
                    Box::new(cond),
                    Box::new(Expr::Int(1)),
                    Box::new(Expr::Int(0)),
                ),
            }],
        });
    }

    let propositions = (0..rng.gen_range(2..=3usize))
        .map(|i| PropositionDecl {
            name: format!("p{i}"),
            predicate: comparison(rng, &attributes),
        })
        .collect();

    let initial = InitialStates::Vectors(vec![attributes.iter().map(|a| a.lo).collect()]);

    let mut spec = GameSpec {
        actors,
        attributes,
        parameters: vec![],
        actions,
        collisions,
        initial,
        propositions,
        defaults: vec![],
        provenance: None,
        param_values: vec![],
    };
    spec.finalize().expect("generated spec must be well-formed");
    spec
}

/// Random in-domain attribute vector.
pub fn random_vector(rng: &mut ChaCha8Rng, spec: &GameSpec) -> Vec<i64> {
    spec.attributes
        .iter()
        .map(|a| rng.gen_range(a.lo..=a.hi))
        .collect()
}

// ---------------------------------------------------------------------------
// Random CTL formulas
// ---------------------------------------------------------------------------

pub fn random_formula(rng: &mut ChaCha8Rng, props: &[String], depth: usize) -> CtlFormula {
    if depth == 0 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..6) {
            0 => CtlFormula::True,
            1 => CtlFormula::False,
            _ => {
                let i = rng.gen_range(0..props.len());
                CtlFormula::Prop(i, props[i].clone())
            }
        };
    }
    match rng.gen_range(0..13) {
        0 => CtlFormula::Not(Box::new(random_formula(rng, props, depth - 1))),
        1 => {
            let l = random_formula(rng, props, depth - 1);
            let r = random_formula(rng, props, depth - 1);
            CtlFormula::And(Box::new(l), Box::new(r))
        }
        2 => {
            let l = random_formula(rng, props, depth - 1);
            let r = random_formula(rng, props, depth - 1);
            CtlFormula::Or(Box::new(l), Box::new(r))
        }
        3 => {
            let l = random_formula(rng, props, depth - 1);
            let r = random_formula(rng, props, depth - 1);
            CtlFormula::Implies(Box::new(l), Box::new(r))
        }
        4 => CtlFormula::Ex(Box::new(random_formula(rng, props, depth - 1))),
        5 => CtlFormula::Ax(Box::new(random_formula(rng, props, depth - 1))),
        6 => CtlFormula::Ef(Box::new(random_formula(rng, props, depth - 1))),
        7 => CtlFormula::Af(Box::new(random_formula(rng, props, depth - 1))),
        8 => CtlFormula::Eg(Box::new(random_formula(rng, props, depth - 1))),
        9 => CtlFormula::Ag(Box::new(random_formula(rng, props, depth - 1))),
        10 => {
            let l = random_formula(rng, props, depth - 1);
            let r = random_formula(rng, props, depth - 1);
            CtlFormula::Eu(Box::new(l), Box::new(r))
        }
        _ => {
            let l = random_formula(rng, props, depth - 1);
            let r = random_formula(rng, props, depth - 1);
            CtlFormula::Au(Box::new(l), Box::new(r))
        }
    }
}

// ---------------------------------------------------------------------------
// Independent evolution oracle
// ---------------------------------------------------------------------------

/// Canonical joint action: sorted `(action index, valuation)` pairs.
pub type CanonicalJoint = Vec<(usize, Vec<i64>)>;

fn eval_bool(_spec: &GameSpec, e: &Expr, env: &gamemc::expr::Env) -> bool {
    gamemc::expr::eval(e, env)
        .and_then(|v| v.as_bool())
        .expect("oracle evaluation")
}

fn eval_int(_spec: &GameSpec, e: &Expr, env: &gamemc::expr::Env) -> i64 {
    gamemc::expr::eval(e, env)
        .and_then(|v| v.as_int())
        .expect("oracle evaluation")
}

fn all_valuations(action: &ActionDecl) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for c in &action.choices {
        let mut next = Vec::new();
        for prefix in &out {
            for v in c.lo..=c.hi {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Brute-force joint-action enumerator: every admissible action instance is
/// listed, then every instance subset whose actor sets exactly partition the
/// actor set is applied. No per-actor menus, no covering recursion; shares
/// nothing with the production path but the expression evaluator.
pub fn naive_successors(spec: &GameSpec, v: &[i64]) -> Vec<(CanonicalJoint, Vec<i64>)> {
    // admissible instances
    let mut instances: Vec<(usize, Vec<i64>)> = Vec::new();
    for (idx, action) in spec.actions.iter().enumerate() {
        for valuation in all_valuations(action) {
            let env = gamemc::expr::Env {
                attrs: v,
                params: &spec.param_values,
                choices: &valuation,
                ..Default::default()
            };
            if eval_bool(spec, &action.guard, &env) {
                instances.push((idx, valuation));
            }
        }
    }
    assert!(instances.len() <= 24, "oracle subset enumeration cap");

    let mut out = Vec::new();
    for mask in 0u32..(1 << instances.len()) {
        // the chosen instances' actor sets must partition all actors
        let mut covered: Vec<bool> = vec![false; spec.actors.len()];
        let mut ok = true;
        for (i, inst) in instances.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            for &a in &spec.actions[inst.0].actor_ids {
                if covered[a] {
                    ok = false;
                    break;
                }
                covered[a] = true;
            }
            if !ok {
                break;
            }
        }
        if !ok || !covered.iter().all(|c| *c) {
            continue;
        }

        // phase 1: simultaneous writes against v
        let mut intermediate = v.to_vec();
        for (i, (idx, valuation)) in instances.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            let action = &spec.actions[*idx];
            let env = gamemc::expr::Env {
                attrs: v,
                params: &spec.param_values,
                choices: valuation,
                ..Default::default()
            };
            for w in &action.writes {
                intermediate[w.target_slot as usize] = eval_int(spec, &w.expr, &env);
            }
        }
        // phase 2: collisions over the intermediate state
        let mut action_written = BTreeSet::new();
        for (i, (idx, _)) in instances.iter().enumerate() {
            if mask & (1 << i) != 0 {
                action_written.extend(spec.actions[*idx].writes.iter().map(|w| w.target_slot));
            }
        }
        let mut result = intermediate.clone();
        let mut coll_written = BTreeSet::new();
        for coll in &spec.collisions {
            let env = gamemc::expr::Env {
                attrs: &intermediate,
                pre: v,
                params: &spec.param_values,
                ..Default::default()
            };
            if !eval_bool(spec, &coll.guard, &env) {
                continue;
            }
            for w in &coll.writes {
                if action_written.contains(&w.target_slot) {
                    continue;
                }
                assert!(
                    coll_written.insert(w.target_slot),
                    "oracle hit a collision conflict on a validated spec"
                );
                result[w.target_slot as usize] = eval_int(spec, &w.expr, &env);
            }
        }

        let mut joint: CanonicalJoint = instances
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << *i) != 0)
            .map(|(_, inst)| inst.clone())
            .collect();
        joint.sort();
        out.push((joint, result));
    }
    out
}

/// Canonical multiset form of the production successor list.
pub fn canonical_successors(
    succ: &[(gamemc::JointAction, Vec<i64>)],
) -> Vec<(CanonicalJoint, Vec<i64>)> {
    let mut out: Vec<(CanonicalJoint, Vec<i64>)> = succ
        .iter()
        .map(|(j, v)| {
            let mut picks: CanonicalJoint = j
                .picks
                .iter()
                .map(|p| (p.action, p.choices.clone()))
                .collect();
            picks.sort();
            (picks, v.clone())
        })
        .collect();
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Trace replay
// ---------------------------------------------------------------------------

/// Replays a trace step by step through `successors`: every consecutive pair
/// must be a real transition under the recorded joint action, and the first
/// state must be initial.
pub fn verify_trace(spec: &GameSpec, graph: &KripkeGraph, trace: &Trace) {
    assert!(!trace.steps.is_empty(), "trace must be nonempty");
    let first = &trace.steps[0];
    assert!(
        graph
            .initial
            .iter()
            .any(|s| graph.decode(*s) == first.values.as_slice()),
        "trace must start in an initial state"
    );
    for pair in trace.steps.windows(2) {
        let (from, to) = (&pair[0], &pair[1]);
        let action = from
            .action
            .as_ref()
            .expect("intermediate steps carry the joint action");
        let succ = gamemc::successors(spec, &from.values).expect("replay");
        assert!(
            succ.iter()
                .any(|(j, next)| j == action && next == &to.values),
            "step is not a real transition"
        );
    }
    assert!(
        trace.steps.last().unwrap().action.is_none(),
        "last step must not carry an action"
    );
}
