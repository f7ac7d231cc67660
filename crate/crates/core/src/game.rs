//! The declarative game tuple: actors, bounded integer attributes, constant
//! parameters, guarded actions with finite choice variables, collision
//! operators, initial states, and named propositions.
//!
//! A `GameSpec` must pass [`finalize`](GameSpec::finalize) (name resolution
//! and structural checks) before any downstream use, and [`validate_game`]
//! before graph construction. Validation checks four well-formedness
//! conditions, each with a concrete witness:
//!
//! - `OP-COVERAGE`: every actor has an admissible action at every in-domain
//!   vector;
//! - `OP-CONFLICT`: two actions that can execute simultaneously never write
//!   the same attribute (actions sharing an actor never co-execute, since
//!   each actor performs exactly one action per step);
//! - `RANGE`: action writes stay inside the target attribute's domain;
//! - `COLLISION-CONFLICT`: no two applicable collision operators write the
//!   same uncovered attribute in one step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{eval, infer_type, Env, Expr, Slot, Ty};
use crate::kripke;

/// Default cap on the attribute-domain product for exhaustive enumeration.
pub const DEFAULT_ENUM_CAP: u128 = 100_000_000;

/// Cap on the number of choice valuations of a single action.
pub const MAX_CHOICE_VALUATIONS: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
    pub owner: String,
}

impl AttributeDecl {
    pub fn domain_size(&self) -> u128 {
        (self.hi as i128 - self.lo as i128 + 1) as u128
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterDecl {
    pub name: String,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteDecl {
    pub target: String,
    /// Attribute slot of `target`; filled by `finalize`.
    pub target_slot: u32,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionDecl {
    pub name: String,
    /// Participating actors; shared actions list several and are performed
    /// by all of them at once.
    pub actors: Vec<String>,
    pub choices: Vec<ChoiceDecl>,
    pub guard: Expr,
    pub writes: Vec<WriteDecl>,
    /// Actor indices of `actors`; filled by `finalize`.
    pub actor_ids: Vec<usize>,
}

impl ActionDecl {
    /// Number of choice valuations.
    pub fn valuation_count(&self) -> u128 {
        self.choices
            .iter()
            .map(|c| (c.hi as i128 - c.lo as i128 + 1) as u128)
            .product()
    }

    /// Iterates choice valuations in lexicographic order over the declared
    /// choice list (last variable varies fastest). An action without choices
    /// yields one empty valuation.
    pub fn valuations(&self) -> Valuations<'_> {
        Valuations {
            choices: &self.choices,
            current: None,
            done: false,
        }
    }

    pub fn write_slots(&self) -> impl Iterator<Item = u32> + '_ {
        self.writes.iter().map(|w| w.target_slot)
    }
}

pub struct Valuations<'a> {
    choices: &'a [ChoiceDecl],
    current: Option<Vec<i64>>,
    done: bool,
}

impl Iterator for Valuations<'_> {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        if self.done {
            return None;
        }
        match &mut self.current {
            None => {
                let first: Vec<i64> = self.choices.iter().map(|c| c.lo).collect();
                self.current = Some(first.clone());
                Some(first)
            }
            Some(v) => {
                for i in (0..self.choices.len()).rev() {
                    if v[i] < self.choices[i].hi {
                        v[i] += 1;
                        for (j, c) in self.choices.iter().enumerate().skip(i + 1) {
                            v[j] = c.lo;
                        }
                        return Some(v.clone());
                    }
                }
                self.done = true;
                None
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionDecl {
    pub name: String,
    /// Guard over the intermediate (post-action) state; `pre(x)` refers to
    /// the step's source state.
    pub guard: Expr,
    pub writes: Vec<WriteDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropositionDecl {
    pub name: String,
    pub predicate: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitialStates {
    /// Explicit attribute vectors, aligned with attribute declaration order.
    Vectors(Vec<Vec<i64>>),
    /// Boolean constraints; the initial set is every in-domain vector
    /// satisfying all of them.
    Constraints(Vec<Expr>),
}

/// Digest pair recording where a reduced spec came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub source_digest: String,
    pub reduction_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub actors: Vec<String>,
    pub attributes: Vec<AttributeDecl>,
    pub parameters: Vec<ParameterDecl>,
    pub actions: Vec<ActionDecl>,
    pub collisions: Vec<CollisionDecl>,
    pub initial: InitialStates,
    pub propositions: Vec<PropositionDecl>,
    /// Template defaults (the spec file's `defaults:` map), order-preserving.
    pub defaults: Vec<(String, String)>,
    pub provenance: Option<Provenance>,
    /// Parameter values by slot; filled by `finalize`.
    pub param_values: Vec<i64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown name `{name}` in {context}")]
    UnknownName { name: String, context: String },
    #[error("unknown actor `{actor}` in {context}")]
    UnknownActor { actor: String, context: String },
    #[error("attribute `{0}` has empty domain (lo > hi)")]
    EmptyDomain(String),
    #[error("actor `{0}` owns no action")]
    NoActions(String),
    #[error("action `{0}` lists no actors")]
    NoActors(String),
    #[error("action or collision `{0}` has an empty write map")]
    EmptyWrites(String),
    #[error("duplicate write target `{target}` in `{context}`")]
    DuplicateWrite { target: String, context: String },
    #[error("pre() reference `{name}` is only allowed in collision operators ({context})")]
    PreNotAllowed { name: String, context: String },
    #[error("type error in {context}: {message}")]
    Type { context: String, message: String },
    #[error("expected a {expected} expression in {context}")]
    WrongType {
        context: String,
        expected: &'static str,
    },
    #[error("action `{0}` has more than {MAX_CHOICE_VALUATIONS} choice valuations")]
    ChoiceDomainTooLarge(String),
    #[error("choice `{name}` of action `{action}` has empty range (lo > hi)")]
    EmptyChoiceRange { name: String, action: String },
    #[error("initial vector {index} is incomplete or out of domain: {detail}")]
    BadInitialVector { index: usize, detail: String },
    #[error("initial state set is empty after enumeration")]
    EmptyInitial,
    #[error("attribute-domain product {product} exceeds the enumeration cap {cap}")]
    DomainTooLarge { product: u128, cap: u128 },
    #[error("evaluation failed in {context}: {message}")]
    Eval { context: String, message: String },
}

impl GameSpec {
    /// Resolves every name to a slot, type-checks every expression, and
    /// enforces the structural invariants. Idempotent; must be called before
    /// any other operation.
    pub fn finalize(&mut self) -> Result<(), GameError> {
        // unique names: attributes and parameters share the expression
        // namespace, actors / actions / collisions / propositions each have
        // their own
        let mut expr_names = BTreeSet::new();
        for a in &self.attributes {
            if !expr_names.insert(a.name.clone()) {
                return Err(GameError::DuplicateName(a.name.clone()));
            }
        }
        for p in &self.parameters {
            if !expr_names.insert(p.name.clone()) {
                return Err(GameError::DuplicateName(p.name.clone()));
            }
        }
        let action_names: Vec<String> = self.actions.iter().map(|a| a.name.clone()).collect();
        let collision_names: Vec<String> = self.collisions.iter().map(|c| c.name.clone()).collect();
        let prop_names: Vec<String> = self.propositions.iter().map(|p| p.name.clone()).collect();
        for (list, kind) in [
            (&self.actors, "actor"),
            (&action_names, "action"),
            (&collision_names, "collision"),
            (&prop_names, "proposition"),
        ] {
            let mut seen = BTreeSet::new();
            for name in list.iter() {
                if !seen.insert(name.clone()) {
                    return Err(GameError::DuplicateName(format!("{kind} {name}")));
                }
            }
        }

        for a in &self.attributes {
            if a.lo > a.hi {
                return Err(GameError::EmptyDomain(a.name.clone()));
            }
            if !self.actors.contains(&a.owner) {
                return Err(GameError::UnknownActor {
                    actor: a.owner.clone(),
                    context: format!("attribute {}", a.name),
                });
            }
        }

        self.param_values = self.parameters.iter().map(|p| p.value).collect();

        let attr_index: BTreeMap<&str, u32> = self
            .attributes
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.as_str(), i as u32))
            .collect();
        let param_index: BTreeMap<&str, u32> = self
            .parameters
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.as_str(), i as u32))
            .collect();
        let actor_index: BTreeMap<&str, usize> = self
            .actors
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();

        let resolve_writes = |writes: &mut Vec<WriteDecl>,
                              context: &str,
                              choice_index: &BTreeMap<&str, u32>,
                              allow_pre: bool|
         -> Result<(), GameError> {
            if writes.is_empty() {
                return Err(GameError::EmptyWrites(context.to_string()));
            }
            let mut seen = BTreeSet::new();
            for w in writes.iter_mut() {
                let slot =
                    *attr_index
                        .get(w.target.as_str())
                        .ok_or_else(|| GameError::UnknownName {
                            name: w.target.clone(),
                            context: format!("write target of {context}"),
                        })?;
                if !seen.insert(slot) {
                    return Err(GameError::DuplicateWrite {
                        target: w.target.clone(),
                        context: context.to_string(),
                    });
                }
                w.target_slot = slot;
                resolve_expr(
                    &mut w.expr,
                    &attr_index,
                    &param_index,
                    choice_index,
                    allow_pre,
                    &format!("write of {} in {}", w.target, context),
                )?;
                expect_type(
                    &w.expr,
                    Ty::Int,
                    &format!("write of {} in {}", w.target, context),
                )?;
            }
            // deterministic application order
            writes.sort_by_key(|w| w.target_slot);
            Ok(())
        };

        for ai in 0..self.actions.len() {
            let mut action = std::mem::replace(
                &mut self.actions[ai],
                ActionDecl {
                    name: String::new(),
                    actors: vec![],
                    choices: vec![],
                    guard: Expr::Bool(true),
                    writes: vec![],
                    actor_ids: vec![],
                },
            );
            let context = format!("action {}", action.name);
            if action.actors.is_empty() {
                return Err(GameError::NoActors(action.name.clone()));
            }
            action.actor_ids = action
                .actors
                .iter()
                .map(|a| {
                    actor_index
                        .get(a.as_str())
                        .copied()
                        .ok_or_else(|| GameError::UnknownActor {
                            actor: a.clone(),
                            context: context.clone(),
                        })
                })
                .collect::<Result<_, _>>()?;
            action.actor_ids.sort_unstable();
            action.actor_ids.dedup();

            let mut choice_index = BTreeMap::new();
            for (i, c) in action.choices.iter().enumerate() {
                if c.lo > c.hi {
                    return Err(GameError::EmptyChoiceRange {
                        name: c.name.clone(),
                        action: action.name.clone(),
                    });
                }
                if expr_names.contains(&c.name) || choice_index.contains_key(c.name.as_str()) {
                    return Err(GameError::DuplicateName(c.name.clone()));
                }
                choice_index.insert(c.name.as_str(), i as u32);
            }
            if action.valuation_count() > MAX_CHOICE_VALUATIONS {
                return Err(GameError::ChoiceDomainTooLarge(action.name.clone()));
            }
            resolve_expr(
                &mut action.guard,
                &attr_index,
                &param_index,
                &choice_index,
                false,
                &format!("guard of {context}"),
            )?;
            expect_type(&action.guard, Ty::Bool, &format!("guard of {context}"))?;
            resolve_writes(&mut action.writes, &context, &choice_index, false)?;
            self.actions[ai] = action;
        }

        for ci in 0..self.collisions.len() {
            let mut coll = std::mem::replace(
                &mut self.collisions[ci],
                CollisionDecl {
                    name: String::new(),
                    guard: Expr::Bool(true),
                    writes: vec![],
                },
            );
            let context = format!("collision {}", coll.name);
            let empty = BTreeMap::new();
            resolve_expr(
                &mut coll.guard,
                &attr_index,
                &param_index,
                &empty,
                true,
                &format!("guard of {context}"),
            )?;
            expect_type(&coll.guard, Ty::Bool, &format!("guard of {context}"))?;
            resolve_writes(&mut coll.writes, &context, &empty, true)?;
            self.collisions[ci] = coll;
        }

        for p in &mut self.propositions {
            let context = format!("proposition {}", p.name);
            let empty = BTreeMap::new();
            resolve_expr(
                &mut p.predicate,
                &attr_index,
                &param_index,
                &empty,
                false,
                &context,
            )?;
            expect_type(&p.predicate, Ty::Bool, &context)?;
        }

        match &mut self.initial {
            InitialStates::Vectors(vectors) => {
                if vectors.is_empty() {
                    return Err(GameError::EmptyInitial);
                }
                for (i, v) in vectors.iter().enumerate() {
                    if v.len() != self.attributes.len() {
                        return Err(GameError::BadInitialVector {
                            index: i,
                            detail: format!(
                                "has {} values, expected {}",
                                v.len(),
                                self.attributes.len()
                            ),
                        });
                    }
                    for (a, value) in self.attributes.iter().zip(v) {
                        if !a.contains(*value) {
                            return Err(GameError::BadInitialVector {
                                index: i,
                                detail: format!(
                                    "{} = {} outside {}..{}",
                                    a.name, value, a.lo, a.hi
                                ),
                            });
                        }
                    }
                }
            }
            InitialStates::Constraints(constraints) => {
                for (i, c) in constraints.iter_mut().enumerate() {
                    let context = format!("initial constraint {i}");
                    let empty = BTreeMap::new();
                    resolve_expr(c, &attr_index, &param_index, &empty, false, &context)?;
                    expect_type(c, Ty::Bool, &context)?;
                }
            }
        }

        for actor in &self.actors {
            if !self.actions.iter().any(|a| a.actors.contains(actor)) {
                return Err(GameError::NoActions(actor.clone()));
            }
        }

        Ok(())
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn actor_index(&self, name: &str) -> Option<usize> {
        self.actors.iter().position(|a| a == name)
    }

    pub fn proposition_index(&self, name: &str) -> Option<usize> {
        self.propositions.iter().position(|p| p.name == name)
    }

    /// Product of all attribute-domain sizes, `None` on u128 overflow.
    pub fn domain_product(&self) -> Option<u128> {
        let mut product: u128 = 1;
        for a in &self.attributes {
            product = product.checked_mul(a.domain_size())?;
        }
        Some(product)
    }

    pub fn in_domain(&self, v: &[i64]) -> bool {
        v.len() == self.attributes.len()
            && self.attributes.iter().zip(v).all(|(a, x)| a.contains(*x))
    }

    /// The initial vectors, enumerated and deduplicated. Constraint-style
    /// initial sets enumerate the whole domain, subject to `cap`.
    pub fn initial_vectors(&self, cap: u128) -> Result<Vec<Vec<i64>>, GameError> {
        match &self.initial {
            InitialStates::Vectors(vs) => {
                let mut seen = BTreeSet::new();
                let mut out = Vec::new();
                for v in vs {
                    if seen.insert(v.clone()) {
                        out.push(v.clone());
                    }
                }
                Ok(out)
            }
            InitialStates::Constraints(cs) => {
                let mut out = Vec::new();
                for v in enumerate_attribute_vectors(self, cap)? {
                    let env = Env {
                        attrs: &v,
                        params: &self.param_values,
                        ..Env::default()
                    };
                    let mut all = true;
                    for c in cs {
                        if !eval(c, &env)
                            .map_err(|e| GameError::Eval {
                                context: "initial constraint".to_string(),
                                message: e.to_string(),
                            })?
                            .as_bool()
                            .map_err(|e| GameError::Eval {
                                context: "initial constraint".to_string(),
                                message: e.to_string(),
                            })?
                        {
                            all = false;
                            break;
                        }
                    }
                    if all {
                        out.push(v);
                    }
                }
                if out.is_empty() {
                    return Err(GameError::EmptyInitial);
                }
                Ok(out)
            }
        }
    }

    /// Renders a vector as `name=value` pairs in declaration order.
    pub fn format_vector(&self, v: &[i64]) -> String {
        self.attributes
            .iter()
            .zip(v)
            .map(|(a, x)| format!("{}={}", a.name, x))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn resolve_expr(
    e: &mut Expr,
    attrs: &BTreeMap<&str, u32>,
    params: &BTreeMap<&str, u32>,
    choices: &BTreeMap<&str, u32>,
    allow_pre: bool,
    context: &str,
) -> Result<(), GameError> {
    match e {
        Expr::Int(_) | Expr::Bool(_) => Ok(()),
        Expr::Var { name, slot } => {
            if let Some(i) = attrs.get(name.as_str()) {
                *slot = Slot::Attr(*i);
            } else if let Some(i) = params.get(name.as_str()) {
                *slot = Slot::Param(*i);
            } else if let Some(i) = choices.get(name.as_str()) {
                *slot = Slot::Choice(*i);
            } else {
                return Err(GameError::UnknownName {
                    name: name.clone(),
                    context: context.to_string(),
                });
            }
            Ok(())
        }
        Expr::Pre { name, slot } => {
            if !allow_pre {
                return Err(GameError::PreNotAllowed {
                    name: name.clone(),
                    context: context.to_string(),
                });
            }
            if let Some(i) = attrs.get(name.as_str()) {
                *slot = Slot::Attr(*i);
                Ok(())
            } else {
                Err(GameError::UnknownName {
                    name: name.clone(),
                    context: context.to_string(),
                })
            }
        }
        Expr::Unary(_, a) => resolve_expr(a, attrs, params, choices, allow_pre, context),
        Expr::Binary(_, a, b) => {
            resolve_expr(a, attrs, params, choices, allow_pre, context)?;
            resolve_expr(b, attrs, params, choices, allow_pre, context)
        }
        Expr::Ite(a, b, c) | Expr::Clamp(a, b, c) => {
            resolve_expr(a, attrs, params, choices, allow_pre, context)?;
            resolve_expr(b, attrs, params, choices, allow_pre, context)?;
            resolve_expr(c, attrs, params, choices, allow_pre, context)
        }
    }
}

fn expect_type(e: &Expr, want: Ty, context: &str) -> Result<(), GameError> {
    let got = infer_type(e).map_err(|err| GameError::Type {
        context: context.to_string(),
        message: err.to_string(),
    })?;
    if got != want {
        return Err(GameError::WrongType {
            context: context.to_string(),
            expected: match want {
                Ty::Bool => "boolean",
                Ty::Int => "integer",
            },
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

/// Iterator over all in-domain attribute vectors in lexicographic order over
/// declaration order (the last attribute varies fastest).
pub struct AttrVecIter {
    lo: Vec<i64>,
    hi: Vec<i64>,
    current: Option<Vec<i64>>,
    started: bool,
}

impl Iterator for AttrVecIter {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        if !self.started {
            self.started = true;
            self.current = Some(self.lo.clone());
            return self.current.clone();
        }
        let v = self.current.as_mut()?;
        for i in (0..v.len()).rev() {
            if v[i] < self.hi[i] {
                v[i] += 1;
                let tail = i + 1;
                v[tail..].copy_from_slice(&self.lo[tail..]);
                return Some(v.clone());
            }
        }
        self.current = None;
        None
    }
}

/// Enumerates `V = V_1 x ... x V_m`; yields each vector exactly once.
/// Fails with `DomainTooLarge` when the product exceeds `cap`.
pub fn enumerate_attribute_vectors(spec: &GameSpec, cap: u128) -> Result<AttrVecIter, GameError> {
    let product = spec.domain_product().unwrap_or(u128::MAX);
    if product > cap {
        return Err(GameError::DomainTooLarge { product, cap });
    }
    Ok(AttrVecIter {
        lo: spec.attributes.iter().map(|a| a.lo).collect(),
        hi: spec.attributes.iter().map(|a| a.hi).collect(),
        current: None,
        started: spec.attributes.is_empty(),
    })
}

// ---------------------------------------------------------------------------
// Admissible actions
// ---------------------------------------------------------------------------

/// One selectable action instance: an action index plus a concrete choice
/// valuation (aligned with the action's declared choices).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionInstance {
    pub action: usize,
    pub choices: Vec<i64>,
}

/// All `(action, choice valuation)` pairs admissible for `actor` at `v`:
/// the actor participates and the guard holds. Deterministic order: action
/// declaration order, then lexicographic choice order.
pub fn admissible_actions(
    spec: &GameSpec,
    actor: &str,
    v: &[i64],
) -> Result<Vec<ActionInstance>, GameError> {
    let actor_id = spec
        .actor_index(actor)
        .ok_or_else(|| GameError::UnknownActor {
            actor: actor.to_string(),
            context: "admissible_actions".to_string(),
        })?;
    admissible_for_actor_id(spec, actor_id, v)
}

pub(crate) fn admissible_for_actor_id(
    spec: &GameSpec,
    actor_id: usize,
    v: &[i64],
) -> Result<Vec<ActionInstance>, GameError> {
    let mut out = Vec::new();
    for (idx, action) in spec.actions.iter().enumerate() {
        if !action.actor_ids.contains(&actor_id) {
            continue;
        }
        for valuation in action.valuations() {
            let env = Env {
                attrs: v,
                params: &spec.param_values,
                choices: &valuation,
                ..Env::default()
            };
            let ok = eval(&action.guard, &env)
                .and_then(|x| x.as_bool())
                .map_err(|e| GameError::Eval {
                    context: format!("guard of action {}", action.name),
                    message: e.to_string(),
                })?;
            if ok {
                out.push(ActionInstance {
                    action: idx,
                    choices: valuation,
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckKind {
    OpCoverage,
    OpConflict,
    Range,
    CollisionConflict,
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckKind::OpCoverage => write!(f, "OP-COVERAGE"),
            CheckKind::OpConflict => write!(f, "OP-CONFLICT"),
            CheckKind::Range => write!(f, "RANGE"),
            CheckKind::CollisionConflict => write!(f, "COLLISION-CONFLICT"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind")]
pub enum Violation {
    /// An actor with no admissible action at some in-domain vector.
    OpCoverage { actor: String, vector: Vec<i64> },
    /// Two simultaneously performable action instances with intersecting
    /// write sets.
    OpConflict {
        vector: Vec<i64>,
        first_action: String,
        first_choices: Vec<i64>,
        second_action: String,
        second_choices: Vec<i64>,
        attribute: String,
    },
    /// An admissible write that leaves the target attribute's domain.
    Range {
        action: String,
        choices: Vec<i64>,
        vector: Vec<i64>,
        attribute: String,
        value: i64,
    },
    /// Two applicable collision operators writing the same uncovered
    /// attribute in one step.
    CollisionConflict {
        vector: Vec<i64>,
        joint_action: String,
        first_collision: String,
        second_collision: String,
        attribute: String,
    },
    /// Guard or write evaluation failed (runtime division by zero or
    /// overflow) during exhaustive checking.
    EvalFailure {
        context: String,
        vector: Vec<i64>,
        message: String,
    },
}

impl Violation {
    pub fn kind(&self) -> CheckKind {
        match self {
            Violation::OpCoverage { .. } => CheckKind::OpCoverage,
            Violation::OpConflict { .. } => CheckKind::OpConflict,
            Violation::Range { .. } | Violation::EvalFailure { .. } => CheckKind::Range,
            Violation::CollisionConflict { .. } => CheckKind::CollisionConflict,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OpCoverage { actor, vector } => write!(
                f,
                "OP-COVERAGE: actor `{actor}` has no admissible action at {vector:?}"
            ),
            Violation::OpConflict {
                vector,
                first_action,
                first_choices,
                second_action,
                second_choices,
                attribute,
            } => write!(
                f,
                "OP-CONFLICT: `{first_action}`{first_choices:?} and `{second_action}`{second_choices:?} both write `{attribute}` and are simultaneously admissible at {vector:?}"
            ),
            Violation::Range {
                action,
                choices,
                vector,
                attribute,
                value,
            } => write!(
                f,
                "RANGE: `{action}`{choices:?} writes {value} to `{attribute}` (out of domain) at {vector:?}"
            ),
            Violation::CollisionConflict {
                vector,
                joint_action,
                first_collision,
                second_collision,
                attribute,
            } => write!(
                f,
                "COLLISION-CONFLICT: collisions `{first_collision}` and `{second_collision}` both write uncovered `{attribute}` at {vector:?} under {joint_action}"
            ),
            Violation::EvalFailure {
                context,
                vector,
                message,
            } => write!(f, "EVAL: {context} failed at {vector:?}: {message}"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedCheck {
    pub kind: CheckKind,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub skipped: Vec<SkippedCheck>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ValidateConfig {
    /// Exhaustive checks run only when the attribute-domain product is at
    /// most this cap; above it they are reported as skipped.
    pub enum_cap: u128,
    /// Stop collecting after this many violations.
    pub max_violations: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            enum_cap: DEFAULT_ENUM_CAP,
            max_violations: 100,
        }
    }
}

/// Sub-product iterator: enumerates assignments of the attributes listed in
/// `slots`, holding every other attribute at its domain minimum. Guards and
/// writes depend only on the attributes they reference, so checks over the
/// sub-product are exhaustive-equivalent while visiting far fewer vectors.
struct SubVectors<'a> {
    spec: &'a GameSpec,
    slots: Vec<u32>,
    current: Vec<i64>,
    started: bool,
    done: bool,
}

impl<'a> SubVectors<'a> {
    fn new(spec: &'a GameSpec, slots: BTreeSet<u32>) -> Self {
        SubVectors {
            spec,
            slots: slots.into_iter().collect(),
            current: spec.attributes.iter().map(|a| a.lo).collect(),
            started: false,
            done: false,
        }
    }
}

impl Iterator for SubVectors<'_> {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.current.clone());
        }
        for k in (0..self.slots.len()).rev() {
            let s = self.slots[k] as usize;
            if self.current[s] < self.spec.attributes[s].hi {
                self.current[s] += 1;
                for j in k + 1..self.slots.len() {
                    let t = self.slots[j] as usize;
                    self.current[t] = self.spec.attributes[t].lo;
                }
                return Some(self.current.clone());
            }
        }
        self.done = true;
        None
    }
}

/// Checks the four operator conditions. Exhaustive (with witnesses) when the
/// attribute-domain product is within `config.enum_cap`; otherwise all four
/// checks are reported as skipped.
pub fn validate_game(spec: &GameSpec, config: &ValidateConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let product = spec.domain_product().unwrap_or(u128::MAX);
    if product > config.enum_cap {
        let reason = format!(
            "attribute-domain product {product} exceeds enumeration cap {}",
            config.enum_cap
        );
        for kind in [
            CheckKind::OpCoverage,
            CheckKind::OpConflict,
            CheckKind::Range,
            CheckKind::CollisionConflict,
        ] {
            report.skipped.push(SkippedCheck {
                kind,
                reason: reason.clone(),
            });
        }
        return report;
    }

    check_coverage(spec, config, &mut report);
    check_conflicts(spec, config, &mut report);
    check_range(spec, config, &mut report);
    check_collision_conflicts(spec, config, &mut report);
    report
}

fn full(report: &ValidationReport, config: &ValidateConfig) -> bool {
    report.violations.len() >= config.max_violations
}

fn guard_attr_slots(e: &Expr) -> BTreeSet<u32> {
    let mut s = BTreeSet::new();
    e.collect_attr_slots(&mut s);
    s
}

fn check_coverage(spec: &GameSpec, config: &ValidateConfig, report: &mut ValidationReport) {
    for (actor_id, actor) in spec.actors.iter().enumerate() {
        // only attributes read by this actor's guards can influence coverage
        let mut slots = BTreeSet::new();
        for action in &spec.actions {
            if action.actor_ids.contains(&actor_id) {
                action.guard.collect_attr_slots(&mut slots);
            }
        }
        for v in SubVectors::new(spec, slots) {
            if full(report, config) {
                return;
            }
            match admissible_for_actor_id(spec, actor_id, &v) {
                Ok(list) if list.is_empty() => {
                    report.violations.push(Violation::OpCoverage {
                        actor: actor.clone(),
                        vector: v,
                    });
                }
                Ok(_) => {}
                Err(e) => report.violations.push(Violation::EvalFailure {
                    context: format!("coverage check for actor {actor}"),
                    vector: v,
                    message: e.to_string(),
                }),
            }
        }
    }
}

/// Two distinct actions can execute in the same step iff their actor sets
/// are disjoint: every actor performs exactly one action per step and a
/// shared action occupies all of its actors at once.
fn can_coexecute(a: &ActionDecl, b: &ActionDecl) -> bool {
    a.actor_ids.iter().all(|i| !b.actor_ids.contains(i))
}

fn check_conflicts(spec: &GameSpec, config: &ValidateConfig, report: &mut ValidationReport) {
    // distinct-action conflicts
    for i in 0..spec.actions.len() {
        for j in i + 1..spec.actions.len() {
            let (a, b) = (&spec.actions[i], &spec.actions[j]);
            if !can_coexecute(a, b) {
                continue;
            }
            let wa: BTreeSet<u32> = a.write_slots().collect();
            let shared: Vec<u32> = b.write_slots().filter(|s| wa.contains(s)).collect();
            let Some(&attr_slot) = shared.first() else {
                continue;
            };
            let mut slots = guard_attr_slots(&a.guard);
            slots.extend(guard_attr_slots(&b.guard));
            for v in SubVectors::new(spec, slots) {
                if full(report, config) {
                    return;
                }
                let pick_a = first_admissible(spec, a, &v);
                let pick_b = first_admissible(spec, b, &v);
                if let (Some(ca), Some(cb)) = (pick_a, pick_b) {
                    report.violations.push(Violation::OpConflict {
                        vector: v,
                        first_action: a.name.clone(),
                        first_choices: ca,
                        second_action: b.name.clone(),
                        second_choices: cb,
                        attribute: spec.attributes[attr_slot as usize].name.clone(),
                    });
                    break; // one witness per pair
                }
            }
        }
    }

    // a shared action whose choice variables admit two valuations at once
    // would let its actors pick different instances of the same action
    for action in &spec.actions {
        if action.actor_ids.len() < 2 || action.choices.is_empty() {
            continue;
        }
        let slots = guard_attr_slots(&action.guard);
        'outer: for v in SubVectors::new(spec, slots) {
            if full(report, config) {
                return;
            }
            let mut found: Option<Vec<i64>> = None;
            for valuation in action.valuations() {
                if guard_true(spec, action, &valuation, &v) == Some(true) {
                    if let Some(first) = found {
                        report.violations.push(Violation::OpConflict {
                            vector: v,
                            first_action: action.name.clone(),
                            first_choices: first,
                            second_action: action.name.clone(),
                            second_choices: valuation,
                            attribute: spec.attributes[action.writes[0].target_slot as usize]
                                .name
                                .clone(),
                        });
                        break 'outer;
                    }
                    found = Some(valuation);
                }
            }
        }
    }
}

fn guard_true(spec: &GameSpec, action: &ActionDecl, choices: &[i64], v: &[i64]) -> Option<bool> {
    let env = Env {
        attrs: v,
        params: &spec.param_values,
        choices,
        ..Env::default()
    };
    eval(&action.guard, &env)
        .ok()
        .and_then(|x| x.as_bool().ok())
}

fn first_admissible(spec: &GameSpec, action: &ActionDecl, v: &[i64]) -> Option<Vec<i64>> {
    action
        .valuations()
        .find(|c| guard_true(spec, action, c, v) == Some(true))
}

fn check_range(spec: &GameSpec, config: &ValidateConfig, report: &mut ValidationReport) {
    // actions: exact over the sub-product of referenced attributes
    for action in &spec.actions {
        let mut slots = guard_attr_slots(&action.guard);
        for w in &action.writes {
            w.expr.collect_attr_slots(&mut slots);
        }
        for valuation in action.valuations() {
            for v in SubVectors::new(spec, slots.clone()) {
                if full(report, config) {
                    return;
                }
                if guard_true(spec, action, &valuation, &v) != Some(true) {
                    continue;
                }
                let env = Env {
                    attrs: &v,
                    params: &spec.param_values,
                    choices: &valuation,
                    ..Env::default()
                };
                for w in &action.writes {
                    match eval(&w.expr, &env).and_then(|x| x.as_int()) {
                        Ok(value) => {
                            let attr = &spec.attributes[w.target_slot as usize];
                            if !attr.contains(value) {
                                report.violations.push(Violation::Range {
                                    action: action.name.clone(),
                                    choices: valuation.clone(),
                                    vector: v.clone(),
                                    attribute: attr.name.clone(),
                                    value,
                                });
                            }
                        }
                        Err(e) => report.violations.push(Violation::EvalFailure {
                            context: format!("write of {} in action {}", w.target, action.name),
                            vector: v.clone(),
                            message: e.to_string(),
                        }),
                    }
                }
            }
        }
    }

    // collision writes range over (pre, intermediate) pairs; both components
    // are in-domain for specs whose action writes pass the check above, so an
    // independent sub-product over current and pre references, then an exact
    // confirmation pass, is sound and witness-precise
    let mut suspicious = false;
    'scan: for coll in &spec.collisions {
        let mut cur = guard_attr_slots(&coll.guard);
        let mut pre = BTreeSet::new();
        collect_pre_slots(&coll.guard, &mut pre);
        for w in &coll.writes {
            w.expr.collect_attr_slots(&mut cur);
            collect_pre_slots(&w.expr, &mut pre);
        }
        // over-approximation: pre values enumerate independently
        let pre_base: Vec<i64> = spec.attributes.iter().map(|a| a.lo).collect();
        for v in SubVectors::new(spec, cur.clone()) {
            for p in SubVectors::new(spec, pre.clone()) {
                let _ = &pre_base;
                let env = Env {
                    attrs: &v,
                    pre: &p,
                    params: &spec.param_values,
                    ..Env::default()
                };
                let applicable = eval(&coll.guard, &env)
                    .ok()
                    .and_then(|x| x.as_bool().ok())
                    .unwrap_or(true);
                if !applicable {
                    continue;
                }
                for w in &coll.writes {
                    match eval(&w.expr, &env).and_then(|x| x.as_int()) {
                        Ok(value) => {
                            let attr = &spec.attributes[w.target_slot as usize];
                            if !attr.contains(value) {
                                suspicious = true;
                                break 'scan;
                            }
                        }
                        Err(_) => {
                            suspicious = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
    }
    if suspicious {
        // exact confirmation: simulate every joint action from every vector
        simulate_all(spec, config, report, SimulateFor::Range);
    }
}

fn collect_pre_slots(e: &Expr, out: &mut BTreeSet<u32>) {
    match e {
        Expr::Pre {
            slot: Slot::Attr(i),
            ..
        } => {
            out.insert(*i);
        }
        Expr::Unary(_, a) => collect_pre_slots(a, out),
        Expr::Binary(_, a, b) => {
            collect_pre_slots(a, out);
            collect_pre_slots(b, out);
        }
        Expr::Ite(a, b, c) | Expr::Clamp(a, b, c) => {
            collect_pre_slots(a, out);
            collect_pre_slots(b, out);
            collect_pre_slots(c, out);
        }
        _ => {}
    }
}

fn check_collision_conflicts(
    spec: &GameSpec,
    config: &ValidateConfig,
    report: &mut ValidationReport,
) {
    // static pre-check: conflicts require two collisions with intersecting
    // write sets
    let mut overlap = false;
    for i in 0..spec.collisions.len() {
        let wi: BTreeSet<u32> = spec.collisions[i]
            .writes
            .iter()
            .map(|w| w.target_slot)
            .collect();
        for j in i + 1..spec.collisions.len() {
            if spec.collisions[j]
                .writes
                .iter()
                .any(|w| wi.contains(&w.target_slot))
            {
                overlap = true;
            }
        }
    }
    if overlap {
        simulate_all(spec, config, report, SimulateFor::CollisionConflict);
    }
}

#[derive(PartialEq, Clone, Copy)]
enum SimulateFor {
    Range,
    CollisionConflict,
}

/// Exact fallback: run the evolution semantics from every in-domain vector
/// and convert runtime faults into violations.
fn simulate_all(
    spec: &GameSpec,
    config: &ValidateConfig,
    report: &mut ValidationReport,
    looking_for: SimulateFor,
) {
    let vectors = match enumerate_attribute_vectors(spec, config.enum_cap) {
        Ok(it) => it,
        Err(_) => return,
    };
    for v in vectors {
        if full(report, config) {
            return;
        }
        match kripke::successors(spec, &v) {
            Ok(_) => {}
            Err(kripke::EvolutionError::CollisionConflict {
                vector,
                joint_action,
                first,
                second,
                attribute,
            }) if looking_for == SimulateFor::CollisionConflict => {
                report.violations.push(Violation::CollisionConflict {
                    vector,
                    joint_action,
                    first_collision: first,
                    second_collision: second,
                    attribute,
                });
            }
            Err(kripke::EvolutionError::RangeViolation {
                vector,
                context,
                attribute,
                value,
            }) if looking_for == SimulateFor::Range => {
                report.violations.push(Violation::Range {
                    action: context,
                    choices: vec![],
                    vector,
                    attribute,
                    value,
                });
            }
            Err(_) => {}
        }
    }
}
