//! Reachable explicit-state Kripke structure construction.
//!
//! One evolution step from a state `v`:
//!
//! 1. every actor selects one admissible action; a shared action occupies
//!    all of its actors at once, so the selected actions' actor sets
//!    partition the actor set (a `JointAction`);
//! 2. the selected actions' writes are applied simultaneously against `v`,
//!    producing the intermediate state (write sets are disjoint for
//!    validated specs);
//! 3. collision operators are scanned in declaration order; an applicable
//!    operator (guard over the intermediate state, `pre()` bound to `v`)
//!    writes only attributes untouched by phase 2's actions and by earlier
//!    collisions — a second collision writing an already collision-written
//!    attribute is an error;
//! 4. attributes written by neither phase copy from `v`.

use std::collections::HashMap;
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::bitset::StateSet;
use crate::expr::{eval, Env};
use crate::game::{ActionInstance, GameError, GameSpec};

/// Dense state index assigned in discovery order by [`build_kripke`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StateId(pub u32);

impl StateId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for StateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Mixed-radix codec between in-domain attribute vectors and integer codes
/// (declaration order, first attribute most significant). Bijective with the
/// domain product; available whenever the product fits in `u128`.
#[derive(Debug, Clone)]
pub struct VectorCodec {
    lo: Vec<i64>,
    sizes: Vec<u128>,
}

impl VectorCodec {
    pub fn new(spec: &GameSpec) -> Option<VectorCodec> {
        spec.domain_product()?;
        Some(VectorCodec {
            lo: spec.attributes.iter().map(|a| a.lo).collect(),
            sizes: spec.attributes.iter().map(|a| a.domain_size()).collect(),
        })
    }

    pub fn encode(&self, v: &[i64]) -> u128 {
        debug_assert_eq!(v.len(), self.lo.len());
        let mut code: u128 = 0;
        for (i, x) in v.iter().enumerate() {
            code = code * self.sizes[i] + (x - self.lo[i]) as u128;
        }
        code
    }

    pub fn decode(&self, mut code: u128) -> Vec<i64> {
        let mut v = vec![0i64; self.lo.len()];
        for i in (0..self.lo.len()).rev() {
            let r = code % self.sizes[i];
            code /= self.sizes[i];
            v[i] = self.lo[i] + r as i64;
        }
        v
    }
}

/// One selected action within a joint step: the action, all participating
/// actors, and the concrete choice valuation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionPick {
    pub action: usize,
    pub actors: Vec<usize>,
    pub choices: Vec<i64>,
}

/// A simultaneous selection covering every actor exactly once; shared
/// actions are recorded once with all their actors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointAction {
    pub picks: Vec<ActionPick>,
}

impl JointAction {
    /// Compact label such as `Move{dx=1}+Stay`, picks in covering order.
    pub fn label(&self, spec: &GameSpec) -> String {
        self.picks
            .iter()
            .map(|p| {
                let action = &spec.actions[p.action];
                if p.choices.is_empty() {
                    action.name.clone()
                } else {
                    let ch = action
                        .choices
                        .iter()
                        .zip(&p.choices)
                        .map(|(c, v)| format!("{}={}", c.name, v))
                        .collect::<Vec<_>>()
                        .join(",");
                    format!("{}{{{}}}", action.name, ch)
                }
            })
            .collect::<Vec<_>>()
            .join("+")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvolutionError {
    #[error("collision conflict at {vector:?} under {joint_action}: `{first}` and `{second}` both write uncovered `{attribute}`")]
    CollisionConflict {
        vector: Vec<i64>,
        joint_action: String,
        first: String,
        second: String,
        attribute: String,
    },
    #[error("range violation: {context} writes {value} to `{attribute}` at {vector:?}")]
    RangeViolation {
        vector: Vec<i64>,
        context: String,
        attribute: String,
        value: i64,
    },
    #[error("write conflict at {vector:?}: `{first}` and `{second}` both write `{attribute}`")]
    ActionWriteConflict {
        vector: Vec<i64>,
        first: String,
        second: String,
        attribute: String,
    },
    #[error("evaluation failed in {context} at {vector:?}: {message}")]
    Eval {
        vector: Vec<i64>,
        context: String,
        message: String,
    },
}

/// All `(joint action, successor vector)` pairs from `v`, in deterministic
/// order (actor declaration order drives the covering enumeration; per-actor
/// menus are ordered by action declaration, then lexicographic choices).
pub fn successors(
    spec: &GameSpec,
    v: &[i64],
) -> Result<Vec<(JointAction, Vec<i64>)>, EvolutionError> {
    let menus = actor_menus(spec, v)?;
    let mut out = Vec::new();
    let mut covered = vec![false; spec.actors.len()];
    let mut picks: Vec<ActionPick> = Vec::new();
    enumerate_coverings(spec, v, &menus, 0, &mut covered, &mut picks, &mut out)?;
    Ok(out)
}

fn actor_menus(spec: &GameSpec, v: &[i64]) -> Result<Vec<Vec<ActionInstance>>, EvolutionError> {
    (0..spec.actors.len())
        .map(|actor_id| {
            crate::game::admissible_for_actor_id(spec, actor_id, v).map_err(|e| match e {
                GameError::Eval { context, message } => EvolutionError::Eval {
                    vector: v.to_vec(),
                    context,
                    message,
                },
                other => EvolutionError::Eval {
                    vector: v.to_vec(),
                    context: "admissibility".to_string(),
                    message: other.to_string(),
                },
            })
        })
        .collect()
}

fn enumerate_coverings(
    spec: &GameSpec,
    v: &[i64],
    menus: &[Vec<ActionInstance>],
    actor: usize,
    covered: &mut Vec<bool>,
    picks: &mut Vec<ActionPick>,
    out: &mut Vec<(JointAction, Vec<i64>)>,
) -> Result<(), EvolutionError> {
    if actor == spec.actors.len() {
        let joint = JointAction {
            picks: picks.clone(),
        };
        let next = evolve(spec, v, picks, &joint)?;
        out.push((joint, next));
        return Ok(());
    }
    if covered[actor] {
        return enumerate_coverings(spec, v, menus, actor + 1, covered, picks, out);
    }
    for instance in &menus[actor] {
        let decl = &spec.actions[instance.action];
        // a shared action occupies all of its actors; it is selected at its
        // first actor, so every participant must still be free
        if decl.actor_ids.iter().any(|&a| covered[a]) {
            continue;
        }
        for &a in &decl.actor_ids {
            covered[a] = true;
        }
        picks.push(ActionPick {
            action: instance.action,
            actors: decl.actor_ids.clone(),
            choices: instance.choices.clone(),
        });
        enumerate_coverings(spec, v, menus, actor + 1, covered, picks, out)?;
        picks.pop();
        for &a in &decl.actor_ids {
            covered[a] = false;
        }
    }
    Ok(())
}

fn evolve(
    spec: &GameSpec,
    v: &[i64],
    picks: &[ActionPick],
    joint: &JointAction,
) -> Result<Vec<i64>, EvolutionError> {
    let n = spec.attributes.len();
    let mut intermediate = v.to_vec();
    // writer action index per attribute, for conflict reporting
    let mut action_writer: Vec<Option<usize>> = vec![None; n];

    for pick in picks {
        let action = &spec.actions[pick.action];
        let env = Env {
            attrs: v,
            params: &spec.param_values,
            choices: &pick.choices,
            ..Env::default()
        };
        for w in &action.writes {
            let slot = w.target_slot as usize;
            if let Some(prev) = action_writer[slot] {
                return Err(EvolutionError::ActionWriteConflict {
                    vector: v.to_vec(),
                    first: spec.actions[prev].name.clone(),
                    second: action.name.clone(),
                    attribute: w.target.clone(),
                });
            }
            let value =
                eval(&w.expr, &env)
                    .and_then(|x| x.as_int())
                    .map_err(|e| EvolutionError::Eval {
                        vector: v.to_vec(),
                        context: format!("write of {} in action {}", w.target, action.name),
                        message: e.to_string(),
                    })?;
            if !spec.attributes[slot].contains(value) {
                return Err(EvolutionError::RangeViolation {
                    vector: v.to_vec(),
                    context: format!("action {}", action.name),
                    attribute: w.target.clone(),
                    value,
                });
            }
            intermediate[slot] = value;
            action_writer[slot] = Some(pick.action);
        }
    }

    // collision phase: guards and writes all evaluate over the same
    // intermediate state; effects accumulate into `result` only
    let mut result = intermediate.clone();
    let mut collision_writer: Vec<Option<usize>> = vec![None; n];
    for (ci, coll) in spec.collisions.iter().enumerate() {
        let env = Env {
            attrs: &intermediate,
            pre: v,
            params: &spec.param_values,
            ..Env::default()
        };
        let applicable = eval(&coll.guard, &env)
            .and_then(|x| x.as_bool())
            .map_err(|e| EvolutionError::Eval {
                vector: v.to_vec(),
                context: format!("guard of collision {}", coll.name),
                message: e.to_string(),
            })?;
        if !applicable {
            continue;
        }
        for w in &coll.writes {
            let slot = w.target_slot as usize;
            if action_writer[slot].is_some() {
                // actions own the attribute this step
                continue;
            }
            if let Some(prev) = collision_writer[slot] {
                return Err(EvolutionError::CollisionConflict {
                    vector: v.to_vec(),
                    joint_action: joint.label(spec),
                    first: spec.collisions[prev].name.clone(),
                    second: coll.name.clone(),
                    attribute: w.target.clone(),
                });
            }
            let value =
                eval(&w.expr, &env)
                    .and_then(|x| x.as_int())
                    .map_err(|e| EvolutionError::Eval {
                        vector: v.to_vec(),
                        context: format!("write of {} in collision {}", w.target, coll.name),
                        message: e.to_string(),
                    })?;
            if !spec.attributes[slot].contains(value) {
                return Err(EvolutionError::RangeViolation {
                    vector: v.to_vec(),
                    context: format!("collision {}", coll.name),
                    attribute: w.target.clone(),
                    value,
                });
            }
            result[slot] = value;
            collision_writer[slot] = Some(ci);
        }
    }

    Ok(result)
}

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BuildConfig {
    /// Abort once more than this many states are reachable.
    pub max_states: usize,
    /// Cap for enumerating constraint-style initial sets.
    pub enum_cap: u128,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            max_states: 10_000_000,
            enum_cap: crate::game::DEFAULT_ENUM_CAP,
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("state cap exceeded: {reachable} states reached, {frontier} frontier states pending (cap {cap}); apply a reduction")]
    StateCapExceeded {
        reachable: usize,
        frontier: usize,
        cap: usize,
    },
    #[error("dead state {vector:?}: no joint action is performable")]
    DeadState { vector: Vec<i64> },
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Reachable Kripke structure. States are numbered in BFS discovery order;
/// joint actions are interned (edges carry an index into `joint_actions`).
#[derive(Debug, Clone)]
pub struct KripkeGraph {
    /// StateId -> attribute vector.
    pub states: Vec<Vec<i64>>,
    pub index: HashMap<Vec<i64>, StateId>,
    pub initial: Vec<StateId>,
    pub joint_actions: Vec<JointAction>,
    /// Outgoing edges per state: `(joint action index, destination)`.
    pub transitions: Vec<Vec<(u32, StateId)>>,
    /// Reverse adjacency, deduplicated.
    pub predecessors: Vec<Vec<StateId>>,
    /// Per-proposition satisfying-state sets.
    pub labels: Vec<StateSet>,
    pub prop_names: Vec<String>,
}

impl KripkeGraph {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.iter().map(|t| t.len()).sum()
    }

    pub fn decode(&self, s: StateId) -> &[i64] {
        &self.states[s.idx()]
    }

    pub fn state_id(&self, v: &[i64]) -> Option<StateId> {
        self.index.get(v).copied()
    }

    pub fn successors_of(&self, s: StateId) -> impl Iterator<Item = StateId> + '_ {
        self.transitions[s.idx()].iter().map(|(_, d)| *d)
    }

    pub fn has_label(&self, s: StateId, prop: usize) -> bool {
        self.labels[prop].contains(s.idx())
    }

    /// Proposition indices holding at `s`.
    pub fn labels_of(&self, s: StateId) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|p| self.labels[*p].contains(s.idx()))
            .collect()
    }

    /// Is `dst` reachable from `src` (inclusive)?
    pub fn reaches(&self, src: StateId, target: &StateSet) -> bool {
        if target.contains(src.idx()) {
            return true;
        }
        let mut seen = StateSet::new(self.state_count());
        seen.insert(src.idx());
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(s) = queue.pop_front() {
            for d in self.successors_of(s) {
                if target.contains(d.idx()) {
                    return true;
                }
                if !seen.contains(d.idx()) {
                    seen.insert(d.idx());
                    queue.push_back(d);
                }
            }
        }
        false
    }
}

/// Breadth-first closure of [`successors`] from the initial states, with
/// deterministic state numbering, labels, and reverse adjacency.
pub fn build_kripke(spec: &GameSpec, config: &BuildConfig) -> Result<KripkeGraph, BuildError> {
    let initial_vectors = spec.initial_vectors(config.enum_cap)?;
    if initial_vectors.is_empty() {
        return Err(BuildError::Game(GameError::EmptyInitial));
    }

    let mut states: Vec<Vec<i64>> = Vec::new();
    let mut index: HashMap<Vec<i64>, StateId> = HashMap::new();
    let mut transitions: Vec<Vec<(u32, StateId)>> = Vec::new();
    let mut joint_actions: Vec<JointAction> = Vec::new();
    let mut joint_index: HashMap<JointAction, u32> = HashMap::new();
    let mut initial = Vec::new();

    let mut queue = std::collections::VecDeque::new();
    for v in initial_vectors {
        if index.contains_key(&v) {
            initial.push(index[&v]);
            continue;
        }
        let id = StateId(states.len() as u32);
        index.insert(v.clone(), id);
        states.push(v.clone());
        transitions.push(Vec::new());
        initial.push(id);
        queue.push_back(id);
    }

    while let Some(src) = queue.pop_front() {
        let v = states[src.idx()].clone();
        let succ = successors(spec, &v)?;
        if succ.is_empty() {
            return Err(BuildError::DeadState { vector: v });
        }
        let mut edges = Vec::with_capacity(succ.len());
        for (joint, next) in succ {
            let dst = match index.get(&next) {
                Some(&id) => id,
                None => {
                    if states.len() >= config.max_states {
                        return Err(BuildError::StateCapExceeded {
                            reachable: states.len(),
                            frontier: queue.len() + 1,
                            cap: config.max_states,
                        });
                    }
                    let id = StateId(states.len() as u32);
                    index.insert(next.clone(), id);
                    states.push(next);
                    transitions.push(Vec::new());
                    queue.push_back(id);
                    id
                }
            };
            let jid = *joint_index.entry(joint.clone()).or_insert_with(|| {
                joint_actions.push(joint);
                (joint_actions.len() - 1) as u32
            });
            edges.push((jid, dst));
        }
        transitions[src.idx()] = edges;
    }

    let n = states.len();
    let mut predecessors: Vec<Vec<StateId>> = vec![Vec::new(); n];
    for (s, edges) in transitions.iter().enumerate() {
        for (_, dst) in edges {
            predecessors[dst.idx()].push(StateId(s as u32));
        }
    }
    for p in &mut predecessors {
        p.sort_unstable();
        p.dedup();
    }

    let mut labels = Vec::with_capacity(spec.propositions.len());
    for prop in &spec.propositions {
        let mut set = StateSet::new(n);
        for (i, v) in states.iter().enumerate() {
            let env = Env {
                attrs: v,
                params: &spec.param_values,
                ..Env::default()
            };
            let holds = eval(&prop.predicate, &env)
                .and_then(|x| x.as_bool())
                .map_err(|e| {
                    BuildError::Evolution(EvolutionError::Eval {
                        vector: v.clone(),
                        context: format!("proposition {}", prop.name),
                        message: e.to_string(),
                    })
                })?;
            if holds {
                set.insert(i);
            }
        }
        labels.push(set);
    }

    Ok(KripkeGraph {
        states,
        index,
        initial,
        joint_actions,
        transitions,
        predecessors,
        labels,
        prop_names: spec.propositions.iter().map(|p| p.name.clone()).collect(),
    })
}

// ---------------------------------------------------------------------------
// Stats and dump
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub states: usize,
    pub transitions: usize,
    pub initial: usize,
    pub max_out_degree: usize,
    /// `(proposition name, satisfying state count)` in declaration order.
    pub proposition_counts: Vec<(String, usize)>,
}

pub fn stats(g: &KripkeGraph) -> GraphStats {
    GraphStats {
        states: g.state_count(),
        transitions: g.transition_count(),
        initial: g.initial.len(),
        max_out_degree: g.transitions.iter().map(|t| t.len()).max().unwrap_or(0),
        proposition_counts: g
            .prop_names
            .iter()
            .cloned()
            .zip(g.labels.iter().map(|l| l.len()))
            .collect(),
    }
}

/// Line-oriented dump: a `# states` section mapping each StateId to its
/// attribute vector, then a `# transitions` section with one
/// `src<TAB>dst<TAB>jointaction` line per edge, both in StateId order.
pub fn write_graph_dump(g: &KripkeGraph, spec: &GameSpec, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "# states")?;
    for (i, v) in g.states.iter().enumerate() {
        let vals = v
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(w, "{i}\t{vals}")?;
    }
    writeln!(w, "# transitions")?;
    for (src, edges) in g.transitions.iter().enumerate() {
        for (jid, dst) in edges {
            writeln!(
                w,
                "{src}\t{}\t{}",
                dst.0,
                g.joint_actions[*jid as usize].label(spec)
            )?;
        }
    }
    Ok(())
}
