//! Model reduction: attribute freezing (projection with constant
//! substitution) and per-actor action removal.
//!
//! Freezing deletes an attribute and substitutes the frozen constant into
//! every expression (guards, writes, collision operators, propositions,
//! initial constraints), then constant-folds. A pure index projection would
//! leave dangling references; the constant keeps the reduced spec closed.
//!
//! Reduction is user-directed and NOT verdict-preserving in general; callers
//! surface an explicit warning and the result carries provenance digests of
//! both inputs.

use serde::Serialize;
use thiserror::Error;

use crate::game::{GameError, GameSpec, InitialStates, Provenance};
use crate::kripke::{build_kripke, BuildConfig};
use crate::spec_io;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReductionSpec {
    /// Attributes to delete, each replaced everywhere by the constant.
    pub freeze: Vec<(String, i64)>,
    /// Per-actor action removals. Removing a shared action for one actor
    /// leaves the other participants untouched.
    pub drop_actions: Vec<(String, Vec<String>)>,
    pub drop_collisions: Vec<String>,
}

impl ReductionSpec {
    pub fn is_identity(&self) -> bool {
        self.freeze.is_empty() && self.drop_actions.is_empty() && self.drop_collisions.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReduceError {
    #[error("unknown name `{name}` in {context}")]
    UnknownName { name: String, context: String },
    #[error("frozen value {value} for `{attribute}` is outside its domain {lo}..{hi}")]
    FrozenOutOfDomain {
        attribute: String,
        value: i64,
        lo: i64,
        hi: i64,
    },
    #[error("actor `{actor}` does not share action `{action}`")]
    ActionNotOwned { actor: String, action: String },
    #[error("reduction leaves actor `{actor}` with zero actions")]
    EmptyActorActions { actor: String },
    #[error("duplicate entry `{0}` in reduction")]
    Duplicate(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Applies a reduction, producing a finalized spec with provenance. The
/// caller is expected to re-validate the result.
pub fn apply_reduction(spec: &GameSpec, r: &ReductionSpec) -> Result<GameSpec, ReduceError> {
    // check the reduction against the spec before touching anything
    let mut frozen: Vec<(usize, i64)> = Vec::with_capacity(r.freeze.len());
    for (name, value) in &r.freeze {
        let slot = spec
            .attr_index(name)
            .ok_or_else(|| ReduceError::UnknownName {
                name: name.clone(),
                context: "freeze".to_string(),
            })?;
        if frozen.iter().any(|(s, _)| *s == slot) {
            return Err(ReduceError::Duplicate(name.clone()));
        }
        let attr = &spec.attributes[slot];
        if !attr.contains(*value) {
            return Err(ReduceError::FrozenOutOfDomain {
                attribute: name.clone(),
                value: *value,
                lo: attr.lo,
                hi: attr.hi,
            });
        }
        frozen.push((slot, *value));
    }
    for (actor, actions) in &r.drop_actions {
        if spec.actor_index(actor).is_none() {
            return Err(ReduceError::UnknownName {
                name: actor.clone(),
                context: "drop_actions".to_string(),
            });
        }
        for action in actions {
            let Some(decl) = spec.actions.iter().find(|a| &a.name == action) else {
                return Err(ReduceError::UnknownName {
                    name: action.clone(),
                    context: format!("drop_actions of {actor}"),
                });
            };
            if !decl.actors.contains(actor) {
                return Err(ReduceError::ActionNotOwned {
                    actor: actor.clone(),
                    action: action.clone(),
                });
            }
        }
    }
    for coll in &r.drop_collisions {
        if !spec.collisions.iter().any(|c| &c.name == coll) {
            return Err(ReduceError::UnknownName {
                name: coll.clone(),
                context: "drop_collisions".to_string(),
            });
        }
    }

    let frozen_names: Vec<(&str, i64)> = frozen
        .iter()
        .map(|(slot, v)| (spec.attributes[*slot].name.as_str(), *v))
        .collect();
    let subst = |e: &crate::expr::Expr| {
        let mut out = e.clone();
        for (name, value) in &frozen_names {
            out = out.subst_name(name, *value);
        }
        out.fold()
    };
    let is_frozen = |name: &str| frozen_names.iter().any(|(n, _)| *n == name);

    let mut reduced = spec.clone();
    reduced.attributes.retain(|a| !is_frozen(&a.name));

    // actions: per-actor drops, constant substitution, write pruning
    let mut actions = Vec::with_capacity(spec.actions.len());
    for action in &spec.actions {
        let mut act = action.clone();
        for (actor, names) in &r.drop_actions {
            if names.contains(&act.name) {
                act.actors.retain(|a| a != actor);
            }
        }
        if act.actors.is_empty() {
            continue;
        }
        act.guard = subst(&act.guard);
        act.writes.retain(|w| !is_frozen(&w.target));
        for w in &mut act.writes {
            w.expr = subst(&w.expr);
        }
        if act.writes.is_empty() {
            continue;
        }
        act.actor_ids = vec![];
        actions.push(act);
    }
    reduced.actions = actions;

    let mut collisions = Vec::with_capacity(spec.collisions.len());
    for coll in &spec.collisions {
        if r.drop_collisions.contains(&coll.name) {
            continue;
        }
        let mut c = coll.clone();
        c.guard = subst(&c.guard);
        c.writes.retain(|w| !is_frozen(&w.target));
        for w in &mut c.writes {
            w.expr = subst(&w.expr);
        }
        if c.writes.is_empty() {
            continue;
        }
        collisions.push(c);
    }
    reduced.collisions = collisions;

    reduced.initial = match &spec.initial {
        InitialStates::Vectors(vs) => InitialStates::Vectors(
            vs.iter()
                .map(|v| {
                    spec.attributes
                        .iter()
                        .zip(v)
                        .filter(|(a, _)| !is_frozen(&a.name))
                        .map(|(_, x)| *x)
                        .collect()
                })
                .collect(),
        ),
        InitialStates::Constraints(cs) => {
            InitialStates::Constraints(cs.iter().map(&subst).collect())
        }
    };

    for p in &mut reduced.propositions {
        p.predicate = subst(&p.predicate);
    }

    // an actor whose actions are all gone is deleted with its (necessarily
    // frozen) attributes; if it still owns live attributes the reduction is
    // rejected instead
    let mut actors = Vec::with_capacity(spec.actors.len());
    for actor in &spec.actors {
        let has_action = reduced.actions.iter().any(|a| a.actors.contains(actor));
        if has_action {
            actors.push(actor.clone());
            continue;
        }
        let owns_live = reduced.attributes.iter().any(|a| &a.owner == actor);
        if owns_live {
            return Err(ReduceError::EmptyActorActions {
                actor: actor.clone(),
            });
        }
    }
    reduced.actors = actors;

    reduced.provenance = Some(Provenance {
        source_digest: spec_io::digest(spec_io::serialize_game_spec(spec).as_bytes()),
        reduction_digest: spec_io::digest(spec_io::serialize_reduction(r).as_bytes()),
    });
    reduced.finalize()?;
    Ok(reduced)
}

// ---------------------------------------------------------------------------
// Reduction report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ReportCaps {
    /// Domain products above this are reported as uncountable.
    pub enum_cap: u128,
    /// Reachable counting is skipped when more states than this exist.
    pub max_states: usize,
}

impl Default for ReportCaps {
    fn default() -> Self {
        ReportCaps {
            enum_cap: crate::game::DEFAULT_ENUM_CAP,
            max_states: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    /// Attribute-domain products; `None` when the product overflows u128.
    pub product_before: Option<u128>,
    pub product_after: Option<u128>,
    /// Whether each side is within the enumeration cap.
    pub before_over_cap: bool,
    pub after_over_cap: bool,
    /// Reachable-state counts, when buildable within the caps.
    pub reachable_before: Option<usize>,
    pub reachable_after: Option<usize>,
    pub removed_attributes: Vec<String>,
    pub removed_actions: Vec<String>,
    pub removed_collisions: Vec<String>,
    pub removed_actors: Vec<String>,
}

/// Compares a spec against its reduction: domain products, reachable counts
/// (when countable within caps), and the removed symbols.
pub fn reduction_report(before: &GameSpec, after: &GameSpec, caps: &ReportCaps) -> ReductionReport {
    let count = |spec: &GameSpec| -> Option<usize> {
        build_kripke(
            spec,
            &BuildConfig {
                max_states: caps.max_states,
                enum_cap: caps.enum_cap,
            },
        )
        .ok()
        .map(|g| g.state_count())
    };
    let product_before = before.domain_product();
    let product_after = after.domain_product();
    ReductionReport {
        product_before,
        product_after,
        before_over_cap: product_before.is_none_or(|p| p > caps.enum_cap),
        after_over_cap: product_after.is_none_or(|p| p > caps.enum_cap),
        reachable_before: count(before),
        reachable_after: count(after),
        removed_attributes: before
            .attributes
            .iter()
            .filter(|a| after.attr_index(&a.name).is_none())
            .map(|a| a.name.clone())
            .collect(),
        removed_actions: before
            .actions
            .iter()
            .filter(|a| !after.actions.iter().any(|b| b.name == a.name))
            .map(|a| a.name.clone())
            .collect(),
        removed_collisions: before
            .collisions
            .iter()
            .filter(|c| !after.collisions.iter().any(|d| d.name == c.name))
            .map(|c| c.name.clone())
            .collect(),
        removed_actors: before
            .actors
            .iter()
            .filter(|a| !after.actors.contains(a))
            .cloned()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::game::{
        ActionDecl, AttributeDecl, ChoiceDecl, InitialStates, PropositionDecl, WriteDecl,
    };
    use std::collections::BTreeSet;

    fn two_actor_spec() -> GameSpec {
        let mut spec = GameSpec {
            actors: vec!["pg".to_string(), "sb".to_string()],
            attributes: vec![
                AttributeDecl {
                    name: "pg_x".to_string(),
                    lo: 0,
                    hi: 4,
                    owner: "pg".to_string(),
                },
                AttributeDecl {
                    name: "sb_x".to_string(),
                    lo: 0,
                    hi: 4,
                    owner: "sb".to_string(),
                },
                AttributeDecl {
                    name: "sb_flying".to_string(),
                    lo: 0,
                    hi: 1,
                    owner: "sb".to_string(),
                },
            ],
            parameters: vec![],
            actions: vec![
                ActionDecl {
                    name: "Move".to_string(),
                    actors: vec!["pg".to_string()],
                    choices: vec![ChoiceDecl {
                        name: "dx".to_string(),
                        lo: -1,
                        hi: 1,
                    }],
                    guard: parse_expression("sb_flying = 0 or sb_x != pg_x").unwrap(),
                    writes: vec![WriteDecl {
                        target: "pg_x".to_string(),
                        target_slot: 0,
                        expr: parse_expression("clamp(pg_x + dx, 0, 4)").unwrap(),
                    }],
                    actor_ids: vec![],
                },
                ActionDecl {
                    name: "StayPg".to_string(),
                    actors: vec!["pg".to_string()],
                    choices: vec![],
                    guard: parse_expression("true").unwrap(),
                    writes: vec![WriteDecl {
                        target: "pg_x".to_string(),
                        target_slot: 0,
                        expr: parse_expression("pg_x").unwrap(),
                    }],
                    actor_ids: vec![],
                },
                ActionDecl {
                    name: "Fly".to_string(),
                    actors: vec!["sb".to_string()],
                    choices: vec![],
                    guard: parse_expression("true").unwrap(),
                    writes: vec![
                        WriteDecl {
                            target: "sb_x".to_string(),
                            target_slot: 0,
                            expr: parse_expression("clamp(sb_x + sb_flying, 0, 4)").unwrap(),
                        },
                        WriteDecl {
                            target: "sb_flying".to_string(),
                            target_slot: 0,
                            expr: parse_expression("sb_flying").unwrap(),
                        },
                    ],
                    actor_ids: vec![],
                },
            ],
            collisions: vec![],
            initial: InitialStates::Vectors(vec![vec![0, 4, 0]]),
            propositions: vec![PropositionDecl {
                name: "met".to_string(),
                predicate: parse_expression("pg_x = sb_x").unwrap(),
            }],
            defaults: vec![],
            provenance: None,
            param_values: vec![],
        };
        spec.finalize().unwrap();
        spec
    }

    fn strip_provenance(mut s: GameSpec) -> GameSpec {
        s.provenance = None;
        s
    }

    #[test]
    fn identity_reduction_is_structural_identity() {
        let spec = two_actor_spec();
        let r = ReductionSpec::default();
        let reduced = apply_reduction(&spec, &r).unwrap();
        assert!(reduced.provenance.is_some());
        assert_eq!(strip_provenance(reduced), spec);
    }

    #[test]
    fn freeze_substitutes_and_removes() {
        let spec = two_actor_spec();
        let r = ReductionSpec {
            freeze: vec![("sb_x".to_string(), 4), ("sb_flying".to_string(), 0)],
            drop_actions: vec![],
            drop_collisions: vec![],
        };
        let reduced = apply_reduction(&spec, &r).unwrap();
        // sb's Fly lost all writes and sb owns no live attribute: both gone
        assert_eq!(reduced.actors, vec!["pg".to_string()]);
        assert_eq!(reduced.attributes.len(), 1);
        assert!(reduced.actions.iter().all(|a| a.name != "Fly"));
        // every surviving expression references only surviving names
        let mut names = BTreeSet::new();
        for a in &reduced.actions {
            a.guard.collect_names(&mut names);
            for w in &a.writes {
                w.expr.collect_names(&mut names);
            }
        }
        for p in &reduced.propositions {
            p.predicate.collect_names(&mut names);
        }
        assert!(
            !names.contains("sb_x") && !names.contains("sb_flying"),
            "{names:?}"
        );
        // initial vector projected
        assert_eq!(reduced.initial, InitialStates::Vectors(vec![vec![0]]));
    }

    #[test]
    fn freeze_out_of_domain_rejected() {
        let spec = two_actor_spec();
        let r = ReductionSpec {
            freeze: vec![("sb_x".to_string(), 9)],
            ..Default::default()
        };
        assert!(matches!(
            apply_reduction(&spec, &r),
            Err(ReduceError::FrozenOutOfDomain { value: 9, .. })
        ));
    }

    #[test]
    fn freeze_unknown_attribute_rejected() {
        let spec = two_actor_spec();
        let r = ReductionSpec {
            freeze: vec![("nope".to_string(), 0)],
            ..Default::default()
        };
        assert!(matches!(
            apply_reduction(&spec, &r),
            Err(ReduceError::UnknownName { .. })
        ));
    }

    #[test]
    fn drop_action_for_non_sharing_actor_rejected() {
        let spec = two_actor_spec();
        let r = ReductionSpec {
            drop_actions: vec![("sb".to_string(), vec!["Move".to_string()])],
            ..Default::default()
        };
        assert!(matches!(
            apply_reduction(&spec, &r),
            Err(ReduceError::ActionNotOwned { .. })
        ));
    }

    #[test]
    fn dropping_all_actions_of_live_actor_rejected() {
        let spec = two_actor_spec();
        let r = ReductionSpec {
            drop_actions: vec![("sb".to_string(), vec!["Fly".to_string()])],
            ..Default::default()
        };
        assert!(matches!(
            apply_reduction(&spec, &r),
            Err(ReduceError::EmptyActorActions { .. })
        ));
    }

    #[test]
    fn drop_actions_shrinks_menu() {
        let spec = two_actor_spec();
        let r = ReductionSpec {
            drop_actions: vec![("pg".to_string(), vec!["Move".to_string()])],
            ..Default::default()
        };
        let reduced = apply_reduction(&spec, &r).unwrap();
        assert!(reduced.actions.iter().all(|a| a.name != "Move"));
        assert!(reduced.actions.iter().any(|a| a.name == "StayPg"));
    }

    #[test]
    fn reduction_composes_when_disjoint() {
        let spec = two_actor_spec();
        let r1 = ReductionSpec {
            freeze: vec![("sb_flying".to_string(), 0)],
            ..Default::default()
        };
        let r2 = ReductionSpec {
            freeze: vec![("sb_x".to_string(), 4)],
            ..Default::default()
        };
        let merged = ReductionSpec {
            freeze: vec![("sb_flying".to_string(), 0), ("sb_x".to_string(), 4)],
            ..Default::default()
        };
        let sequential = apply_reduction(&apply_reduction(&spec, &r1).unwrap(), &r2).unwrap();
        let at_once = apply_reduction(&spec, &merged).unwrap();
        assert_eq!(strip_provenance(sequential), strip_provenance(at_once));
    }

    #[test]
    fn report_identity_has_equal_sizes() {
        let spec = two_actor_spec();
        let reduced = apply_reduction(&spec, &ReductionSpec::default()).unwrap();
        let report = reduction_report(&spec, &reduced, &ReportCaps::default());
        assert_eq!(report.product_before, report.product_after);
        assert_eq!(report.reachable_before, report.reachable_after);
        assert!(report.removed_attributes.is_empty());
    }

    #[test]
    fn report_freeze_shrinks_product() {
        let spec = two_actor_spec();
        let r = ReductionSpec {
            freeze: vec![("sb_x".to_string(), 4), ("sb_flying".to_string(), 0)],
            ..Default::default()
        };
        let reduced = apply_reduction(&spec, &r).unwrap();
        let report = reduction_report(&spec, &reduced, &ReportCaps::default());
        assert!(report.product_after.unwrap() < report.product_before.unwrap());
        assert_eq!(
            report.removed_attributes,
            vec!["sb_x".to_string(), "sb_flying".to_string()]
        );
        assert_eq!(report.removed_actors, vec!["sb".to_string()]);
    }
}
