//! Cross-module invariants on randomized specs: coverage/menu agreement,
//! graph construction against a naive BFS, label soundness, in-domain
//! closure, CTL monotonicity, and freezing consistency.

mod common;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{canonical_successors, naive_successors, random_spec};
use gamemc::expr::{eval, Env};
use gamemc::game::{AttributeDecl, Violation};
use gamemc::reducer::ReductionSpec;
use gamemc::{
    apply_reduction, build_kripke, sat_set, validate_game, BuildConfig, CtlFormula, ValidateConfig,
};

fn exhaustive_config() -> ValidateConfig {
    ValidateConfig {
        max_violations: usize::MAX,
        ..ValidateConfig::default()
    }
}

#[test]
fn coverage_report_agrees_with_admissible_menus() {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut broken_seen = 0;
    for round in 0..60 {
        let mut spec = random_spec(&mut rng);
        // half the rounds: break coverage by removing a keeper whose actor
        // still has other (guarded) actions
        if round % 2 == 1 {
            let keepers: Vec<usize> = spec
                .actions
                .iter()
                .enumerate()
                .filter(|(i, a)| {
                    a.name.starts_with("Keep")
                        && spec
                            .actions
                            .iter()
                            .enumerate()
                            .any(|(j, b)| j != *i && b.actors == a.actors)
                })
                .map(|(i, _)| i)
                .collect();
            if let Some(&i) = keepers.first() {
                spec.actions.remove(i);
                spec.finalize().unwrap();
            }
        }
        let report = validate_game(&spec, &exhaustive_config());
        let coverage: Vec<(&String, &Vec<i64>)> = report
            .violations
            .iter()
            .filter_map(|v| match v {
                Violation::OpCoverage { actor, vector } => Some((actor, vector)),
                _ => None,
            })
            .collect();

        // soundness: every reported witness really has an empty menu
        for (actor, vector) in &coverage {
            let menu = gamemc::admissible_actions(&spec, actor, vector).unwrap();
            assert!(menu.is_empty(), "witness for {actor} has menu {menu:?}");
        }
        // completeness: an empty menu anywhere implies the actor is reported
        let mut uncovered_actors = BTreeSet::new();
        for v in gamemc::enumerate_attribute_vectors(&spec, 100_000).unwrap() {
            for actor in &spec.actors {
                if gamemc::admissible_actions(&spec, actor, &v)
                    .unwrap()
                    .is_empty()
                {
                    uncovered_actors.insert(actor.clone());
                }
            }
        }
        let reported: BTreeSet<String> = coverage.iter().map(|(a, _)| (*a).clone()).collect();
        assert_eq!(uncovered_actors, reported);
        if !reported.is_empty() {
            broken_seen += 1;
        }
    }
    assert!(broken_seen >= 5, "mutation should break coverage sometimes");
}

#[test]
fn build_matches_naive_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut checked = 0;
    while checked < 30 {
        let spec = random_spec(&mut rng);
        let Ok(graph) = build_kripke(
            &spec,
            &BuildConfig {
                max_states: 500,
                ..BuildConfig::default()
            },
        ) else {
            continue;
        };
        checked += 1;

        // naive BFS over the brute-force joint enumerator
        let mut queue: Vec<Vec<i64>> = spec.initial_vectors(1 << 20).unwrap();
        let mut seen: BTreeSet<Vec<i64>> = queue.iter().cloned().collect();
        let mut naive_edges: BTreeSet<(Vec<i64>, common::CanonicalJoint, Vec<i64>)> =
            BTreeSet::new();
        while let Some(v) = queue.pop() {
            for (joint, next) in naive_successors(&spec, &v) {
                naive_edges.insert((v.clone(), joint, next.clone()));
                if seen.insert(next.clone()) {
                    queue.push(next);
                }
            }
        }

        let built_states: BTreeSet<Vec<i64>> = graph.states.iter().cloned().collect();
        assert_eq!(built_states, seen, "reachable state sets differ");

        let mut built_edges = BTreeSet::new();
        for (s, edges) in graph.transitions.iter().enumerate() {
            let src = graph.states[s].clone();
            for (jid, dst) in edges {
                let joint = &graph.joint_actions[*jid as usize];
                let canon =
                    canonical_successors(&[(joint.clone(), graph.states[dst.idx()].clone())]);
                built_edges.insert((src.clone(), canon[0].0.clone(), canon[0].1.clone()));
            }
        }
        assert_eq!(built_edges, naive_edges, "edge sets differ");
    }
}

#[test]
fn labels_and_closure_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut checked = 0;
    while checked < 30 {
        let spec = random_spec(&mut rng);
        let report = validate_game(&spec, &exhaustive_config());
        assert!(
            report.ok(),
            "generated specs validate: {:?}",
            report.violations
        );
        let Ok(graph) = build_kripke(
            &spec,
            &BuildConfig {
                max_states: 2000,
                ..BuildConfig::default()
            },
        ) else {
            continue;
        };
        checked += 1;

        // totality
        for (s, edges) in graph.transitions.iter().enumerate() {
            assert!(!edges.is_empty(), "state {s} has no outgoing transition");
        }
        // closure: every state is in-domain (RANGE exhaustiveness)
        for v in &graph.states {
            assert!(spec.in_domain(v));
        }
        // label soundness on up to 100 random reachable states
        for _ in 0..100 {
            let s = rng.gen_range(0..graph.state_count());
            let v = &graph.states[s];
            for (pi, prop) in spec.propositions.iter().enumerate() {
                let env = Env {
                    attrs: v,
                    params: &spec.param_values,
                    ..Env::default()
                };
                let truth = eval(&prop.predicate, &env).unwrap().as_bool().unwrap();
                assert_eq!(graph.labels[pi].contains(s), truth);
            }
        }
        // successor closure: successors of reachable states are reachable
        for v in &graph.states {
            for (_, next) in gamemc::successors(&spec, v).unwrap() {
                assert!(graph.state_id(&next).is_some());
            }
        }
    }
}

#[test]
fn ef_monotone_under_strengthening() {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut checked = 0;
    while checked < 40 {
        let spec = random_spec(&mut rng);
        let Ok(graph) = build_kripke(
            &spec,
            &BuildConfig {
                max_states: 500,
                ..BuildConfig::default()
            },
        ) else {
            continue;
        };
        checked += 1;
        let psi = common::random_formula(&mut rng, &graph.prop_names, 2);
        let chi = common::random_formula(&mut rng, &graph.prop_names, 2);
        // phi = psi & chi implies psi everywhere, so Sat(EF phi) <= Sat(EF psi)
        let phi = CtlFormula::And(Box::new(psi.clone()), Box::new(chi));
        let ef_phi = sat_set(&graph, &CtlFormula::Ef(Box::new(phi)));
        let ef_psi = sat_set(&graph, &CtlFormula::Ef(Box::new(psi)));
        assert!(ef_phi.is_subset_of(&ef_psi));
    }
}

#[test]
fn freezing_inert_attribute_projects_reachable_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let mut checked = 0;
    while checked < 25 {
        let mut spec = random_spec(&mut rng);
        // append an attribute no action or collision writes: genuinely inert
        let inert_lo = rng.gen_range(-1..=1);
        spec.attributes.push(AttributeDecl {
            name: "inert".to_string(),
            lo: inert_lo,
            hi: inert_lo + rng.gen_range(1..=2),
            owner: spec.actors[0].clone(),
        });
        let gamemc::game::InitialStates::Vectors(vs) = &mut spec.initial else {
            unreachable!()
        };
        for v in vs.iter_mut() {
            v.push(inert_lo);
        }
        spec.finalize().unwrap();
        let inert_slot = spec.attr_index("inert").unwrap();

        let Ok(full_graph) = build_kripke(
            &spec,
            &BuildConfig {
                max_states: 2000,
                ..BuildConfig::default()
            },
        ) else {
            continue;
        };
        checked += 1;

        let reduced = apply_reduction(
            &spec,
            &ReductionSpec {
                freeze: vec![("inert".to_string(), inert_lo)],
                ..Default::default()
            },
        )
        .unwrap();
        let reduced_graph = build_kripke(&reduced, &BuildConfig::default()).unwrap();

        // the inert attribute never changes, so projecting the unreduced
        // reachable states onto the surviving attributes must yield exactly
        // the reduced reachable states
        let projected: BTreeSet<Vec<i64>> = full_graph
            .states
            .iter()
            .map(|v| {
                let mut p = v.clone();
                p.remove(inert_slot);
                p
            })
            .collect();
        let reduced_states: BTreeSet<Vec<i64>> = reduced_graph.states.iter().cloned().collect();
        assert_eq!(projected, reduced_states);
    }
}

#[test]
fn round_trip_bundled_models() {
    for name in [
        "penguin_full.yaml",
        "penguin_reduced.yaml",
        "stay_only.yaml",
    ] {
        let path = common::models_dir().join(name);
        let spec = gamemc::load_game_spec(&path).unwrap();
        let text = gamemc::serialize_game_spec(&spec);
        let again = gamemc::parse_game_spec(&text).unwrap();
        assert_eq!(spec, again, "round-trip failed for {name}");
    }
}

#[test]
fn projection_soundness_after_penguin_reduction() {
    let dir = common::models_dir();
    let full = gamemc::load_game_spec(dir.join("penguin_full.yaml")).unwrap();
    let r = gamemc::load_reduction(dir.join("penguin_reduction.yaml")).unwrap();
    let reduced = apply_reduction(&full, &r).unwrap();
    let surviving: BTreeSet<String> = reduced
        .attributes
        .iter()
        .map(|a| a.name.clone())
        .chain(reduced.parameters.iter().map(|p| p.name.clone()))
        .collect();
    let scan = |e: &gamemc::Expr, ctx: &str| {
        let mut names = BTreeSet::new();
        e.collect_names(&mut names);
        for n in names {
            assert!(surviving.contains(&n), "{ctx} references dropped `{n}`");
        }
    };
    for a in &reduced.actions {
        let choice_names: BTreeSet<String> = a.choices.iter().map(|c| c.name.clone()).collect();
        let mut names = BTreeSet::new();
        a.guard.collect_names(&mut names);
        for w in &a.writes {
            w.expr.collect_names(&mut names);
        }
        for n in names {
            assert!(
                surviving.contains(&n) || choice_names.contains(&n),
                "action {} references dropped `{n}`",
                a.name
            );
        }
    }
    for c in &reduced.collisions {
        scan(&c.guard, &format!("collision {}", c.name));
        for w in &c.writes {
            scan(&w.expr, &format!("collision {} write", c.name));
        }
    }
    for p in &reduced.propositions {
        scan(&p.predicate, &format!("proposition {}", p.name));
    }
}

#[test]
fn validated_specs_build_without_runtime_guards_firing() {
    // RANGE exhaustiveness implies the runtime range guard never fires
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    for _ in 0..40 {
        let spec = random_spec(&mut rng);
        let report = validate_game(&spec, &exhaustive_config());
        assert!(report.ok());
        match build_kripke(
            &spec,
            &BuildConfig {
                max_states: 5000,
                ..BuildConfig::default()
            },
        ) {
            Ok(_) => {}
            Err(gamemc::BuildError::StateCapExceeded { .. }) => {}
            Err(other) => panic!("unexpected build failure: {other}"),
        }
    }
}

#[test]
fn graph_dump_is_stable_and_ordered() {
    let spec = gamemc::load_game_spec(common::models_dir().join("stay_only.yaml")).unwrap();
    let graph = build_kripke(&spec, &BuildConfig::default()).unwrap();
    let mut a = Vec::new();
    gamemc::kripke::write_graph_dump(&graph, &spec, &mut a).unwrap();
    let mut b = Vec::new();
    gamemc::kripke::write_graph_dump(&graph, &spec, &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# states\n0\t0\n# transitions\n0\t0\tStay\n"));
}

// ---------------------------------------------------------------------------
// Bundled-model spot checks
// ---------------------------------------------------------------------------

#[test]
fn penguin_domain_product_matches_one_line_oracle() {
    let spec = gamemc::load_game_spec(common::models_dir().join("penguin_reduced.yaml")).unwrap();
    // independent oracle: multiply the domain sizes directly
    let oracle: u128 = spec
        .attributes
        .iter()
        .map(|a| (a.hi - a.lo + 1) as u128)
        .product();
    assert_eq!(spec.domain_product(), Some(oracle));
    let counted = gamemc::enumerate_attribute_vectors(&spec, oracle)
        .unwrap()
        .count() as u128;
    assert_eq!(counted, oracle);
}

#[test]
fn dead_penguin_has_exactly_the_dead_action() {
    let spec = gamemc::load_game_spec(common::models_dir().join("penguin_reduced.yaml")).unwrap();
    let mut v = spec.initial_vectors(1 << 20).unwrap()[0].clone();
    v[spec.attr_index("pg1_dead").unwrap()] = 1;
    let menu = gamemc::admissible_actions(&spec, "pg1", &v).unwrap();
    assert_eq!(menu.len(), 1);
    assert_eq!(spec.actions[menu[0].action].name, "DeadOne");
    assert!(menu[0].choices.is_empty());
}

#[test]
fn penguin_full_initial_successors_match_oracle() {
    // exercises shared-action unification: ThrowOne covers pg1 and sb1
    let spec = gamemc::load_game_spec(common::models_dir().join("penguin_full.yaml")).unwrap();
    let init = spec.initial_vectors(1 << 20).unwrap()[0].clone();
    let fast = canonical_successors(&gamemc::successors(&spec, &init).unwrap());
    let mut slow = naive_successors(&spec, &init);
    slow.sort();
    assert_eq!(fast, slow);
    // the throw is one of the options and occupies both actors at once
    let throw_idx = spec
        .actions
        .iter()
        .position(|a| a.name == "ThrowOne")
        .unwrap();
    assert!(fast
        .iter()
        .any(|(joint, _)| joint.iter().any(|(a, _)| *a == throw_idx)));
}

#[test]
fn penguin_reduced_reachable_matches_naive_bfs() {
    let spec = gamemc::load_game_spec(common::models_dir().join("penguin_reduced.yaml")).unwrap();
    let graph = build_kripke(&spec, &BuildConfig::default()).unwrap();

    let mut queue: Vec<Vec<i64>> = spec.initial_vectors(1 << 20).unwrap();
    let mut seen: BTreeSet<Vec<i64>> = queue.iter().cloned().collect();
    while let Some(v) = queue.pop() {
        for (_, next) in naive_successors(&spec, &v) {
            if seen.insert(next.clone()) {
                queue.push(next);
            }
        }
    }
    assert_eq!(graph.state_count(), seen.len());
    let built: BTreeSet<Vec<i64>> = graph.states.iter().cloned().collect();
    assert_eq!(built, seen);
}

#[test]
fn stats_are_stable_across_rebuilds() {
    let spec = gamemc::load_game_spec(common::models_dir().join("penguin_reduced.yaml")).unwrap();
    let a = gamemc::stats(&build_kripke(&spec, &BuildConfig::default()).unwrap());
    let b = gamemc::stats(&build_kripke(&spec, &BuildConfig::default()).unwrap());
    assert_eq!(a.states, b.states);
    assert_eq!(a.transitions, b.transitions);
    assert_eq!(a.max_out_degree, b.max_out_degree);
    assert_eq!(a.proposition_counts, b.proposition_counts);
}

#[test]
fn reduction_report_flags_the_uncountable_side() {
    let dir = common::models_dir();
    let full = gamemc::load_game_spec(dir.join("penguin_full.yaml")).unwrap();
    let r = gamemc::load_reduction(dir.join("penguin_reduction.yaml")).unwrap();
    let reduced = apply_reduction(&full, &r).unwrap();
    let report = gamemc::reduction_report(&full, &reduced, &gamemc::reducer::ReportCaps::default());
    // the unreduced model echoes the state-explosion situation: its domain
    // product is beyond the enumeration cap
    assert!(report.before_over_cap);
    assert!(!report.after_over_cap);
    assert!(report.product_after.unwrap() < report.product_before.unwrap());
    assert_eq!(report.reachable_after, Some(111));
}

#[test]
fn codec_bijection_on_random_vectors() {
    let spec = gamemc::load_game_spec(common::models_dir().join("penguin_full.yaml")).unwrap();
    let codec = gamemc::kripke::VectorCodec::new(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    for _ in 0..1000 {
        let v = common::random_vector(&mut rng, &spec);
        assert_eq!(codec.decode(codec.encode(&v)), v);
    }
}
