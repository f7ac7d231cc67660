//! SMV-dialect source generation for an external symbolic checker.
//!
//! Two paths produce text:
//!
//! - [`emit_module`] compiles a spec directly into a self-contained module
//!   with a relational TRANS encoding: one disjunct per static joint-action
//!   pattern (actions whose actor sets partition the actor set), each the
//!   conjunction of per-action guard+effect disjunctions over choice
//!   valuations, first-applicable collision-operator `case` chains, and
//!   explicit `next(a) = a` frame conditions;
//! - [`compile_with_template`] renders an `@tag@` template against
//!   [`generate_bindings`] plus the spec's defaults and appends a test-case
//!   block verbatim.
//!
//! Output is byte-deterministic for identical inputs. The emitted subset is
//! documented in `docs/formats.md`; `div`/`mod` are rendered with a
//! Euclidean adjustment for negative operands (`mod` assumes a positive
//! divisor).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::ctl::CtlFormula;
use crate::expr::{BinOp, Expr, Slot, UnaryOp};
use crate::game::{ActionDecl, GameSpec, InitialStates};
use crate::spec_io::TestCaseDocument;
use crate::template::{render_template, scan_tags, DefaultsTable, TemplateDocument};

#[derive(Debug, Clone)]
pub struct SmvUnit {
    pub text: String,
    /// Generated tag bindings that were available during rendering.
    pub bindings: BTreeMap<String, String>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SmvError {
    #[error("generated tag `{0}` collides with an earlier tag")]
    NameCollision(String),
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
}

// ---------------------------------------------------------------------------
// Expression rendering
// ---------------------------------------------------------------------------

/// How attribute references render inside a TRANS disjunct.
#[derive(Clone, Copy)]
enum AttrMode<'a> {
    /// Current-state reference (guards, INIT, DEFINE).
    Current,
    /// Collision rewriting: attributes written by the pattern's actions read
    /// the post state `next(a)`; everything else reads the pre state, and
    /// `pre(a)` always reads the pre state.
    CollisionView(&'a BTreeSet<u32>),
}

fn render_expr(e: &Expr, spec: &GameSpec, mode: AttrMode) -> Result<String, SmvError> {
    Ok(match e {
        Expr::Int(v) => v.to_string(),
        Expr::Bool(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
        Expr::Var { name, slot } => match (slot, mode) {
            (Slot::Choice(_), _) => {
                return Err(SmvError::UnsupportedConstruct(format!(
                    "unsubstituted choice variable `{name}`"
                )))
            }
            (Slot::Attr(i), AttrMode::CollisionView(written)) if written.contains(i) => {
                format!("next({name})")
            }
            _ => name.clone(),
        },
        Expr::Pre { name, .. } => name.clone(),
        Expr::Unary(UnaryOp::Neg, a) => format!("-{}", atom(a, spec, mode)?),
        Expr::Unary(UnaryOp::Not, a) => format!("!{}", atom(a, spec, mode)?),
        Expr::Unary(UnaryOp::Abs, a) => {
            let x = render_expr(a, spec, mode)?;
            format!("(case {x} >= 0 : {x}; TRUE : -({x}); esac)")
        }
        Expr::Binary(op, a, b) => {
            let l = render_expr(a, spec, mode)?;
            let r = render_expr(b, spec, mode)?;
            match op {
                BinOp::Min => format!("min({l}, {r})"),
                BinOp::Max => format!("max({l}, {r})"),
                BinOp::Div => format!("(({l}) / ({r}))"),
                // SMV mod truncates toward zero; adjust to Euclidean
                BinOp::Mod => format!("(((({l}) mod ({r})) + ({r})) mod ({r}))"),
                _ => {
                    let sym = match op {
                        BinOp::Add => "+",
                        BinOp::Sub => "-",
                        BinOp::Mul => "*",
                        BinOp::Lt => "<",
                        BinOp::Le => "<=",
                        BinOp::Eq => "=",
                        BinOp::Ne => "!=",
                        BinOp::Ge => ">=",
                        BinOp::Gt => ">",
                        BinOp::And => "&",
                        BinOp::Or => "|",
                        BinOp::Implies => "->",
                        _ => unreachable!(),
                    };
                    format!("({l} {sym} {r})")
                }
            }
        }
        Expr::Ite(c, t, f) => {
            let c = render_expr(c, spec, mode)?;
            let t = render_expr(t, spec, mode)?;
            let f = render_expr(f, spec, mode)?;
            format!("(case {c} : {t}; TRUE : {f}; esac)")
        }
        Expr::Clamp(x, lo, hi) => {
            let x = render_expr(x, spec, mode)?;
            let lo = render_expr(lo, spec, mode)?;
            let hi = render_expr(hi, spec, mode)?;
            format!("min(max({x}, {lo}), {hi})")
        }
    })
}

fn atom(e: &Expr, spec: &GameSpec, mode: AttrMode) -> Result<String, SmvError> {
    let text = render_expr(e, spec, mode)?;
    let atomic = matches!(
        e,
        Expr::Int(_) | Expr::Bool(_) | Expr::Var { .. } | Expr::Pre { .. }
    );
    Ok(if atomic || text.starts_with('(') {
        text
    } else {
        format!("({text})")
    })
}

// ---------------------------------------------------------------------------
// Bindings
// ---------------------------------------------------------------------------

fn action_tag(action: &ActionDecl, suffix: &str) -> String {
    format!("{}_{suffix}", action.name.to_ascii_lowercase())
}

/// Substitutes one choice valuation into guard or write expression.
fn instantiate(e: &Expr, action: &ActionDecl, valuation: &[i64]) -> Expr {
    let mut out = e.clone();
    for (c, v) in action.choices.iter().zip(valuation) {
        out = out.subst_name(&c.name, *v);
    }
    out.fold()
}

/// Per-action guard enabledness (disjunction over choice valuations).
fn guard_text(spec: &GameSpec, action: &ActionDecl) -> Result<String, SmvError> {
    let mut parts = Vec::new();
    for valuation in action.valuations() {
        parts.push(render_expr(
            &instantiate(&action.guard, action, &valuation),
            spec,
            AttrMode::Current,
        )?);
    }
    Ok(if parts.len() == 1 {
        parts.remove(0)
    } else {
        parts.join(" | ")
    })
}

/// Per-action effect: disjunction over choice valuations of `next(w) = e`
/// conjunctions, with the choice constants folded in.
fn effect_text(spec: &GameSpec, action: &ActionDecl) -> Result<String, SmvError> {
    let mut disjuncts = Vec::new();
    for valuation in action.valuations() {
        let mut conj = Vec::new();
        for w in &action.writes {
            let rhs = render_expr(
                &instantiate(&w.expr, action, &valuation),
                spec,
                AttrMode::Current,
            )?;
            conj.push(format!("next({}) = {rhs}", w.target));
        }
        disjuncts.push(conj.join(" & "));
    }
    Ok(if disjuncts.len() == 1 {
        disjuncts.remove(0)
    } else {
        disjuncts
            .iter()
            .map(|d| format!("({d})"))
            .collect::<Vec<_>>()
            .join(" | ")
    })
}

/// Tag bindings for the template pipeline: `<action>_guard` and
/// `<action>_effect` per action (lowercased action name), the literal value
/// per parameter, and the predicate per proposition.
pub fn generate_bindings(spec: &GameSpec) -> Result<BTreeMap<String, String>, SmvError> {
    let mut out = BTreeMap::new();
    let mut insert = |tag: String, text: String| -> Result<(), SmvError> {
        if out.insert(tag.clone(), text).is_some() {
            return Err(SmvError::NameCollision(tag));
        }
        Ok(())
    };
    for action in &spec.actions {
        insert(action_tag(action, "guard"), guard_text(spec, action)?)?;
        insert(action_tag(action, "effect"), effect_text(spec, action)?)?;
    }
    for p in &spec.parameters {
        insert(p.name.clone(), p.value.to_string())?;
    }
    for p in &spec.propositions {
        insert(
            p.name.clone(),
            render_expr(&p.predicate, spec, AttrMode::Current)?,
        )?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Direct module emission
// ---------------------------------------------------------------------------

/// Static joint-action patterns: selections of actions whose actor sets
/// partition the actor set, in declaration order.
fn action_patterns(spec: &GameSpec) -> Vec<Vec<usize>> {
    fn recurse(
        spec: &GameSpec,
        actor: usize,
        covered: &mut Vec<bool>,
        picks: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if actor == spec.actors.len() {
            out.push(picks.clone());
            return;
        }
        if covered[actor] {
            recurse(spec, actor + 1, covered, picks, out);
            return;
        }
        for (idx, action) in spec.actions.iter().enumerate() {
            if !action.actor_ids.contains(&actor) || action.actor_ids.iter().any(|a| covered[*a]) {
                continue;
            }
            for &a in &action.actor_ids {
                covered[a] = true;
            }
            picks.push(idx);
            recurse(spec, actor + 1, covered, picks, out);
            picks.pop();
            for &a in &action.actor_ids {
                covered[a] = false;
            }
        }
    }
    let mut out = Vec::new();
    recurse(
        spec,
        0,
        &mut vec![false; spec.actors.len()],
        &mut Vec::new(),
        &mut out,
    );
    out
}

/// One TRANS disjunct for a pattern: per-action `(guard & effect)` choice
/// disjunctions, first-applicable collision `case` chains for uncovered
/// attributes, and `next(a) = a` frames.
fn pattern_text(spec: &GameSpec, pattern: &[usize]) -> Result<String, SmvError> {
    let mut parts = Vec::new();
    let mut written: BTreeSet<u32> = BTreeSet::new();
    for &ai in pattern {
        let action = &spec.actions[ai];
        written.extend(action.write_slots());
        let mut steps = Vec::new();
        for valuation in action.valuations() {
            let guard = render_expr(
                &instantiate(&action.guard, action, &valuation),
                spec,
                AttrMode::Current,
            )?;
            // a literal TRUE guard adds nothing to the conjunction
            let mut conj = if guard == "TRUE" { vec![] } else { vec![guard] };
            for w in &action.writes {
                let rhs = render_expr(
                    &instantiate(&w.expr, action, &valuation),
                    spec,
                    AttrMode::Current,
                )?;
                conj.push(format!("next({}) = {rhs}", w.target));
            }
            steps.push(format!("({})", conj.join(" & ")));
        }
        parts.push(if steps.len() == 1 {
            steps.remove(0)
        } else {
            format!("({})", steps.join(" | "))
        });
    }

    let view = AttrMode::CollisionView(&written);
    for (slot, attr) in spec.attributes.iter().enumerate() {
        let slot = slot as u32;
        if written.contains(&slot) {
            continue;
        }
        let writers: Vec<(&crate::game::CollisionDecl, &crate::game::WriteDecl)> = spec
            .collisions
            .iter()
            .filter_map(|c| {
                c.writes
                    .iter()
                    .find(|w| w.target_slot == slot)
                    .map(|w| (c, w))
            })
            .collect();
        if writers.is_empty() {
            parts.push(format!("next({0}) = {0}", attr.name));
            continue;
        }
        let mut arms = Vec::new();
        let mut always = None;
        for (coll, w) in writers {
            let guard = render_expr(&coll.guard, spec, view)?;
            let rhs = render_expr(&w.expr, spec, view)?;
            if guard == "TRUE" {
                // unconditional writer: later arms are unreachable
                always = Some(rhs);
                break;
            }
            arms.push(format!("{guard} : {rhs};"));
        }
        parts.push(match always {
            Some(rhs) if arms.is_empty() => format!("next({}) = {rhs}", attr.name),
            Some(rhs) => format!(
                "next({0}) = (case {1} TRUE : {rhs}; esac)",
                attr.name,
                arms.join(" ")
            ),
            None => format!(
                "next({0}) = (case {1} TRUE : {0}; esac)",
                attr.name,
                arms.join(" ")
            ),
        });
    }

    Ok(parts.join(" &\n     "))
}

/// Emits a self-contained SMV module: VAR ranges, DEFINE entries for
/// parameters and propositions, INIT, the joint-action TRANS relation, and
/// one CTLSPEC per property.
pub fn emit_module(
    spec: &GameSpec,
    properties: &[(String, CtlFormula)],
) -> Result<SmvUnit, SmvError> {
    let mut text = String::new();
    let _ = writeln!(text, "MODULE main");

    if !spec.attributes.is_empty() {
        let _ = writeln!(text, "VAR");
        for a in &spec.attributes {
            let _ = writeln!(text, "  {} : {}..{};", a.name, a.lo, a.hi);
        }
    }

    if !spec.parameters.is_empty() || !spec.propositions.is_empty() {
        let _ = writeln!(text, "DEFINE");
        for p in &spec.parameters {
            let _ = writeln!(text, "  {} := {};", p.name, p.value);
        }
        for p in &spec.propositions {
            let _ = writeln!(
                text,
                "  {} := {};",
                p.name,
                render_expr(&p.predicate, spec, AttrMode::Current)?
            );
        }
    }

    let _ = writeln!(text, "INIT");
    match &spec.initial {
        InitialStates::Vectors(vs) => {
            let disjuncts: Vec<String> = vs
                .iter()
                .map(|v| {
                    let conj: Vec<String> = spec
                        .attributes
                        .iter()
                        .zip(v)
                        .map(|(a, x)| format!("{} = {}", a.name, x))
                        .collect();
                    format!("({})", conj.join(" & "))
                })
                .collect();
            let _ = writeln!(text, "  {};", disjuncts.join(" |\n  "));
        }
        InitialStates::Constraints(cs) => {
            let conj: Vec<String> = cs
                .iter()
                .map(|c| render_expr(c, spec, AttrMode::Current).map(|t| format!("({t})")))
                .collect::<Result<_, _>>()?;
            let _ = writeln!(text, "  {};", conj.join(" & "));
        }
    }

    let patterns = action_patterns(spec);
    let _ = writeln!(text, "TRANS");
    let disjuncts: Vec<String> = patterns
        .iter()
        .map(|p| pattern_text(spec, p).map(|t| format!("  ({t})")))
        .collect::<Result<_, _>>()?;
    let _ = writeln!(text, "{};", disjuncts.join(" |\n"));

    for (name, formula) in properties {
        let _ = writeln!(text, "-- property {name}");
        let _ = writeln!(text, "CTLSPEC {formula};");
    }

    Ok(SmvUnit {
        text,
        bindings: BTreeMap::new(),
        diagnostics: vec![],
    })
}

// ---------------------------------------------------------------------------
// Template pipeline
// ---------------------------------------------------------------------------

/// Renders `t` with generated bindings (falling back to the spec's defaults)
/// and appends the test-case block verbatim.
pub fn compile_with_template(
    t: &TemplateDocument,
    spec: &GameSpec,
    testcase: &TestCaseDocument,
) -> Result<SmvUnit, SmvError> {
    let bindings = generate_bindings(spec)?;
    let defaults: DefaultsTable = spec
        .defaults
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let rendered = render_template(t, &bindings, &defaults)?;
    let mut text = rendered;
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str(&testcase.text);

    let mut diagnostics = Vec::new();
    if let Ok(tags) = scan_tags(&TemplateDocument::new(text.clone())) {
        if !tags.is_empty() {
            diagnostics.push(format!(
                "replacement text reintroduced {} tag marker(s); output is not tag-free",
                tags.len()
            ));
        }
    }

    Ok(SmvUnit {
        text,
        bindings,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctl::parse_ctl;
    use crate::spec_io::parse_game_spec;

    fn stay_only() -> GameSpec {
        parse_game_spec(
            "\
actors: [solo]
attributes:
  - name: x
    range: [0, 1]
    owner: solo
actions:
  - name: Stay
    actors: [solo]
    guard: \"true\"
    writes:
      x: \"x\"
initial:
  vectors:
    - {x: 0}
",
        )
        .unwrap()
    }

    fn mover() -> GameSpec {
        parse_game_spec(
            "\
actors: [solo]
parameters:
  pg_velocity: 1
attributes:
  - name: x
    range: [0, 8]
    owner: solo
actions:
  - name: Move
    actors: [solo]
    choices:
      - name: dx
        range: [-1, 1]
    guard: \"x + dx >= 0 and x + dx <= 8\"
    writes:
      x: \"x + dx\"
initial:
  vectors:
    - {x: 0}
propositions:
  - name: at_end
    predicate: \"x = 8\"
",
        )
        .unwrap()
    }

    #[test]
    fn stay_effect_binding() {
        let bindings = generate_bindings(&stay_only()).unwrap();
        assert_eq!(bindings["stay_effect"], "next(x) = x");
        assert_eq!(bindings["stay_guard"], "TRUE");
    }

    #[test]
    fn move_effect_enumerates_choices_with_folded_constants() {
        // hand expansion of dx in {-1, 0, 1} with x + -1 folded to x - 1
        let bindings = generate_bindings(&mover()).unwrap();
        assert_eq!(
            bindings["move_effect"],
            "(next(x) = (x - 1)) | (next(x) = x) | (next(x) = (x + 1))"
        );
    }

    #[test]
    fn parameter_binding_is_literal() {
        let bindings = generate_bindings(&mover()).unwrap();
        assert_eq!(bindings["pg_velocity"], "1");
        assert_eq!(bindings["at_end"], "(x = 8)");
    }

    #[test]
    fn stay_only_module_shape() {
        let unit = emit_module(&stay_only(), &[]).unwrap();
        assert!(unit.text.starts_with("MODULE main\n"));
        assert!(unit.text.contains("x : 0..1;"));
        assert!(unit.text.contains("INIT\n  (x = 0);"));
        assert!(unit.text.contains("next(x) = x"));
        assert!(!unit.text.contains("CTLSPEC"));
    }

    #[test]
    fn ctlspec_rendered_from_formula() {
        let mut spec = stay_only();
        spec.propositions = vec![crate::game::PropositionDecl {
            name: "dead_two".to_string(),
            predicate: crate::expr::parse_expression("x = 1").unwrap(),
        }];
        spec.finalize().unwrap();
        let f = parse_ctl("AG !dead_two", &["dead_two".to_string()]).unwrap();
        let unit = emit_module(&spec, &[("p2".to_string(), f)]).unwrap();
        assert!(unit.text.contains("CTLSPEC AG !dead_two;"), "{}", unit.text);
    }

    #[test]
    fn emission_is_deterministic() {
        let spec = mover();
        let f = parse_ctl("EF at_end", &["at_end".to_string()]).unwrap();
        let a = emit_module(&spec, &[("p".to_string(), f.clone())]).unwrap();
        let b = emit_module(&spec, &[("p".to_string(), f)]).unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn template_compile_renders_trans_line() {
        let spec = stay_only();
        let t = TemplateDocument::new("MODULE main\nTRANS @stay_effect@;\n");
        let tc = TestCaseDocument {
            text: "-- test case\n".to_string(),
        };
        let unit = compile_with_template(&t, &spec, &tc).unwrap();
        assert!(unit.text.contains("TRANS next(x) = x;"));
        assert!(unit.text.ends_with("-- test case\n"));
        assert!(unit.diagnostics.is_empty());
    }

    #[test]
    fn template_default_false_disables_action() {
        let mut spec = stay_only();
        spec.defaults = vec![("flash_guard".to_string(), "FALSE".to_string())];
        spec.finalize().unwrap();
        let t = TemplateDocument::new("TRANS @flash_guard@ & @stay_effect@;\n");
        let tc = TestCaseDocument {
            text: "-- tc\n".to_string(),
        };
        let unit = compile_with_template(&t, &spec, &tc).unwrap();
        assert!(unit.text.contains("TRANS FALSE & next(x) = x;"));
    }

    #[test]
    fn unresolved_tag_propagates() {
        let spec = stay_only();
        let t = TemplateDocument::new("@nope@");
        let tc = TestCaseDocument {
            text: "x".to_string(),
        };
        assert!(matches!(
            compile_with_template(&t, &spec, &tc),
            Err(SmvError::Template(
                crate::template::TemplateError::UnresolvedTags(_)
            ))
        ));
    }

    #[test]
    fn collision_case_chain_in_trans() {
        let spec = parse_game_spec(
            "\
actors: [solo]
attributes:
  - name: x
    range: [0, 3]
    owner: solo
  - name: flag
    range: [0, 1]
    owner: solo
actions:
  - name: Inc
    actors: [solo]
    guard: \"x < 3\"
    writes:
      x: \"x + 1\"
  - name: Stay
    actors: [solo]
    guard: \"true\"
    writes:
      x: \"x\"
collisions:
  - name: mark
    guard: \"x != pre(x)\"
    writes:
      flag: \"1\"
initial:
  vectors:
    - {x: 0, flag: 0}
",
        )
        .unwrap();
        let unit = emit_module(&spec, &[]).unwrap();
        // collision view: x was written by Inc, so it reads next(x); pre(x)
        // reads the unprimed variable; flag defaults to itself
        assert!(
            unit.text
                .contains("next(flag) = (case (next(x) != x) : 1; TRUE : flag; esac)"),
            "{}",
            unit.text
        );
    }
}
