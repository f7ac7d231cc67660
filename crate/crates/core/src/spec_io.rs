//! File formats: the YAML game specification, the YAML reduction file, the
//! line-oriented property file, and the template/test-case text files.
//!
//! The YAML layer is schema-only: every expression is a plain string handed
//! to [`parse_expression`]. Parsing and serialization round-trip: loading a
//! serialized spec yields a structurally identical `GameSpec`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};
use thiserror::Error;

use crate::expr::parse_expression;
use crate::game::{
    ActionDecl, AttributeDecl, ChoiceDecl, CollisionDecl, GameError, GameSpec, InitialStates,
    ParameterDecl, PropositionDecl, Provenance, WriteDecl,
};
use crate::reducer::ReductionSpec;
use crate::template::TemplateDocument;

#[derive(Debug, Error)]
pub enum SpecIoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("YAML error{}: {message}", location.as_ref().map(|(l, c)| format!(" at line {l} column {c}")).unwrap_or_default())]
    Yaml {
        message: String,
        location: Option<(usize, usize)>,
    },
    #[error("malformed expression in {context}: {message}")]
    MalformedExpression { context: String, message: String },
    #[error("{context}: expected an integer, got `{got}`")]
    NotAnInteger { context: String, got: String },
    #[error("initial section must have exactly one of `vectors` or `constraints`")]
    BadInitialSection,
    #[error("initial vector {index} {problem} attribute `{name}`")]
    InitialVectorKey {
        index: usize,
        problem: &'static str,
        name: String,
    },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("test case file is empty: {0}")]
    EmptyTestCase(String),
}

fn yaml_err(e: serde_yaml::Error) -> SpecIoError {
    SpecIoError::Yaml {
        message: e.to_string(),
        location: e.location().map(|l| (l.line(), l.column())),
    }
}

fn read(path: &Path) -> Result<String, SpecIoError> {
    std::fs::read_to_string(path).map_err(|source| SpecIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Raw document schema
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    actors: Vec<String>,
    #[serde(default, skip_serializing_if = "Mapping::is_empty")]
    parameters: Mapping,
    attributes: Vec<RawAttribute>,
    actions: Vec<RawAction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    collisions: Vec<RawCollision>,
    initial: RawInitial,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    propositions: Vec<RawProposition>,
    #[serde(default, skip_serializing_if = "Mapping::is_empty")]
    defaults: Mapping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<RawProvenance>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttribute {
    name: String,
    range: (i64, i64),
    owner: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    name: String,
    actors: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    choices: Vec<RawChoice>,
    guard: String,
    writes: Mapping,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChoice {
    name: String,
    range: (i64, i64),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCollision {
    name: String,
    guard: String,
    writes: Mapping,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vectors: Option<Vec<Mapping>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constraints: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProposition {
    name: String,
    predicate: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProvenance {
    source_digest: String,
    reduction_digest: String,
}

fn value_as_i64(v: &Value, context: &str) -> Result<i64, SpecIoError> {
    v.as_i64().ok_or_else(|| SpecIoError::NotAnInteger {
        context: context.to_string(),
        got: serde_yaml::to_string(v)
            .unwrap_or_default()
            .trim()
            .to_string(),
    })
}

fn key_as_string(v: &Value, context: &str) -> Result<String, SpecIoError> {
    v.as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| SpecIoError::Yaml {
            message: format!("{context}: mapping key must be a string"),
            location: None,
        })
}

fn parse_expr(text: &str, context: &str) -> Result<crate::expr::Expr, SpecIoError> {
    parse_expression(text).map_err(|e| SpecIoError::MalformedExpression {
        context: context.to_string(),
        message: e.to_string(),
    })
}

fn parse_writes(writes: &Mapping, context: &str) -> Result<Vec<WriteDecl>, SpecIoError> {
    let mut out = Vec::with_capacity(writes.len());
    for (k, v) in writes {
        let target = key_as_string(k, context)?;
        let text = v.as_str().ok_or_else(|| SpecIoError::Yaml {
            message: format!("{context}: write of {target} must be an expression string"),
            location: None,
        })?;
        let expr = parse_expr(text, &format!("{context}, write of {target}"))?;
        out.push(WriteDecl {
            target,
            target_slot: 0,
            expr,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Game spec
// ---------------------------------------------------------------------------

/// Parses a YAML game specification. The result is resolved and structurally
/// checked, but `validate_game` is not run here so callers can distinguish
/// parse errors from semantic violations.
pub fn parse_game_spec(text: &str) -> Result<GameSpec, SpecIoError> {
    let raw: RawSpec = serde_yaml::from_str(text).map_err(yaml_err)?;

    let attributes: Vec<AttributeDecl> = raw
        .attributes
        .iter()
        .map(|a| AttributeDecl {
            name: a.name.clone(),
            lo: a.range.0,
            hi: a.range.1,
            owner: a.owner.clone(),
        })
        .collect();

    let mut parameters = Vec::with_capacity(raw.parameters.len());
    for (k, v) in &raw.parameters {
        let name = key_as_string(k, "parameters")?;
        let value = value_as_i64(v, &format!("parameter {name}"))?;
        parameters.push(ParameterDecl { name, value });
    }

    let mut actions = Vec::with_capacity(raw.actions.len());
    for a in &raw.actions {
        let context = format!("action {}", a.name);
        actions.push(ActionDecl {
            name: a.name.clone(),
            actors: a.actors.clone(),
            choices: a
                .choices
                .iter()
                .map(|c| ChoiceDecl {
                    name: c.name.clone(),
                    lo: c.range.0,
                    hi: c.range.1,
                })
                .collect(),
            guard: parse_expr(&a.guard, &format!("guard of {context}"))?,
            writes: parse_writes(&a.writes, &context)?,
            actor_ids: vec![],
        });
    }

    let mut collisions = Vec::with_capacity(raw.collisions.len());
    for c in &raw.collisions {
        let context = format!("collision {}", c.name);
        collisions.push(CollisionDecl {
            name: c.name.clone(),
            guard: parse_expr(&c.guard, &format!("guard of {context}"))?,
            writes: parse_writes(&c.writes, &context)?,
        });
    }

    let initial = match (&raw.initial.vectors, &raw.initial.constraints) {
        (Some(vectors), None) => {
            let mut out = Vec::with_capacity(vectors.len());
            for (index, m) in vectors.iter().enumerate() {
                let mut assigned: Vec<Option<i64>> = vec![None; attributes.len()];
                for (k, v) in m {
                    let name = key_as_string(k, &format!("initial vector {index}"))?;
                    let Some(slot) = attributes.iter().position(|a| a.name == name) else {
                        return Err(SpecIoError::InitialVectorKey {
                            index,
                            problem: "references unknown",
                            name,
                        });
                    };
                    assigned[slot] =
                        Some(value_as_i64(v, &format!("initial vector {index}, {name}"))?);
                }
                let mut vector = Vec::with_capacity(attributes.len());
                for (slot, value) in assigned.into_iter().enumerate() {
                    match value {
                        Some(v) => vector.push(v),
                        None => {
                            return Err(SpecIoError::InitialVectorKey {
                                index,
                                problem: "is missing",
                                name: attributes[slot].name.clone(),
                            })
                        }
                    }
                }
                out.push(vector);
            }
            InitialStates::Vectors(out)
        }
        (None, Some(constraints)) => {
            let mut out = Vec::with_capacity(constraints.len());
            for (i, c) in constraints.iter().enumerate() {
                out.push(parse_expr(c, &format!("initial constraint {i}"))?);
            }
            InitialStates::Constraints(out)
        }
        _ => return Err(SpecIoError::BadInitialSection),
    };

    let mut propositions = Vec::with_capacity(raw.propositions.len());
    for p in &raw.propositions {
        propositions.push(PropositionDecl {
            name: p.name.clone(),
            predicate: parse_expr(&p.predicate, &format!("proposition {}", p.name))?,
        });
    }

    let mut defaults = Vec::with_capacity(raw.defaults.len());
    for (k, v) in &raw.defaults {
        let name = key_as_string(k, "defaults")?;
        // defaults keys are template tags: ASCII letters and underscores
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphabetic() || b == b'_') {
            return Err(SpecIoError::Yaml {
                message: format!("defaults: `{name}` is not a valid tag identifier"),
                location: None,
            });
        }
        let text = v.as_str().ok_or_else(|| SpecIoError::Yaml {
            message: format!("defaults: value of {name} must be a string"),
            location: None,
        })?;
        defaults.push((name, text.to_string()));
    }

    let mut spec = GameSpec {
        actors: raw.actors,
        attributes,
        parameters,
        actions,
        collisions,
        initial,
        propositions,
        defaults,
        provenance: raw.provenance.map(|p| Provenance {
            source_digest: p.source_digest,
            reduction_digest: p.reduction_digest,
        }),
        param_values: vec![],
    };
    spec.finalize()?;
    Ok(spec)
}

/// Loads a game specification file.
pub fn load_game_spec(path: impl AsRef<Path>) -> Result<GameSpec, SpecIoError> {
    parse_game_spec(&read(path.as_ref())?)
}

/// Serializes a `GameSpec` back to its YAML document form.
pub fn serialize_game_spec(spec: &GameSpec) -> String {
    let writes_map = |writes: &[WriteDecl]| -> Mapping {
        writes
            .iter()
            .map(|w| {
                (
                    Value::String(w.target.clone()),
                    Value::String(w.expr.to_string()),
                )
            })
            .collect()
    };
    let raw = RawSpec {
        actors: spec.actors.clone(),
        parameters: spec
            .parameters
            .iter()
            .map(|p| (Value::String(p.name.clone()), Value::from(p.value)))
            .collect(),
        attributes: spec
            .attributes
            .iter()
            .map(|a| RawAttribute {
                name: a.name.clone(),
                range: (a.lo, a.hi),
                owner: a.owner.clone(),
            })
            .collect(),
        actions: spec
            .actions
            .iter()
            .map(|a| RawAction {
                name: a.name.clone(),
                actors: a.actors.clone(),
                choices: a
                    .choices
                    .iter()
                    .map(|c| RawChoice {
                        name: c.name.clone(),
                        range: (c.lo, c.hi),
                    })
                    .collect(),
                guard: a.guard.to_string(),
                writes: writes_map(&a.writes),
            })
            .collect(),
        collisions: spec
            .collisions
            .iter()
            .map(|c| RawCollision {
                name: c.name.clone(),
                guard: c.guard.to_string(),
                writes: writes_map(&c.writes),
            })
            .collect(),
        initial: match &spec.initial {
            InitialStates::Vectors(vs) => RawInitial {
                vectors: Some(
                    vs.iter()
                        .map(|v| {
                            spec.attributes
                                .iter()
                                .zip(v)
                                .map(|(a, x)| (Value::String(a.name.clone()), Value::from(*x)))
                                .collect()
                        })
                        .collect(),
                ),
                constraints: None,
            },
            InitialStates::Constraints(cs) => RawInitial {
                vectors: None,
                constraints: Some(cs.iter().map(|c| c.to_string()).collect()),
            },
        },
        propositions: spec
            .propositions
            .iter()
            .map(|p| RawProposition {
                name: p.name.clone(),
                predicate: p.predicate.to_string(),
            })
            .collect(),
        defaults: spec
            .defaults
            .iter()
            .map(|(k, v)| (Value::String(k.clone()), Value::String(v.clone())))
            .collect(),
        provenance: spec.provenance.as_ref().map(|p| RawProvenance {
            source_digest: p.source_digest.clone(),
            reduction_digest: p.reduction_digest.clone(),
        }),
    };
    serde_yaml::to_string(&raw).expect("spec serialization cannot fail")
}

// ---------------------------------------------------------------------------
// Reduction file
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawReduction {
    #[serde(default, skip_serializing_if = "Mapping::is_empty")]
    freeze: Mapping,
    #[serde(default, skip_serializing_if = "Mapping::is_empty")]
    drop_actions: Mapping,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    drop_collisions: Vec<String>,
}

/// Parses a reduction file (`freeze:` map, `drop_actions:` map,
/// `drop_collisions:` list). Name checking happens in `apply_reduction`.
pub fn parse_reduction(text: &str) -> Result<ReductionSpec, SpecIoError> {
    let raw: RawReduction = serde_yaml::from_str(text).map_err(yaml_err)?;
    let mut freeze = Vec::with_capacity(raw.freeze.len());
    for (k, v) in &raw.freeze {
        let name = key_as_string(k, "freeze")?;
        let value = value_as_i64(v, &format!("freeze of {name}"))?;
        freeze.push((name, value));
    }
    let mut drop_actions = Vec::with_capacity(raw.drop_actions.len());
    for (k, v) in &raw.drop_actions {
        let actor = key_as_string(k, "drop_actions")?;
        let list: Vec<String> = match v {
            Value::Sequence(items) => items
                .iter()
                .map(|i| key_as_string(i, &format!("drop_actions of {actor}")))
                .collect::<Result<_, _>>()?,
            other => {
                return Err(SpecIoError::Yaml {
                    message: format!(
                        "drop_actions of {actor} must be a list, got {}",
                        serde_yaml::to_string(other).unwrap_or_default().trim()
                    ),
                    location: None,
                })
            }
        };
        drop_actions.push((actor, list));
    }
    Ok(ReductionSpec {
        freeze,
        drop_actions,
        drop_collisions: raw.drop_collisions,
    })
}

pub fn load_reduction(path: impl AsRef<Path>) -> Result<ReductionSpec, SpecIoError> {
    parse_reduction(&read(path.as_ref())?)
}

pub fn serialize_reduction(r: &ReductionSpec) -> String {
    let raw = RawReduction {
        freeze: r
            .freeze
            .iter()
            .map(|(k, v)| (Value::String(k.clone()), Value::from(*v)))
            .collect(),
        drop_actions: r
            .drop_actions
            .iter()
            .map(|(actor, list)| {
                (
                    Value::String(actor.clone()),
                    Value::Sequence(list.iter().cloned().map(Value::String).collect()),
                )
            })
            .collect(),
        drop_collisions: r.drop_collisions.clone(),
    };
    serde_yaml::to_string(&raw).expect("reduction serialization cannot fail")
}

// ---------------------------------------------------------------------------
// Property, template, and test-case files
// ---------------------------------------------------------------------------

/// Parses a property file: one `name: formula` per line; `#` comments and
/// blank lines are skipped. Formulas stay unparsed strings here because
/// proposition resolution needs the target spec.
pub fn parse_properties(text: &str) -> Result<Vec<(String, String)>, SpecIoError> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((name, formula)) = line.split_once(':') else {
            return Err(SpecIoError::Yaml {
                message: format!("property line {} lacks a `name:` prefix", lineno + 1),
                location: Some((lineno + 1, 1)),
            });
        };
        let name = name.trim().to_string();
        if !seen.insert(name.clone()) {
            return Err(SpecIoError::Game(GameError::DuplicateName(name)));
        }
        out.push((name, formula.trim().to_string()));
    }
    Ok(out)
}

pub fn load_properties(path: impl AsRef<Path>) -> Result<Vec<(String, String)>, SpecIoError> {
    parse_properties(&read(path.as_ref())?)
}

pub fn load_template(path: impl AsRef<Path>) -> Result<TemplateDocument, SpecIoError> {
    Ok(TemplateDocument::new(read(path.as_ref())?))
}

/// Raw text block appended verbatim after a rendered template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCaseDocument {
    pub text: String,
}

pub fn load_testcase(path: impl AsRef<Path>) -> Result<TestCaseDocument, SpecIoError> {
    let path = path.as_ref();
    let text = read(path)?;
    if text.trim().is_empty() {
        return Err(SpecIoError::EmptyTestCase(path.display().to_string()));
    }
    Ok(TestCaseDocument { text })
}

/// FNV-1a 64-bit content digest, hex-formatted. Used for reduction
/// provenance records.
pub fn digest(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut out = String::with_capacity(16);
    let _ = write!(out, "{hash:016x}");
    out
}
