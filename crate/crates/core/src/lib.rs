//! Verification toolkit for multiplayer-game logic.
//!
//! A game is described declaratively: actors, bounded integer attributes,
//! constant parameters, guarded actions (possibly shared between actors,
//! possibly carrying finite choice variables), collision operators that fix
//! up attributes untouched by the chosen actions, and named propositions.
//! From that description the toolkit
//!
//! - validates well-formedness (coverage, write conflicts, range safety),
//! - builds the reachable explicit-state Kripke structure,
//! - checks CTL properties by backward fixpoint labeling, with linear
//!   witness/counterexample traces,
//! - reduces models by attribute freezing and action removal, and
//! - emits SMV-dialect source text for an external symbolic checker,
//!   either directly or through an `@tag@` template pipeline.

pub mod bitset;
pub mod ctl;
pub mod expr;
pub mod game;
pub mod kripke;
pub mod naive;
pub mod reducer;
pub mod smv;
pub mod spec_io;
pub mod template;

pub use ctl::{check, parse_ctl, sat_set, CtlError, CtlFormula, Trace, TraceStep, Verdict};
pub use expr::{eval_expr, parse_expression, Env, EvalError, Expr, ParseError, Value};
pub use game::{
    admissible_actions, enumerate_attribute_vectors, validate_game, ActionDecl, AttributeDecl,
    CollisionDecl, GameError, GameSpec, InitialStates, ParameterDecl, PropositionDecl,
    ValidateConfig, ValidationReport, Violation,
};
pub use kripke::{
    build_kripke, stats, successors, BuildConfig, BuildError, EvolutionError, GraphStats,
    JointAction, KripkeGraph, StateId,
};
pub use naive::{naive_check, OracleError};
pub use reducer::{apply_reduction, reduction_report, ReduceError, ReductionReport, ReductionSpec};
pub use smv::{compile_with_template, emit_module, generate_bindings, SmvError, SmvUnit};
pub use spec_io::{
    load_game_spec, load_properties, load_reduction, load_template, load_testcase, parse_game_spec,
    serialize_game_spec, SpecIoError, TestCaseDocument,
};
pub use template::{render_template, scan_tags, DefaultsTable, TemplateDocument, TemplateError};
