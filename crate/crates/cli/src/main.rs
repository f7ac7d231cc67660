//! Command-line front end: validate -> check -> reduce -> emit, plus stats
//! and a seeded random-walk simulator.
//!
//! Exit codes are a stable contract:
//! 0 success, 1 property or validation failure, 2 usage/parse error,
//! 3 state-cap exceeded (apply a reduction).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use gamemc::kripke::write_graph_dump;
use gamemc::reducer::ReportCaps;
use gamemc::{
    apply_reduction, build_kripke, check, compile_with_template, emit_module, load_game_spec,
    load_properties, load_reduction, load_template, parse_ctl, reduction_report, stats, successors,
    validate_game, BuildConfig, BuildError, CtlFormula, GameSpec, JointAction, KripkeGraph, Trace,
    ValidateConfig, Verdict,
};

const EXIT_OK: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_STATE_CAP: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gamemc",
    about = "Model checker and code generator for declarative multiplayer-game specifications",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct CommonOpts {
    /// Abort graph construction beyond this many reachable states.
    #[arg(long, default_value_t = 10_000_000)]
    max_states: usize,
    /// Cap on the attribute-domain product for exhaustive enumeration.
    #[arg(long, default_value_t = 100_000_000)]
    max_enum: u128,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Check the operator well-formedness conditions of a game file.
    Validate {
        game: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Build the reachable Kripke structure and check CTL properties.
    Check {
        game: PathBuf,
        /// Property file: one `name: formula` per line.
        #[arg(long)]
        props: PathBuf,
        /// Write witness/counterexample traces to this JSON file.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Apply a reduction file and write the reduced game spec.
    Reduce {
        game: PathBuf,
        #[arg(long)]
        reduction: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also build both models and print a size comparison.
        #[arg(long)]
        report: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compile the game into SMV-dialect source text.
    EmitSmv {
        game: PathBuf,
        /// `@tag@` template file; requires --testcase.
        #[arg(long, requires = "testcase")]
        template: Option<PathBuf>,
        /// Test-case block appended verbatim after the rendered template.
        #[arg(long)]
        testcase: Option<PathBuf>,
        /// Property file rendered as CTLSPEC entries (direct mode only).
        #[arg(long)]
        props: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Print reachable-graph statistics.
    Stats {
        game: PathBuf,
        /// Write the full graph as line-oriented text.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Seeded uniform random walk over successors.
    Simulate {
        game: PathBuf,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { game, common } => cmd_validate(&game, &common),
        Command::Check {
            game,
            props,
            trace_out,
            common,
        } => cmd_check(&game, &props, trace_out.as_deref(), &common),
        Command::Reduce {
            game,
            reduction,
            output,
            report,
            common,
        } => cmd_reduce(&game, &reduction, &output, report, &common),
        Command::EmitSmv {
            game,
            template,
            testcase,
            props,
            output,
            common,
        } => cmd_emit(
            &game,
            template.as_deref(),
            testcase.as_deref(),
            props.as_deref(),
            output.as_deref(),
            &common,
        ),
        Command::Stats {
            game,
            dump_graph,
            common,
        } => cmd_stats(&game, dump_graph.as_deref(), &common),
        Command::Simulate {
            game,
            steps,
            seed,
            common,
        } => cmd_simulate(&game, steps, seed, &common),
    };
    ExitCode::from(code)
}

fn input_err(e: impl std::fmt::Display) -> u8 {
    eprintln!("error: {e}");
    EXIT_INPUT
}

fn check_caps(common: &CommonOpts) -> Result<(), u8> {
    if common.max_states == 0 || common.max_enum == 0 {
        return Err(input_err("caps must be positive"));
    }
    Ok(())
}

fn load(game: &std::path::Path) -> Result<GameSpec, u8> {
    load_game_spec(game).map_err(input_err)
}

fn validate_or_fail(spec: &GameSpec, common: &CommonOpts, quiet_ok: bool) -> Result<(), u8> {
    let report = validate_game(
        spec,
        &ValidateConfig {
            enum_cap: common.max_enum,
            ..ValidateConfig::default()
        },
    );
    for s in &report.skipped {
        eprintln!("warning: {} SKIPPED: {}", s.kind, s.reason);
    }
    if !report.ok() {
        for v in &report.violations {
            eprintln!("{v}");
        }
        return Err(EXIT_FAIL);
    }
    if !quiet_ok {
        eprintln!("validation OK");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ValidateOutput<'a> {
    ok: bool,
    violations: &'a [gamemc::Violation],
    skipped: &'a [gamemc::game::SkippedCheck],
}

fn cmd_validate(game: &std::path::Path, common: &CommonOpts) -> u8 {
    if let Err(code) = check_caps(common) {
        return code;
    }
    let spec = match load(game) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let report = validate_game(
        &spec,
        &ValidateConfig {
            enum_cap: common.max_enum,
            ..ValidateConfig::default()
        },
    );
    match common.format {
        Format::Json => {
            let out = ValidateOutput {
                ok: report.ok(),
                violations: &report.violations,
                skipped: &report.skipped,
            };
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
        }
        Format::Text => {
            for s in &report.skipped {
                println!("{} SKIPPED: {}", s.kind, s.reason);
            }
            for v in &report.violations {
                println!("{v}");
            }
            if report.ok() {
                println!("OK");
            } else {
                println!("{} violation(s)", report.violations.len());
            }
        }
    }
    if report.ok() {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TraceStepOut {
    state: BTreeMap<String, i64>,
    action: Option<String>,
}

#[derive(Serialize)]
struct VerdictOut {
    name: String,
    formula: String,
    holds: bool,
    sat_count: usize,
    trace: Option<Vec<TraceStepOut>>,
}

fn trace_out(spec: &GameSpec, trace: &Trace) -> Vec<TraceStepOut> {
    trace
        .steps
        .iter()
        .map(|step| TraceStepOut {
            state: spec
                .attributes
                .iter()
                .zip(&step.values)
                .map(|(a, v)| (a.name.clone(), *v))
                .collect(),
            action: step.action.as_ref().map(|j| j.label(spec)),
        })
        .collect()
}

fn build_or_exit(spec: &GameSpec, common: &CommonOpts) -> Result<KripkeGraph, u8> {
    match build_kripke(
        spec,
        &BuildConfig {
            max_states: common.max_states,
            enum_cap: common.max_enum,
        },
    ) {
        Ok(g) => Ok(g),
        Err(e @ BuildError::StateCapExceeded { .. }) => {
            eprintln!("error: {e}");
            eprintln!("hint: apply a reduction (`gamemc reduce`) and re-check the reduced model");
            Err(EXIT_STATE_CAP)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(EXIT_FAIL)
        }
    }
}

fn parse_props(
    raw: &[(String, String)],
    names: &[String],
) -> Result<Vec<(String, CtlFormula)>, u8> {
    let mut out = Vec::with_capacity(raw.len());
    for (name, text) in raw {
        match parse_ctl(text, names) {
            Ok(f) => out.push((name.clone(), f)),
            Err(e) => {
                eprintln!("error: property {name}: {e}");
                return Err(EXIT_INPUT);
            }
        }
    }
    Ok(out)
}

fn cmd_check(
    game: &std::path::Path,
    props: &std::path::Path,
    trace_path: Option<&std::path::Path>,
    common: &CommonOpts,
) -> u8 {
    if let Err(code) = check_caps(common) {
        return code;
    }
    let spec = match load(game) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Err(code) = validate_or_fail(&spec, common, true) {
        return code;
    }
    let raw = match load_properties(props) {
        Ok(r) => r,
        Err(e) => return input_err(e),
    };
    let graph = match build_or_exit(&spec, common) {
        Ok(g) => g,
        Err(code) => return code,
    };
    let formulas = match parse_props(&raw, &graph.prop_names) {
        Ok(f) => f,
        Err(code) => return code,
    };

    let verdicts: Vec<(String, Verdict)> = formulas
        .iter()
        .map(|(name, f)| (name.clone(), check(&graph, f)))
        .collect();

    let outputs: Vec<VerdictOut> = verdicts
        .iter()
        .map(|(name, v)| VerdictOut {
            name: name.clone(),
            formula: v.formula.to_string(),
            holds: v.holds,
            sat_count: v.sat_count,
            trace: v.trace.as_ref().map(|t| trace_out(&spec, t)),
        })
        .collect();

    match common.format {
        Format::Json => {
            println!("{}", serde_json::to_string_pretty(&outputs).unwrap());
        }
        Format::Text => {
            println!(
                "states: {}, transitions: {}",
                graph.state_count(),
                graph.transition_count()
            );
            for out in &outputs {
                println!(
                    "{}: {} ({} of {} states satisfy `{}`)",
                    out.name,
                    if out.holds { "HOLDS" } else { "FAILS" },
                    out.sat_count,
                    graph.state_count(),
                    out.formula
                );
                if let Some(steps) = &out.trace {
                    let kind = if out.holds {
                        "witness"
                    } else {
                        "counterexample"
                    };
                    println!("  {kind} ({} steps):", steps.len());
                    for s in steps {
                        let vals = s
                            .state
                            .iter()
                            .map(|(k, v)| format!("{k}={v}"))
                            .collect::<Vec<_>>()
                            .join(" ");
                        match &s.action {
                            Some(a) => println!("    {vals}  --[{a}]-->"),
                            None => println!("    {vals}"),
                        }
                    }
                }
            }
        }
    }

    if let Some(path) = trace_path {
        let traced: Vec<&VerdictOut> = outputs.iter().filter(|o| o.trace.is_some()).collect();
        match serde_json::to_string_pretty(&traced) {
            Ok(json) => {
                if let Err(e) = std::fs::write(path, json) {
                    return input_err(e);
                }
            }
            Err(e) => return input_err(e),
        }
    }

    if outputs.iter().all(|o| o.holds) {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

// ---------------------------------------------------------------------------
// reduce
// ---------------------------------------------------------------------------

fn cmd_reduce(
    game: &std::path::Path,
    reduction: &std::path::Path,
    output: &std::path::Path,
    report: bool,
    common: &CommonOpts,
) -> u8 {
    if let Err(code) = check_caps(common) {
        return code;
    }
    let spec = match load(game) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Err(code) = validate_or_fail(&spec, common, true) {
        return code;
    }
    let r = match load_reduction(reduction) {
        Ok(r) => r,
        Err(e) => return input_err(e),
    };
    let reduced = match apply_reduction(&spec, &r) {
        Ok(s) => s,
        Err(e) => return input_err(e),
    };
    eprintln!(
        "warning: reductions are user-directed and not verdict-preserving in general; \
         re-check every property on the reduced model"
    );
    if let Err(code) = validate_or_fail(&reduced, common, false) {
        return code;
    }
    if let Err(e) = std::fs::write(output, gamemc::serialize_game_spec(&reduced)) {
        return input_err(e);
    }
    if report {
        let rep = reduction_report(
            &spec,
            &reduced,
            &ReportCaps {
                enum_cap: common.max_enum,
                max_states: common.max_states,
            },
        );
        match common.format {
            Format::Json => println!("{}", serde_json::to_string_pretty(&rep).unwrap()),
            Format::Text => {
                let product = |p: Option<u128>, over: bool| match p {
                    Some(v) if !over => v.to_string(),
                    Some(v) => format!("{v} (over cap, uncountable at this scale)"),
                    None => "beyond u128 (uncountable at this scale)".to_string(),
                };
                println!(
                    "domain product: {} -> {}",
                    product(rep.product_before, rep.before_over_cap),
                    product(rep.product_after, rep.after_over_cap)
                );
                let reach = |r: Option<usize>| {
                    r.map(|v| v.to_string())
                        .unwrap_or_else(|| "not counted (over state cap)".to_string())
                };
                println!(
                    "reachable states: {} -> {}",
                    reach(rep.reachable_before),
                    reach(rep.reachable_after)
                );
                println!("removed attributes: {:?}", rep.removed_attributes);
                println!("removed actions: {:?}", rep.removed_actions);
                println!("removed collisions: {:?}", rep.removed_collisions);
                println!("removed actors: {:?}", rep.removed_actors);
            }
        }
    }
    EXIT_OK
}

// ---------------------------------------------------------------------------
// emit-smv
// ---------------------------------------------------------------------------

fn cmd_emit(
    game: &std::path::Path,
    template: Option<&std::path::Path>,
    testcase: Option<&std::path::Path>,
    props: Option<&std::path::Path>,
    output: Option<&std::path::Path>,
    common: &CommonOpts,
) -> u8 {
    if let Err(code) = check_caps(common) {
        return code;
    }
    let spec = match load(game) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Err(code) = validate_or_fail(&spec, common, true) {
        return code;
    }
    let unit = match template {
        Some(tpl_path) => {
            let tpl = match load_template(tpl_path) {
                Ok(t) => t,
                Err(e) => return input_err(e),
            };
            let tc = match gamemc::spec_io::load_testcase(testcase.expect("clap enforces")) {
                Ok(t) => t,
                Err(e) => return input_err(e),
            };
            match compile_with_template(&tpl, &spec, &tc) {
                Ok(u) => u,
                Err(e) => return input_err(e),
            }
        }
        None => {
            let prop_names: Vec<String> =
                spec.propositions.iter().map(|p| p.name.clone()).collect();
            let formulas = match props {
                Some(p) => {
                    let raw = match load_properties(p) {
                        Ok(r) => r,
                        Err(e) => return input_err(e),
                    };
                    match parse_props(&raw, &prop_names) {
                        Ok(f) => f,
                        Err(code) => return code,
                    }
                }
                None => vec![],
            };
            match emit_module(&spec, &formulas) {
                Ok(u) => u,
                Err(e) => return input_err(e),
            }
        }
    };
    for d in &unit.diagnostics {
        eprintln!("warning: {d}");
    }
    match output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &unit.text) {
                return input_err(e);
            }
        }
        None => print!("{}", unit.text),
    }
    EXIT_OK
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

fn cmd_stats(game: &std::path::Path, dump: Option<&std::path::Path>, common: &CommonOpts) -> u8 {
    if let Err(code) = check_caps(common) {
        return code;
    }
    let spec = match load(game) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Err(code) = validate_or_fail(&spec, common, true) {
        return code;
    }
    let graph = match build_or_exit(&spec, common) {
        Ok(g) => g,
        Err(code) => return code,
    };
    let st = stats(&graph);
    match common.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&st).unwrap()),
        Format::Text => {
            println!("states: {}", st.states);
            println!("transitions: {}", st.transitions);
            println!("initial: {}", st.initial);
            println!("max out-degree: {}", st.max_out_degree);
            for (name, count) in &st.proposition_counts {
                println!("proposition {name}: {count} states");
            }
        }
    }
    if let Some(path) = dump {
        let mut buf = Vec::new();
        if let Err(e) = write_graph_dump(&graph, &spec, &mut buf) {
            return input_err(e);
        }
        if let Err(e) = std::fs::write(path, buf) {
            return input_err(e);
        }
    }
    EXIT_OK
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulateOutput {
    algorithm: &'static str,
    seed: u64,
    steps: Vec<TraceStepOut>,
}

fn cmd_simulate(game: &std::path::Path, steps: usize, seed: u64, common: &CommonOpts) -> u8 {
    if let Err(code) = check_caps(common) {
        return code;
    }
    let spec = match load(game) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let initial = match spec.initial_vectors(common.max_enum) {
        Ok(v) => v,
        Err(e) => return input_err(e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = initial[rng.gen_range(0..initial.len())].clone();
    let mut walk: Vec<(Vec<i64>, Option<JointAction>)> = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let succ = match successors(&spec, &state) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_FAIL;
            }
        };
        if succ.is_empty() {
            eprintln!("note: no performable joint action; stopping walk early");
            break;
        }
        let (joint, next) = succ[rng.gen_range(0..succ.len())].clone();
        walk.push((state.clone(), Some(joint)));
        state = next;
    }
    walk.push((state, None));

    let out = SimulateOutput {
        algorithm: "ChaCha8",
        seed,
        steps: walk
            .iter()
            .map(|(values, action)| TraceStepOut {
                state: spec
                    .attributes
                    .iter()
                    .zip(values)
                    .map(|(a, v)| (a.name.clone(), *v))
                    .collect(),
                action: action.as_ref().map(|j| j.label(&spec)),
            })
            .collect(),
    };
    match common.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&out).unwrap()),
        Format::Text => {
            println!("PRNG: {} seed: {seed}", out.algorithm);
            for s in &out.steps {
                let vals = s
                    .state
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                match &s.action {
                    Some(a) => println!("{vals}  --[{a}]-->"),
                    None => println!("{vals}"),
                }
            }
        }
    }
    EXIT_OK
}
