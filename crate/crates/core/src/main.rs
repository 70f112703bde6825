use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cateff::conformance::conform_bundle;
use cateff::denote::denote_program;
use cateff::eval::{EvalError, Evaluator, Outcome, RunOptions, DEFAULT_MAX_STEPS};
use cateff::syntax::{parse_bundle, Bundle, Program};
use cateff::typecheck::{Checker, TypeError};

#[derive(Parser)]
#[command(name = "cateff", version, about = "Category-graded effects and handlers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Typecheck every program and print its judgement.
    Check { file: PathBuf },
    /// Evaluate every program.
    Run {
        file: PathBuf,
        /// Print each configuration with its grade.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
    },
    /// Print the term tree each program denotes.
    Denote {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check the metatheory on the declared programs and a generated corpus.
    Conform {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long)]
        json_report: bool,
    },
}

fn load(file: &PathBuf) -> Result<Bundle, ExitCode> {
    let src = std::fs::read_to_string(file).map_err(|e| {
        eprintln!("{}: {e}", file.display());
        ExitCode::from(1)
    })?;
    parse_bundle(&src).map_err(|e| {
        eprintln!("{}: {e}", file.display());
        ExitCode::from(1)
    })
}

/// Checks a program against its declared type and grade. The flag marks a
/// handler without a clause for some reachable call.
fn check_program(checker: &Checker, p: &Program) -> Result<(), (String, bool)> {
    let (ty, f) = checker
        .grade_of_computation(&Vec::new(), &p.sig, &p.body)
        .map_err(|e| (format!("{}: {e}", p.name), matches!(e, TypeError::MissingClause { .. })))?;
    if ty != p.ty {
        return Err((format!("{}: declared type {} but body has type {ty}", p.name, p.ty), false));
    }
    if f != p.grade {
        return Err((format!("{}: declared grade {} but body has grade {f}", p.name, p.grade), false));
    }
    Ok(())
}

/// Exit code 1 on any error, or `missing_clause_code` when every error is a
/// missing handler clause.
fn check_all_or(bundle: &Bundle, checker: &Checker, missing_clause_code: u8) -> Result<(), ExitCode> {
    let mut code = None;
    for p in bundle.programs.values() {
        if let Err((e, missing)) = check_program(checker, p) {
            eprintln!("error: {e}");
            let c = if missing { missing_clause_code } else { 1 };
            code = Some(if code == Some(1) { 1 } else { c });
        }
    }
    match code {
        None => Ok(()),
        Some(c) => Err(ExitCode::from(c)),
    }
}

fn check_all(bundle: &Bundle, checker: &Checker) -> Result<(), ExitCode> {
    check_all_or(bundle, checker, 1)
}

fn cmd_check(bundle: &Bundle) -> Result<(), ExitCode> {
    let checker = Checker::new();
    check_all(bundle, &checker)?;
    for p in bundle.programs.values() {
        println!("⊢_{{{}}} {} : {}", p.grade, p.name, p.ty);
    }
    Ok(())
}

fn cmd_run(bundle: &Bundle, trace: bool, max_steps: usize) -> Result<(), ExitCode> {
    let ev = Evaluator::new();
    check_all_or(bundle, ev.checker(), 2)?;
    let opts = RunOptions {
        max_steps,
        check_preservation: false,
    };
    let mut code = None;
    for p in bundle.programs.values() {
        let t = match ev.run(&p.sig, &p.body, opts) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("{}: {e}", p.name);
                code = Some(match e {
                    EvalError::MaxStepsExceeded(_) | EvalError::MissingClause { .. } => 2,
                    _ => 1,
                });
                continue;
            }
        };
        if trace {
            println!("{}:", p.name);
            let rules = std::iter::once(None).chain(t.steps.iter().map(|(r, _)| Some(*r)));
            for (i, (rule, m)) in rules.zip(t.configurations()).enumerate() {
                let judgement = ev
                    .checker()
                    .grade_of_computation(&Vec::new(), &p.sig, m)
                    .map(|(ty, f)| format!("{ty} @ {f}"))
                    .unwrap_or_else(|e| format!("ill-typed: {e}"));
                let rule = rule.map(|r| r.to_string()).unwrap_or_default();
                println!("  {i:>3} {rule:<14} {m}");
                println!("      : {judgement}");
            }
        }
        let result = match &t.outcome {
            Outcome::Value { obj, value } => format!("val {obj} {value}"),
            Outcome::Coerced { r, obj, value } => format!("weaken {r} {{ val {obj} {value} }} id"),
            Outcome::OpAtTop { op, param } => format!("unhandled do {op}({param})"),
        };
        println!("{} => {result}  ({} steps)", p.name, t.steps.len());
    }
    match code {
        Some(c) => Err(ExitCode::from(c)),
        None => Ok(()),
    }
}

fn cmd_denote(bundle: &Bundle, json: bool) -> Result<(), ExitCode> {
    check_all(bundle, &Checker::new())?;
    let mut out = serde_json::Map::new();
    for p in bundle.programs.values() {
        let t = denote_program(p).map_err(|e| {
            eprintln!("{}: {e}", p.name);
            ExitCode::from(1)
        })?;
        if json {
            out.insert(p.name.clone(), t.to_json());
        } else {
            println!("{} = {t}", p.name);
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    }
    Ok(())
}

fn cmd_conform(bundle: &Bundle, seed: u64, count: usize, depth: usize, json: bool) -> Result<(), ExitCode> {
    check_all(bundle, &Checker::new())?;
    let max_steps = match std::env::var("CATEFF_MAX_STEPS") {
        Ok(s) => s.parse().map_err(|_| {
            eprintln!("CATEFF_MAX_STEPS must be a number, got {s:?}");
            ExitCode::from(1)
        })?,
        Err(_) => DEFAULT_MAX_STEPS,
    };
    let report = conform_bundle(bundle, seed, count, depth, max_steps).map_err(|e| {
        eprintln!("{e}");
        ExitCode::from(1)
    })?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report.to_json()).expect("json"));
    } else {
        println!("programs       {}", report.programs);
        println!("steps          {}", report.steps);
        println!("soundness      {} checked, {} violations", report.soundness_checked, report.soundness_violations.len());
        println!("adequacy       {} checked, {} violations", report.adequacy_checked, report.adequacy_violations.len());
        println!("progress       {} violations", report.progress_violations.len());
        println!("preservation   {} violations", report.preservation_violations.len());
        println!("safety         {} violations", report.safety_violations.len());
        let all = report
            .soundness_violations
            .iter()
            .chain(&report.adequacy_violations)
            .chain(&report.progress_violations)
            .chain(&report.preservation_violations)
            .chain(&report.safety_violations);
        for v in all {
            println!("  {v}");
        }
    }
    if report.violations() > 0 {
        return Err(ExitCode::from(3));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { file } => load(file).and_then(|b| cmd_check(&b)),
        Command::Run { file, trace, max_steps } => load(file).and_then(|b| cmd_run(&b, *trace, *max_steps)),
        Command::Denote { file, json } => load(file).and_then(|b| cmd_denote(&b, *json)),
        Command::Conform {
            file,
            seed,
            count,
            depth,
            json_report,
        } => load(file).and_then(|b| cmd_conform(&b, *seed, *count, *depth, *json_report)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(c) => c,
    }
}
