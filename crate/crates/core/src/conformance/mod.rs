//! Executable metatheory: soundness, adequacy, progress, preservation and
//! safety checked along evaluation traces.

use std::sync::Arc;

use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::denote::{denote_computation, DenoteError, SemValue};
use crate::eval::{EvalError, Evaluator, Outcome, RunOptions, Trace};
use crate::freemodel::{Shape, TermTree, TreeError};
use crate::grading::Morphism;
use crate::signature::GradedSignature;
use crate::syntax::{Bundle, Comp, Program, Type, Value};
use crate::typecheck::TypeError;

pub mod gen;

pub use gen::{generate_unit_programs, generate_wellgraded_terms, GenError, Generated, Generator};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConformError {
    #[error("result type {0} is not primitive; denotations are not comparable")]
    NonComparable(String),
    #[error("adequacy needs type 1 at an identity grade, found {0}")]
    NotAdequacyShape(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Denote(#[from] DenoteError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

/// First step whose result denotes a different tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub step: usize,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone)]
pub struct SoundnessReport {
    pub steps: usize,
    pub denotation: String,
    pub divergence: Option<Divergence>,
}

/// Runs `m` and compares the denotation of every configuration with the
/// denotation of the previous one.
pub fn verify_soundness_along_trace(
    ev: &Evaluator,
    world: &Arc<GradedSignature>,
    m: &Comp,
    max_steps: usize,
) -> Result<SoundnessReport, ConformError> {
    let (ty, _) = ev.checker().grade_of_computation(&Vec::new(), world, m)?;
    if !ty.is_primitive() {
        return Err(ConformError::NonComparable(ty.to_string()));
    }
    let trace = ev.run(world, m, run_options(max_steps, false))?;
    soundness_of_trace(world, &trace)
}

fn soundness_of_trace(world: &Arc<GradedSignature>, trace: &Trace) -> Result<SoundnessReport, ConformError> {
    let mut previous = denote_computation(world, &Vec::new(), &trace.start)?;
    let first = previous.to_string();
    for (i, (_, c)) in trace.steps.iter().enumerate() {
        let next = denote_computation(world, &Vec::new(), c)?;
        if !previous.try_eq(&next)? {
            return Ok(SoundnessReport {
                steps: trace.steps.len(),
                denotation: first,
                divergence: Some(Divergence {
                    step: i + 1,
                    before: previous.to_string(),
                    after: next.to_string(),
                }),
            });
        }
        previous = next;
    }
    Ok(SoundnessReport {
        steps: trace.steps.len(),
        denotation: first,
        divergence: None,
    })
}

pub fn verify_program_soundness(
    ev: &Evaluator,
    p: &Program,
    max_steps: usize,
) -> Result<SoundnessReport, ConformError> {
    verify_soundness_along_trace(ev, &p.sig, &p.body, max_steps)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdequacyReport {
    /// Whether the denotation is a unit leaf, so the check applies.
    pub applicable: bool,
    pub steps: usize,
    pub reached_unit: bool,
}

/// For `⊢_{id_a} M : 1` denoting `e(a, ⋆)`: `M` must evaluate to `val_a ⋆`.
pub fn verify_adequacy(
    ev: &Evaluator,
    world: &Arc<GradedSignature>,
    m: &Comp,
    max_steps: usize,
) -> Result<AdequacyReport, ConformError> {
    let (ty, f) = ev.checker().grade_of_computation(&Vec::new(), world, m)?;
    if ty != Type::Unit || !f.is_identity() {
        return Err(ConformError::NotAdequacyShape(format!("{ty} @ {f}")));
    }
    let t = denote_computation(world, &Vec::new(), m)?;
    if !is_unit_leaf(&t, &f.dom) {
        return Ok(AdequacyReport {
            applicable: false,
            steps: 0,
            reached_unit: false,
        });
    }
    let trace = ev.run(world, m, run_options(max_steps, false))?;
    Ok(AdequacyReport {
        applicable: true,
        steps: trace.steps.len(),
        reached_unit: reaches_unit(&trace, &f.dom),
    })
}

fn is_unit_leaf(t: &TermTree, a: &str) -> bool {
    matches!(t.shape(), Shape::Leaf { obj, val: SemValue::Star } if obj == a)
}

fn reaches_unit(trace: &Trace, a: &str) -> bool {
    matches!(&trace.outcome, Outcome::Value { obj, value: Value::Star } if obj == a)
}

fn run_options(max_steps: usize, check_preservation: bool) -> RunOptions {
    RunOptions {
        max_steps,
        check_preservation,
    }
}

/// Progress, preservation and safety along one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaReport {
    pub steps: usize,
    pub progress: Result<(), String>,
    pub preservation: Result<(), String>,
    pub safety: Result<(), String>,
}

impl LemmaReport {
    pub fn ok(&self) -> bool {
        self.progress.is_ok() && self.preservation.is_ok() && self.safety.is_ok()
    }
}

/// Safety: a finished run ends in `val_a V` at grade `id_a`, in a value
/// under a wide coercion `r` at grade `r`, or in `E[op(V)]`.
fn safety_of(outcome: &Outcome, grade: &Morphism) -> Result<(), String> {
    match outcome {
        Outcome::Value { obj, .. } if grade.is_identity() && grade.dom == *obj => Ok(()),
        Outcome::Coerced { r, .. } if r == grade => Ok(()),
        Outcome::OpAtTop { .. } => Ok(()),
        o => Err(format!("final configuration {o:?} at grade {grade}")),
    }
}

pub fn check_lemmas(
    ev: &Evaluator,
    world: &Arc<GradedSignature>,
    m: &Comp,
    grade: &Morphism,
    max_steps: usize,
) -> (LemmaReport, Option<Trace>) {
    match ev.run(world, m, run_options(max_steps, true)) {
        Ok(trace) => {
            let safety = safety_of(&trace.outcome, grade);
            (
                LemmaReport {
                    steps: trace.steps.len(),
                    progress: Ok(()),
                    preservation: Ok(()),
                    safety,
                },
                Some(trace),
            )
        }
        Err(e) => {
            let msg = e.to_string();
            let (progress, preservation) = match e {
                EvalError::PreservationViolated { .. } => (Ok(()), Err(msg)),
                _ => (Err(msg), Ok(())),
            };
            (
                LemmaReport {
                    steps: 0,
                    progress,
                    preservation,
                    safety: Ok(()),
                },
                None,
            )
        }
    }
}

/// Counts and first few offending terms for each property.
#[derive(Debug, Clone, Default)]
pub struct CorpusReport {
    pub programs: usize,
    pub steps: usize,
    pub soundness_checked: usize,
    pub soundness_violations: Vec<String>,
    pub adequacy_checked: usize,
    pub adequacy_violations: Vec<String>,
    pub progress_violations: Vec<String>,
    pub preservation_violations: Vec<String>,
    pub safety_violations: Vec<String>,
}

impl CorpusReport {
    pub fn violations(&self) -> usize {
        self.soundness_violations.len()
            + self.adequacy_violations.len()
            + self.progress_violations.len()
            + self.preservation_violations.len()
            + self.safety_violations.len()
    }

    pub fn merge(&mut self, other: CorpusReport) {
        self.programs += other.programs;
        self.steps += other.steps;
        self.soundness_checked += other.soundness_checked;
        self.adequacy_checked += other.adequacy_checked;
        self.soundness_violations.extend(other.soundness_violations);
        self.adequacy_violations.extend(other.adequacy_violations);
        self.progress_violations.extend(other.progress_violations);
        self.preservation_violations.extend(other.preservation_violations);
        self.safety_violations.extend(other.safety_violations);
    }

    pub fn to_json(&self) -> Json {
        json!({
            "programs": self.programs,
            "steps": self.steps,
            "soundness": {"checked": self.soundness_checked, "violations": self.soundness_violations},
            "adequacy": {"checked": self.adequacy_checked, "violations": self.adequacy_violations},
            "progress": {"violations": self.progress_violations},
            "preservation": {"violations": self.preservation_violations},
            "safety": {"violations": self.safety_violations},
        })
    }
}

/// Runs every check that applies to one closed computation.
pub fn check_term(
    ev: &Evaluator,
    world: &Arc<GradedSignature>,
    m: &Comp,
    ty: &Type,
    grade: &Morphism,
    max_steps: usize,
) -> CorpusReport {
    let mut report = CorpusReport {
        programs: 1,
        ..CorpusReport::default()
    };
    let (lemmas, trace) = check_lemmas(ev, world, m, grade, max_steps);
    report.steps = lemmas.steps;
    let tag = |e: &str| format!("{m}: {e}");
    if let Err(e) = &lemmas.progress {
        report.progress_violations.push(tag(e));
    }
    if let Err(e) = &lemmas.preservation {
        report.preservation_violations.push(tag(e));
    }
    if let Err(e) = &lemmas.safety {
        report.safety_violations.push(tag(e));
    }
    let Some(trace) = trace else {
        return report;
    };
    if ty.is_primitive() {
        report.soundness_checked = 1;
        match soundness_of_trace(world, &trace) {
            Ok(r) => {
                if let Some(d) = r.divergence {
                    report.soundness_violations.push(tag(&format!(
                        "step {} changes {} into {}",
                        d.step, d.before, d.after
                    )));
                }
            }
            Err(e) => report.soundness_violations.push(tag(&e.to_string())),
        }
    }
    if *ty == Type::Unit && grade.is_identity() {
        match denote_computation(world, &Vec::new(), m) {
            Ok(t) if is_unit_leaf(&t, &grade.dom) => {
                report.adequacy_checked = 1;
                if !reaches_unit(&trace, &grade.dom) {
                    report
                        .adequacy_violations
                        .push(tag(&format!("ended in {}", trace.last())));
                }
            }
            Ok(_) => {}
            Err(e) => report.adequacy_violations.push(tag(&e.to_string())),
        }
    }
    report
}

pub fn check_corpus(corpus: &[Generated], max_steps: usize) -> CorpusReport {
    let ev = Evaluator::new();
    let mut report = CorpusReport::default();
    for g in corpus {
        report.merge(check_term(&ev, &g.world, &g.body, &g.ty, &g.grade, max_steps));
    }
    report
}

/// Checks the declared programs of a bundle and a generated corpus over it.
pub fn conform_bundle(
    bundle: &Bundle,
    seed: u64,
    count: usize,
    depth: usize,
    max_steps: usize,
) -> Result<CorpusReport, ConformError> {
    let ev = Evaluator::new();
    let mut report = CorpusReport::default();
    for p in bundle.programs.values() {
        report.merge(check_term(&ev, &p.sig, &p.body, &p.ty, &p.grade, max_steps));
    }
    if count > 0 {
        let corpus = generate_wellgraded_terms(bundle, seed, count, depth)?;
        report.merge(check_corpus(&corpus, max_steps));
        let units = generate_unit_programs(bundle, seed.wrapping_add(1), count.div_ceil(4), depth)?;
        report.merge(check_corpus(&units, max_steps));
    }
    Ok(report)
}
