//! Small-step operational semantics.
//!
//! Reduction is leftmost and deterministic: a term's own redex is taken
//! before descending into its head position (the bound computation of a
//! `let`, the body of a `handle` or of a `weaken`).

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::grading::{GradingError, Morphism};
use crate::signature::GradedSignature;
use crate::syntax::{all_names, fresh_name, substitute, Comp, Handler, Lambda, Type, Value};
use crate::typecheck::{Checker, TypeError};

pub const DEFAULT_MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("handler {handler} has no clause for `{op}` at continuation grade {k}")]
    MissingClause { handler: String, op: String, k: String },
    #[error("no result after {0} steps")]
    MaxStepsExceeded(usize),
    #[error("stuck term: {0}")]
    Stuck(String),
    #[error("step {step} changed the judgement from {expected} to {found}")]
    PreservationViolated {
        step: usize,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Grading(#[from] GradingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    App,
    Let,
    Proj,
    MatchLeft,
    MatchRight,
    HandleRet,
    HandleOp,
    /// `weaken id { M } id → M`
    WeakenId,
    /// `weaken g { weaken g' { M } h' } h → weaken g;g' { M } h';h`
    WeakenMerge,
    /// `weaken g { val V } h → weaken g;h { val V } id`
    WeakenVal,
    /// Moves a `weaken` out of the bound computation of a `let`.
    LetWeaken,
    /// Moves the pre-coercion of a handled `weaken` out of the handler.
    HandleWeaken,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::App => "S-App",
            Rule::Let => "S-Let",
            Rule::Proj => "S-Proj",
            Rule::MatchLeft => "S-MatchLeft",
            Rule::MatchRight => "S-MatchRight",
            Rule::HandleRet => "S-HandleRet",
            Rule::HandleOp => "S-HandleOp",
            Rule::WeakenId => "S-WeakenId",
            Rule::WeakenMerge => "S-WeakenMerge",
            Rule::WeakenVal => "S-WeakenVal",
            Rule::LetWeaken => "S-LetWeaken",
            Rule::HandleWeaken => "S-HandleWeaken",
        };
        f.write_str(s)
    }
}

/// One layer of context around a redex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    /// `let x ← [] in N`
    Let(String, Comp),
    /// `handle [] with H`
    Handle(Arc<Handler>),
    /// `weaken g { [] } h`
    Weaken(Morphism, Morphism),
}

/// Frames outermost first.
pub fn plug(frames: &[Frame], m: Comp) -> Comp {
    frames.iter().rev().fold(m, |inner, f| match f {
        Frame::Let(x, n) => Comp::Let(x.clone(), Box::new(inner), Box::new(n.clone())),
        Frame::Handle(h) => Comp::Handle(Box::new(inner), h.clone()),
        Frame::Weaken(g, h) => Comp::Weaken(g.clone(), Box::new(inner), h.clone()),
    })
}

#[derive(Debug, Clone)]
pub enum Decomposition {
    /// `val_a V`, or `weaken r { val_b V } id` for a non-identity `r`.
    Terminal,
    /// `E[op(V)]` with no handler around the call.
    OpAtTop {
        frames: Vec<Frame>,
        op: String,
        param: Value,
    },
    /// `F[R]` for a redex `R` of `rule`, living in signature `world`.
    Redex {
        frames: Vec<Frame>,
        redex: Comp,
        rule: Rule,
        world: Arc<GradedSignature>,
    },
}

/// Final configuration of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Value { obj: String, value: Value },
    /// A value under a leftover wide coercion.
    Coerced { r: Morphism, obj: String, value: Value },
    OpAtTop { op: String, param: Value },
}

#[derive(Debug, Clone)]
pub struct Trace {
    /// The initial term followed by each step's result and rule.
    pub start: Comp,
    pub steps: Vec<(Rule, Comp)>,
    pub outcome: Outcome,
}

impl Trace {
    pub fn last(&self) -> &Comp {
        self.steps.last().map(|(_, c)| c).unwrap_or(&self.start)
    }

    pub fn configurations(&self) -> impl Iterator<Item = &Comp> {
        std::iter::once(&self.start).chain(self.steps.iter().map(|(_, c)| c))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub max_steps: usize,
    /// Re-check every configuration against the starting judgement.
    pub check_preservation: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_steps: DEFAULT_MAX_STEPS,
            check_preservation: false,
        }
    }
}

/// The handler-free context around an operation call inside a handled
/// computation: `let` heads and bodies of `weaken id { [] } h`.
fn find_op(m: &Comp) -> Option<(Vec<Frame>, String, Value)> {
    match m {
        Comp::Op(op, v) => Some((Vec::new(), op.clone(), v.clone())),
        Comp::Let(x, head, n) => {
            let (mut frames, op, v) = find_op(head)?;
            frames.insert(0, Frame::Let(x.clone(), (**n).clone()));
            Some((frames, op, v))
        }
        Comp::Weaken(g, body, h) if g.is_identity() => {
            let (mut frames, op, v) = find_op(body)?;
            frames.insert(0, Frame::Weaken(g.clone(), h.clone()));
            Some((frames, op, v))
        }
        _ => None,
    }
}

fn own_rule(m: &Comp) -> Option<Rule> {
    match m {
        Comp::App(Value::Lam(_), _) => Some(Rule::App),
        Comp::Let(_, head, _) => match **head {
            Comp::Val(..) => Some(Rule::Let),
            Comp::Weaken(..) => Some(Rule::LetWeaken),
            _ => None,
        },
        Comp::Split(Value::Pair(..), ..) => Some(Rule::Proj),
        Comp::Case(Value::Inl(..), ..) => Some(Rule::MatchLeft),
        Comp::Case(Value::Inr(..), ..) => Some(Rule::MatchRight),
        Comp::Handle(body, _) => match &**body {
            Comp::Val(..) => Some(Rule::HandleRet),
            Comp::Weaken(g, ..) if !g.is_identity() => Some(Rule::HandleWeaken),
            b if find_op(b).is_some() => Some(Rule::HandleOp),
            _ => None,
        },
        Comp::Weaken(g, body, h) => match &**body {
            _ if g.is_identity() && h.is_identity() => Some(Rule::WeakenId),
            Comp::Weaken(..) => Some(Rule::WeakenMerge),
            Comp::Val(..) if !h.is_identity() => Some(Rule::WeakenVal),
            _ => None,
        },
        _ => None,
    }
}

pub fn decompose(world: &Arc<GradedSignature>, m: &Comp) -> Result<Decomposition, EvalError> {
    if let Some(rule) = own_rule(m) {
        return Ok(Decomposition::Redex {
            frames: Vec::new(),
            redex: m.clone(),
            rule,
            world: world.clone(),
        });
    }
    let stuck = || EvalError::Stuck(m.to_string());
    let (frame, inner, inner_world) = match m {
        Comp::Val(..) => return Ok(Decomposition::Terminal),
        Comp::Op(op, v) => {
            return Ok(Decomposition::OpAtTop {
                frames: Vec::new(),
                op: op.clone(),
                param: v.clone(),
            })
        }
        Comp::Let(x, head, n) => (Frame::Let(x.clone(), (**n).clone()), head, world.clone()),
        Comp::Handle(body, h) => (Frame::Handle(h.clone()), body, h.source.clone()),
        Comp::Weaken(g, body, h) => (Frame::Weaken(g.clone(), h.clone()), body, world.clone()),
        _ => return Err(stuck()),
    };
    match decompose(&inner_world, inner)? {
        Decomposition::Redex {
            mut frames,
            redex,
            rule,
            world,
        } => {
            frames.insert(0, frame);
            Ok(Decomposition::Redex {
                frames,
                redex,
                rule,
                world,
            })
        }
        Decomposition::OpAtTop {
            mut frames,
            op,
            param,
        } if !matches!(frame, Frame::Handle(_)) => {
            frames.insert(0, frame);
            Ok(Decomposition::OpAtTop { frames, op, param })
        }
        Decomposition::Terminal if matches!(frame, Frame::Weaken(..)) => {
            Ok(Decomposition::Terminal)
        }
        _ => Err(stuck()),
    }
}

/// Reads off the final configuration of a term that does not step.
pub fn outcome(m: &Comp) -> Option<Outcome> {
    match m {
        Comp::Val(a, v) => Some(Outcome::Value {
            obj: a.clone(),
            value: v.clone(),
        }),
        Comp::Weaken(r, body, h) if h.is_identity() && !r.is_identity() => match &**body {
            Comp::Val(a, v) => Some(Outcome::Coerced {
                r: r.clone(),
                obj: a.clone(),
                value: v.clone(),
            }),
            _ => op_outcome(m),
        },
        _ => op_outcome(m),
    }
}

fn op_outcome(m: &Comp) -> Option<Outcome> {
    match m {
        Comp::Op(op, v) => Some(Outcome::OpAtTop {
            op: op.clone(),
            param: v.clone(),
        }),
        Comp::Let(_, head, _) => op_outcome(head),
        Comp::Weaken(_, body, _) => op_outcome(body),
        _ => None,
    }
}

/// A stepper; keeps a type checker for continuation grades and the
/// identities the `weaken` rules introduce.
#[derive(Default)]
pub struct Evaluator {
    checker: Checker,
}

impl Evaluator {
    pub fn new() -> Evaluator {
        Evaluator::default()
    }

    pub fn checker(&self) -> &Checker {
        &self.checker
    }

    /// Grade of `E[val_c y]` for `y` of the arity of `op`, `c` the codomain
    /// of the grade of `op`.
    pub fn continuation_grade(
        &self,
        world: &Arc<GradedSignature>,
        frames: &[Frame],
        op: &str,
    ) -> Result<Morphism, EvalError> {
        let o = world
            .op(op)
            .ok_or_else(|| TypeError::UnknownOp(op.to_string()))?;
        let y = resume_var(frames);
        let plugged = plug(&resume_frames(frames, &o.grade.cod), Comp::val(&o.grade.cod, Value::var(&y)));
        Ok(self.checker.continuation_grade(world, &plugged, &y, &o.arity)?)
    }

    /// One step, or `None` for a term in final form.
    pub fn step(
        &self,
        world: &Arc<GradedSignature>,
        m: &Comp,
    ) -> Result<Option<(Rule, Comp)>, EvalError> {
        match decompose(world, m)? {
            Decomposition::Terminal | Decomposition::OpAtTop { .. } => Ok(None),
            Decomposition::Redex {
                frames,
                redex,
                rule,
                world,
            } => {
                let out = self.contract(&world, rule, &redex)?;
                Ok(Some((rule, plug(&frames, out))))
            }
        }
    }

    fn grade_of(&self, world: &Arc<GradedSignature>, m: &Comp) -> Result<Morphism, EvalError> {
        Ok(self.checker.grade_of_computation(&Vec::new(), world, m)?.1)
    }

    fn contract(&self, world: &Arc<GradedSignature>, rule: Rule, m: &Comp) -> Result<Comp, EvalError> {
        let cat = &world.category;
        let stuck = || EvalError::Stuck(m.to_string());
        Ok(match (rule, m) {
            (Rule::App, Comp::App(Value::Lam(l), w)) => {
                substitute(&l.body, &[(l.var.clone(), w.clone())])
            }
            (Rule::Let, Comp::Let(x, head, n)) => {
                let Comp::Val(_, v) = &**head else {
                    return Err(stuck());
                };
                substitute(n, &[(x.clone(), v.clone())])
            }
            (Rule::Proj, Comp::Split(Value::Pair(a, b), x, y, body)) => substitute(
                body,
                &[(x.clone(), (**a).clone()), (y.clone(), (**b).clone())],
            ),
            (Rule::MatchLeft, Comp::Case(Value::Inl(v, _), x, m1, _, _)) => {
                substitute(m1, &[(x.clone(), (**v).clone())])
            }
            (Rule::MatchRight, Comp::Case(Value::Inr(v, _), _, _, y, m2)) => {
                substitute(m2, &[(y.clone(), (**v).clone())])
            }
            (Rule::HandleRet, Comp::Handle(body, h)) => {
                let Comp::Val(_, v) = &**body else {
                    return Err(stuck());
                };
                substitute(&h.ret_body, &[(h.ret_var.clone(), v.clone())])
            }
            (Rule::HandleOp, Comp::Handle(body, h)) => self.handle_op(body, h)?,
            (Rule::WeakenId, Comp::Weaken(_, body, _)) => (**body).clone(),
            (Rule::WeakenMerge, Comp::Weaken(g, body, h)) => {
                let Comp::Weaken(g2, inner, h2) = &**body else {
                    return Err(stuck());
                };
                Comp::Weaken(cat.compose(g, g2)?, inner.clone(), cat.compose(h2, h)?)
            }
            (Rule::WeakenVal, Comp::Weaken(g, body, h)) => {
                let Comp::Val(_, v) = &**body else {
                    return Err(stuck());
                };
                Comp::weaken(
                    cat.compose(g, h)?,
                    Comp::val(&h.cod, v.clone()),
                    Morphism::identity(h.cod.clone()),
                )
            }
            (Rule::LetWeaken, Comp::Let(x, head, n)) => {
                let Comp::Weaken(g, inner, h) = &**head else {
                    return Err(stuck());
                };
                let end = Morphism::identity(self.grade_of(world, m)?.cod);
                let rest = if h.is_identity() {
                    (**n).clone()
                } else {
                    let n_end = end.clone();
                    Comp::weaken(h.clone(), (**n).clone(), n_end)
                };
                Comp::weaken(g.clone(), Comp::Let(x.clone(), inner.clone(), Box::new(rest)), end)
            }
            (Rule::HandleWeaken, Comp::Handle(body, hd)) => {
                let Comp::Weaken(g, inner, h) = &**body else {
                    return Err(stuck());
                };
                let pre = hd.functor.apply(g)?;
                let end = hd
                    .functor
                    .map_object(&hd.at)
                    .ok_or_else(|| TypeError::UnknownObject(hd.at.clone()))?
                    .to_string();
                Comp::weaken(
                    pre,
                    Comp::handle(
                        Comp::Weaken(Morphism::identity(g.cod.clone()), inner.clone(), h.clone()),
                        hd.clone(),
                    ),
                    Morphism::identity(end),
                )
            }
            _ => return Err(stuck()),
        })
    }

    /// `handle E[op(V)] with H` → `M^k_op[V/p, (λ^{G k} y. handle E[val_c y] with H)/r]`.
    fn handle_op(&self, body: &Comp, h: &Arc<Handler>) -> Result<Comp, EvalError> {
        let (frames, op, v) = find_op(body).ok_or_else(|| EvalError::Stuck(body.to_string()))?;
        let o = h
            .source
            .op(&op)
            .ok_or_else(|| TypeError::UnknownOp(op.clone()))?;
        let k = self.continuation_grade(&h.source, &frames, &op)?;
        let clause = h.clause_for(&op, &k).ok_or_else(|| EvalError::MissingClause {
            handler: h.name.clone(),
            op: op.clone(),
            k: k.to_string(),
        })?;
        let y = resume_var(&frames);
        let resumed = Comp::handle(
            plug(&resume_frames(&frames, &o.grade.cod), Comp::val(&o.grade.cod, Value::var(&y))),
            h.clone(),
        );
        let resume = Value::Lam(Box::new(Lambda {
            grade: h.functor.apply(&k)?,
            var: y,
            var_type: o.arity.clone(),
            body: resumed,
        }));
        Ok(substitute(
            &clause.body,
            &[(clause.param.clone(), v), (clause.resume.clone(), resume)],
        ))
    }

    pub fn run(
        &self,
        world: &Arc<GradedSignature>,
        m: &Comp,
        opts: RunOptions,
    ) -> Result<Trace, EvalError> {
        let start: Option<(Type, Morphism)> = if opts.check_preservation {
            Some(self.checker.grade_of_computation(&Vec::new(), world, m)?)
        } else {
            None
        };
        let mut steps: Vec<(Rule, Comp)> = Vec::new();
        let mut current = m.clone();
        loop {
            match self.step(world, &current)? {
                None => {
                    let outcome = outcome(&current).ok_or_else(|| EvalError::Stuck(current.to_string()))?;
                    return Ok(Trace {
                        start: m.clone(),
                        steps,
                        outcome,
                    });
                }
                Some((rule, next)) => {
                    if steps.len() >= opts.max_steps {
                        return Err(EvalError::MaxStepsExceeded(opts.max_steps));
                    }
                    if let Some((ty, f)) = &start {
                        let found = self
                            .checker
                            .grade_of_computation(&Vec::new(), world, &next)
                            .map(|(t, g)| format!("{t} @ {g}"))
                            .unwrap_or_else(|e| format!("error: {e}"));
                        let expected = format!("{ty} @ {f}");
                        if found != expected {
                            return Err(EvalError::PreservationViolated {
                                step: steps.len() + 1,
                                expected,
                                found,
                            });
                        }
                    }
                    steps.push((rule, next.clone()));
                    current = next;
                }
            }
        }
    }
}

/// The context of an operation call with its result in place of the call:
/// identity pre-coercions around the hole move from the domain of the
/// operation's grade to its codomain `c`.
fn resume_frames(frames: &[Frame], c: &str) -> Vec<Frame> {
    frames
        .iter()
        .map(|f| match f {
            Frame::Weaken(g, h) if g.is_identity() => Frame::Weaken(Morphism::identity(c), h.clone()),
            f => f.clone(),
        })
        .collect()
}

/// A name for the resumption's bound variable that no frame mentions.
fn resume_var(frames: &[Frame]) -> String {
    let mut avoid = BTreeSet::new();
    all_names(&plug(frames, Comp::val("", Value::Star)), &mut avoid);
    if avoid.contains("v") {
        fresh_name("v", &avoid)
    } else {
        "v".to_string()
    }
}
