//! Syntax-directed type and grade checking.
//!
//! Every value has at most one type and every computation at most one
//! (type, grade) pair; annotations on lambdas, injections and `val` make the
//! rules deterministic.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::grading::{GradingCategory, GradingError, Morphism};
use crate::signature::GradedSignature;
use crate::syntax::{free_vars, Comp, Handler, Lambda, Type, Value};

/// Typing context; later entries shadow earlier ones.
pub type Ctx = Vec<(String, Type)>;

/// Upper bound on callee walks during continuation-grade collection.
const COLLECT_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("type mismatch in {context}: expected {expected}, found {found}")]
    TypeMismatch {
        context: String,
        expected: String,
        found: String,
    },
    #[error("grade mismatch: {0}")]
    GradeMismatch(String),
    #[error("{0} is not in the wide subcategory")]
    NotInWideSubcategory(String),
    #[error("handler {handler}: clause for `{op}` at {k} is graded {found}, expected {expected}")]
    ClauseGradeMismatch {
        handler: String,
        op: String,
        k: String,
        expected: String,
        found: String,
    },
    #[error("handler {handler}: return clause is graded {found}, expected an identity")]
    ReturnClauseGradeNotIdentity { handler: String, found: String },
    #[error("handled type {0} is not primitive")]
    NonPrimitiveHandledType(String),
    #[error("handled computation captures `{0}`, which has a non-primitive type")]
    NonPrimitiveCapturedVariable(String),
    #[error("handler {handler} works at `{expected}` but the computation ends at `{found}`")]
    ObjectMismatch {
        handler: String,
        expected: String,
        found: String,
    },
    #[error("handler {handler} has no clause for `{op}` at continuation grade {k}")]
    MissingClause { handler: String, op: String, k: String },
    #[error("handler {handler} produces {found} computations, expected {expected}")]
    SignatureMismatch {
        handler: String,
        expected: String,
        found: String,
    },
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("morphism {0} does not belong to the grading category")]
    ForeignMorphism(String),
    #[error("functor of handler {0} does not preserve the wide subcategory")]
    WideNotPreserved(String),
    #[error(transparent)]
    Grading(#[from] GradingError),
}

fn mismatch(context: &str, expected: impl ToString, found: impl ToString) -> TypeError {
    TypeError::TypeMismatch {
        context: context.to_string(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// `Γ ⊢^G_b H : R ⇒ R'`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandlerProfile {
    pub functor: String,
    pub at: String,
    pub handled: Type,
    pub result: Type,
}

pub fn extend(ctx: &Ctx, x: &str, ty: Type) -> Ctx {
    let mut out: Ctx = ctx.iter().filter(|(y, _)| y != x).cloned().collect();
    out.push((x.to_string(), ty));
    out
}

fn lookup<'a>(ctx: &'a Ctx, x: &str) -> Option<&'a Type> {
    ctx.iter().rev().find(|(y, _)| y == x).map(|(_, t)| t)
}

type SiteKey = (usize, Ctx, Comp);

/// Type checker with memo tables for handler clauses and handle sites.
#[derive(Default)]
pub struct Checker {
    returns: RefCell<HashMap<(usize, Type), Result<Type, TypeError>>>,
    clauses: RefCell<HashMap<(usize, Type, String, Morphism), Result<(), TypeError>>>,
    sites: RefCell<HashMap<SiteKey, Result<(Type, Morphism), TypeError>>>,
    pairs: RefCell<HashMap<SiteKey, BTreeSet<(String, Morphism)>>>,
}

fn hkey(h: &Arc<Handler>) -> usize {
    Arc::as_ptr(h) as usize
}

fn check_type_wf(cat: &GradingCategory, t: &Type) -> Result<(), TypeError> {
    match t {
        Type::Unit => Ok(()),
        Type::Prod(a, b) | Type::Sum(a, b) => {
            check_type_wf(cat, a)?;
            check_type_wf(cat, b)
        }
        Type::Arrow(a, b, f) => {
            if !cat.contains(f) {
                return Err(TypeError::ForeignMorphism(f.to_string()));
            }
            check_type_wf(cat, a)?;
            check_type_wf(cat, b)
        }
    }
}

impl Checker {
    pub fn new() -> Checker {
        Checker::default()
    }

    pub fn type_of_value(
        &self,
        ctx: &Ctx,
        sig: &Arc<GradedSignature>,
        v: &Value,
    ) -> Result<Type, TypeError> {
        match v {
            Value::Var(x) => lookup(ctx, x)
                .cloned()
                .ok_or_else(|| TypeError::UnboundVariable(x.clone())),
            Value::Star => Ok(Type::Unit),
            Value::Pair(a, b) => Ok(Type::prod(
                self.type_of_value(ctx, sig, a)?,
                self.type_of_value(ctx, sig, b)?,
            )),
            Value::Inl(w, t) | Value::Inr(w, t) => {
                check_type_wf(&sig.category, t)?;
                let Type::Sum(l, r) = t else {
                    return Err(mismatch("injection annotation", "a sum type", t));
                };
                let want = if matches!(v, Value::Inl(..)) { l } else { r };
                let got = self.type_of_value(ctx, sig, w)?;
                if got != **want {
                    return Err(mismatch("injection", want, got));
                }
                Ok(t.clone())
            }
            Value::Lam(l) => self.type_of_lambda(ctx, sig, l),
        }
    }

    fn type_of_lambda(
        &self,
        ctx: &Ctx,
        sig: &Arc<GradedSignature>,
        l: &Lambda,
    ) -> Result<Type, TypeError> {
        if !sig.category.contains(&l.grade) {
            return Err(TypeError::ForeignMorphism(l.grade.to_string()));
        }
        check_type_wf(&sig.category, &l.var_type)?;
        let inner = extend(ctx, &l.var, l.var_type.clone());
        let (b, f) = self.grade_of_computation(&inner, sig, &l.body)?;
        if f != l.grade {
            return Err(TypeError::GradeMismatch(format!(
                "lambda annotated {} but its body is graded {}",
                l.grade, f
            )));
        }
        Ok(Type::arrow(l.var_type.clone(), b, f))
    }

    pub fn grade_of_computation(
        &self,
        ctx: &Ctx,
        sig: &Arc<GradedSignature>,
        m: &Comp,
    ) -> Result<(Type, Morphism), TypeError> {
        let cat = &sig.category;
        match m {
            Comp::Val(a, v) => {
                if !cat.has_object(a) {
                    return Err(TypeError::UnknownObject(a.clone()));
                }
                Ok((self.type_of_value(ctx, sig, v)?, Morphism::identity(a.clone())))
            }
            Comp::Let(x, m1, n) => {
                let (a, f) = self.grade_of_computation(ctx, sig, m1)?;
                let (b, g) = self.grade_of_computation(&extend(ctx, x, a), sig, n)?;
                if f.cod != g.dom {
                    return Err(TypeError::GradeMismatch(format!(
                        "cannot sequence {f} (ending at {}) with {g} (starting at {})",
                        f.cod, g.dom
                    )));
                }
                Ok((b, cat.compose(&f, &g)?))
            }
            Comp::App(v, w) => {
                let tv = self.type_of_value(ctx, sig, v)?;
                let Type::Arrow(a, b, f) = tv else {
                    return Err(mismatch("application", "a function", tv));
                };
                let tw = self.type_of_value(ctx, sig, w)?;
                if tw != *a {
                    return Err(mismatch("argument", a, tw));
                }
                Ok((*b, f))
            }
            Comp::Op(op, v) => {
                let o = sig
                    .op(op)
                    .ok_or_else(|| TypeError::UnknownOp(op.clone()))?;
                let tv = self.type_of_value(ctx, sig, v)?;
                if tv != o.param {
                    return Err(mismatch(&format!("argument of `{op}`"), &o.param, tv));
                }
                Ok((o.arity.clone(), o.grade.clone()))
            }
            Comp::Split(v, x, y, body) => {
                let tv = self.type_of_value(ctx, sig, v)?;
                let Type::Prod(a1, a2) = tv else {
                    return Err(mismatch("split", "a product", tv));
                };
                let inner = extend(&extend(ctx, x, *a1), y, *a2);
                self.grade_of_computation(&inner, sig, body)
            }
            Comp::Case(v, x, m1, y, m2) => {
                let tv = self.type_of_value(ctx, sig, v)?;
                let Type::Sum(a1, a2) = tv else {
                    return Err(mismatch("case", "a sum", tv));
                };
                let (b1, f1) = self.grade_of_computation(&extend(ctx, x, *a1), sig, m1)?;
                let (b2, f2) = self.grade_of_computation(&extend(ctx, y, *a2), sig, m2)?;
                if b1 != b2 {
                    return Err(mismatch("case branches", b1, b2));
                }
                if f1 != f2 {
                    return Err(TypeError::GradeMismatch(format!(
                        "case branches are graded {f1} and {f2}"
                    )));
                }
                Ok((b1, f1))
            }
            Comp::Handle(inner, h) => self.check_handle_site(ctx, sig, inner, h),
            Comp::Weaken(g, body, h) => {
                for r in [g, h] {
                    if !cat.contains(r) {
                        return Err(TypeError::ForeignMorphism(r.to_string()));
                    }
                    if !cat.in_wide(r) {
                        return Err(TypeError::NotInWideSubcategory(r.to_string()));
                    }
                }
                let (a, f) = self.grade_of_computation(ctx, sig, body)?;
                if g.cod != f.dom || f.cod != h.dom {
                    return Err(TypeError::GradeMismatch(format!(
                        "cannot weaken {f} by {g} and {h}"
                    )));
                }
                Ok((a, cat.compose(&cat.compose(g, &f)?, h)?))
            }
        }
    }

    /// Checks the return clause for handled type `r`, yielding `R'`.
    fn return_type(&self, h: &Arc<Handler>, r: &Type) -> Result<Type, TypeError> {
        let key = (hkey(h), r.clone());
        if let Some(res) = self.returns.borrow().get(&key) {
            return res.clone();
        }
        let res = self.return_type_uncached(h, r);
        self.returns.borrow_mut().insert(key, res.clone());
        res
    }

    fn return_type_uncached(&self, h: &Arc<Handler>, r: &Type) -> Result<Type, TypeError> {
        if !r.is_primitive() {
            return Err(TypeError::NonPrimitiveHandledType(r.to_string()));
        }
        if let Some(ann) = &h.handled {
            if ann != r {
                return Err(mismatch(&format!("handler {}", h.name), ann, r));
            }
        }
        if !h.functor.preserves_wide() {
            return Err(TypeError::WideNotPreserved(h.name.clone()));
        }
        let gb = h
            .functor
            .map_object(&h.at)
            .ok_or_else(|| TypeError::UnknownObject(h.at.clone()))?;
        let ctx = vec![(h.ret_var.clone(), r.clone())];
        let (r2, f) = self.grade_of_computation(&ctx, &h.target, &h.ret_body)?;
        if f != Morphism::identity(gb) {
            return Err(TypeError::ReturnClauseGradeNotIdentity {
                handler: h.name.clone(),
                found: f.to_string(),
            });
        }
        if !r2.is_primitive() {
            return Err(TypeError::NonPrimitiveHandledType(r2.to_string()));
        }
        Ok(r2)
    }

    /// `Γ ⊢^G_b H : R ⇒ R'` for the return clause and every explicit clause.
    /// Default clauses are checked per continuation grade as sites demand.
    pub fn check_handler(&self, h: &Arc<Handler>, r: &Type) -> Result<HandlerProfile, TypeError> {
        let result = self.return_type(h, r)?;
        for c in &h.clauses {
            if let Some(k) = &c.k {
                self.check_clause_at(h, r, &c.op, k)?;
            }
        }
        Ok(HandlerProfile {
            functor: h.functor.name.clone(),
            at: h.at.clone(),
            handled: r.clone(),
            result,
        })
    }

    /// Checks the clause selected for `op` at continuation grade `k`.
    pub fn check_clause_at(
        &self,
        h: &Arc<Handler>,
        r: &Type,
        op: &str,
        k: &Morphism,
    ) -> Result<(), TypeError> {
        let key = (hkey(h), r.clone(), op.to_string(), k.clone());
        if let Some(res) = self.clauses.borrow().get(&key) {
            return res.clone();
        }
        let res = self.check_clause_uncached(h, r, op, k);
        self.clauses.borrow_mut().insert(key, res.clone());
        res
    }

    fn check_clause_uncached(
        &self,
        h: &Arc<Handler>,
        r: &Type,
        op: &str,
        k: &Morphism,
    ) -> Result<(), TypeError> {
        let result = self.return_type(h, r)?;
        let sig = h
            .source
            .op(op)
            .ok_or_else(|| TypeError::UnknownOp(op.to_string()))?;
        let clause = h.clause_for(op, k).ok_or_else(|| TypeError::MissingClause {
            handler: h.name.clone(),
            op: op.to_string(),
            k: k.to_string(),
        })?;
        let src = &h.source.category;
        if k.cod != h.at || !src.contains(k) {
            return Err(TypeError::GradeMismatch(format!(
                "continuation grade {k} does not end at `{}`",
                h.at
            )));
        }
        let gk = h.functor.apply(k)?;
        let expected = h.functor.apply(&src.compose(&sig.grade, k)?)?;
        let resume_ty = Type::arrow(sig.arity.clone(), result.clone(), gk);
        let ctx = extend(
            &vec![(clause.param.clone(), sig.param.clone())],
            &clause.resume,
            resume_ty,
        );
        let (ty, f) = self.grade_of_computation(&ctx, &h.target, &clause.body)?;
        if ty != result {
            return Err(mismatch(
                &format!("handler {} clause for `{op}`", h.name),
                &result,
                ty,
            ));
        }
        if f != expected {
            return Err(TypeError::ClauseGradeMismatch {
                handler: h.name.clone(),
                op: op.to_string(),
                k: k.to_string(),
                expected: expected.to_string(),
                found: f.to_string(),
            });
        }
        Ok(())
    }

    /// Tc-Handle: the handled computation may only capture primitive-typed
    /// variables; every continuation grade it can reach needs a clause.
    pub fn check_handle_site(
        &self,
        ctx: &Ctx,
        sig: &Arc<GradedSignature>,
        m: &Comp,
        h: &Arc<Handler>,
    ) -> Result<(Type, Morphism), TypeError> {
        if h.target.name != sig.name {
            return Err(TypeError::SignatureMismatch {
                handler: h.name.clone(),
                expected: sig.name.clone(),
                found: h.target.name.clone(),
            });
        }
        let delta = self.captured(ctx, m)?;
        let key = (hkey(h), delta.clone(), m.clone());
        if let Some(res) = self.sites.borrow().get(&key) {
            return res.clone();
        }
        let res = self.check_site_uncached(&delta, m, h);
        self.sites.borrow_mut().insert(key, res.clone());
        res
    }

    /// The part of `ctx` a handled computation sees: its free variables,
    /// which must all have primitive types.
    fn captured(&self, ctx: &Ctx, m: &Comp) -> Result<Ctx, TypeError> {
        let mut delta = Ctx::new();
        for x in free_vars(m) {
            let t = lookup(ctx, &x).ok_or_else(|| TypeError::UnboundVariable(x.clone()))?;
            if !t.is_primitive() {
                return Err(TypeError::NonPrimitiveCapturedVariable(x));
            }
            delta.push((x, t.clone()));
        }
        Ok(delta)
    }

    fn check_site_uncached(
        &self,
        delta: &Ctx,
        m: &Comp,
        h: &Arc<Handler>,
    ) -> Result<(Type, Morphism), TypeError> {
        let (r, f) = self.grade_of_computation(delta, &h.source, m)?;
        if !r.is_primitive() {
            return Err(TypeError::NonPrimitiveHandledType(r.to_string()));
        }
        if f.cod != h.at {
            return Err(TypeError::ObjectMismatch {
                handler: h.name.clone(),
                expected: h.at.clone(),
                found: f.cod.clone(),
            });
        }
        let profile = self.check_handler(h, &r)?;
        for (op, k) in self.site_pairs(delta, m, h)? {
            self.check_clause_at(h, &r, &op, &k)?;
        }
        Ok((profile.result, h.functor.apply(&f)?))
    }

    /// The (operation, continuation grade) pairs a handled computation can
    /// present to its handler.
    pub fn site_pairs(
        &self,
        delta: &Ctx,
        m: &Comp,
        h: &Arc<Handler>,
    ) -> Result<BTreeSet<(String, Morphism)>, TypeError> {
        let key = (hkey(h), delta.clone(), m.clone());
        if let Some(p) = self.pairs.borrow().get(&key) {
            return Ok(p.clone());
        }
        let mut col = Collector::new(self);
        let (_, f) = self.grade_of_computation(delta, &h.source, m)?;
        let start = Morphism::identity(f.cod.clone());
        col.walk(delta, &h.source, m, &[start])?;
        col.saturate()?;
        let pairs = col.found;
        self.pairs.borrow_mut().insert(key, pairs.clone());
        Ok(pairs)
    }

    /// Grade of `E[val_c y]`, the continuation of an operation call.
    pub fn continuation_grade(
        &self,
        sig: &Arc<GradedSignature>,
        plugged: &Comp,
        y: &str,
        y_ty: &Type,
    ) -> Result<Morphism, TypeError> {
        let ctx = vec![(y.to_string(), y_ty.clone())];
        Ok(self.grade_of_computation(&ctx, sig, plugged)?.1)
    }
}

/// Something that can be called through a function-typed variable.
#[derive(Clone)]
enum Callee {
    Lambda(Ctx, Arc<GradedSignature>, Lambda),
    /// The resumption of a nested handle site: running it runs the rest of
    /// the handled computation, hence the handler's clauses.
    Resumer(usize),
}

/// A nested handle site whose clause bodies run in the collected world.
struct NestedSite {
    handler: Arc<Handler>,
    handled: Type,
    pairs: Vec<(String, Morphism)>,
}

/// Static collection of continuation grades. Walks a computation with the
/// set of grades its surroundings contribute up to the handler boundary.
struct Collector<'c> {
    checker: &'c Checker,
    found: BTreeSet<(String, Morphism)>,
    callees: Vec<(Type, Callee)>,
    demands: BTreeSet<(Type, Morphism)>,
    done: HashSet<(usize, Morphism)>,
    sites: Vec<NestedSite>,
    budget: usize,
}

impl<'c> Collector<'c> {
    fn new(checker: &'c Checker) -> Self {
        Collector {
            checker,
            found: BTreeSet::new(),
            callees: Vec::new(),
            demands: BTreeSet::new(),
            done: HashSet::new(),
            sites: Vec::new(),
            budget: COLLECT_BUDGET,
        }
    }

    fn register(&mut self, ty: Type, callee: Callee) {
        self.callees.push((ty, callee));
    }

    fn walk_value(
        &mut self,
        ctx: &Ctx,
        sig: &Arc<GradedSignature>,
        v: &Value,
    ) -> Result<(), TypeError> {
        match v {
            Value::Var(_) | Value::Star => Ok(()),
            Value::Inl(w, _) | Value::Inr(w, _) => self.walk_value(ctx, sig, w),
            Value::Pair(a, b) => {
                self.walk_value(ctx, sig, a)?;
                self.walk_value(ctx, sig, b)
            }
            Value::Lam(l) => {
                let ty = self.checker.type_of_lambda(ctx, sig, l)?;
                self.register(ty, Callee::Lambda(ctx.clone(), sig.clone(), (**l).clone()));
                Ok(())
            }
        }
    }

    fn walk(
        &mut self,
        ctx: &Ctx,
        sig: &Arc<GradedSignature>,
        m: &Comp,
        ks: &[Morphism],
    ) -> Result<(), TypeError> {
        let cat = &sig.category;
        match m {
            Comp::Val(_, v) => self.walk_value(ctx, sig, v),
            Comp::Op(op, v) => {
                self.walk_value(ctx, sig, v)?;
                for k in ks {
                    self.found.insert((op.clone(), k.clone()));
                }
                Ok(())
            }
            Comp::Let(x, m1, n) => {
                let (a, _) = self.checker.grade_of_computation(ctx, sig, m1)?;
                let inner = extend(ctx, x, a);
                let (_, g) = self.checker.grade_of_computation(&inner, sig, n)?;
                self.walk(&inner, sig, n, ks)?;
                let head: Vec<Morphism> = ks
                    .iter()
                    .map(|k| cat.compose(&g, k))
                    .collect::<Result<_, _>>()?;
                self.walk(ctx, sig, m1, &head)
            }
            Comp::App(v, w) => {
                self.walk_value(ctx, sig, w)?;
                match v {
                    Value::Lam(l) => {
                        let inner = extend(ctx, &l.var, l.var_type.clone());
                        self.walk(&inner, sig, &l.body, ks)
                    }
                    _ => {
                        self.walk_value(ctx, sig, v)?;
                        let ty = self.checker.type_of_value(ctx, sig, v)?;
                        for k in ks {
                            self.demands.insert((ty.clone(), k.clone()));
                        }
                        Ok(())
                    }
                }
            }
            Comp::Split(v, x, y, body) => {
                self.walk_value(ctx, sig, v)?;
                let Type::Prod(a1, a2) = self.checker.type_of_value(ctx, sig, v)? else {
                    unreachable!("checked split");
                };
                self.walk(&extend(&extend(ctx, x, *a1), y, *a2), sig, body, ks)
            }
            Comp::Case(v, x, m1, y, m2) => {
                self.walk_value(ctx, sig, v)?;
                let Type::Sum(a1, a2) = self.checker.type_of_value(ctx, sig, v)? else {
                    unreachable!("checked case");
                };
                self.walk(&extend(ctx, x, *a1), sig, m1, ks)?;
                self.walk(&extend(ctx, y, *a2), sig, m2, ks)
            }
            Comp::Weaken(_, body, h) => {
                let tail: Vec<Morphism> = ks
                    .iter()
                    .map(|k| cat.compose(h, k))
                    .collect::<Result<_, _>>()?;
                self.walk(ctx, sig, body, &tail)
            }
            Comp::Handle(inner, h2) => {
                let delta = self.checker.captured(ctx, inner)?;
                let (r2, _) = self.checker.grade_of_computation(&delta, &h2.source, inner)?;
                let pairs: Vec<_> = self
                    .checker
                    .site_pairs(&delta, inner, h2)?
                    .into_iter()
                    .collect();
                let site = self.sites.len();
                let result = self.checker.return_type(h2, &r2)?;
                for (op, k2) in &pairs {
                    let arity = h2
                        .source
                        .op(op)
                        .ok_or_else(|| TypeError::UnknownOp(op.clone()))?
                        .arity
                        .clone();
                    let ty = Type::arrow(arity, result.clone(), h2.functor.apply(k2)?);
                    self.register(ty, Callee::Resumer(site));
                }
                self.sites.push(NestedSite {
                    handler: h2.clone(),
                    handled: r2,
                    pairs,
                });
                self.walk_site(site, ks)
            }
        }
    }

    /// Walks the return clause and every reachable clause of a nested site.
    fn walk_site(&mut self, site: usize, ks: &[Morphism]) -> Result<(), TypeError> {
        let h = self.sites[site].handler.clone();
        let r2 = self.sites[site].handled.clone();
        let pairs = self.sites[site].pairs.clone();
        let result = self.checker.return_type(&h, &r2)?;
        self.walk(
            &vec![(h.ret_var.clone(), r2.clone())],
            &h.target,
            &h.ret_body,
            ks,
        )?;
        for (op, k2) in &pairs {
            let Some(clause) = h.clause_for(op, k2) else {
                // reported when the nested site itself is checked
                continue;
            };
            let o = h.source.op(op).ok_or_else(|| TypeError::UnknownOp(op.clone()))?;
            let resume_ty = Type::arrow(o.arity.clone(), result.clone(), h.functor.apply(k2)?);
            let ctx = extend(
                &vec![(clause.param.clone(), o.param.clone())],
                &clause.resume,
                resume_ty,
            );
            self.walk(&ctx, &h.target, &clause.body, ks)?;
        }
        Ok(())
    }

    /// Runs callees against demands until nothing new is reached.
    fn saturate(&mut self) -> Result<(), TypeError> {
        loop {
            let mut work = Vec::new();
            for (ty, k) in &self.demands {
                for (i, (cty, _)) in self.callees.iter().enumerate() {
                    if cty == ty && !self.done.contains(&(i, k.clone())) {
                        work.push((i, k.clone()));
                    }
                }
            }
            if work.is_empty() {
                return Ok(());
            }
            for (i, k) in work {
                if self.budget == 0 {
                    // remaining cases are caught when the clause is selected
                    return Ok(());
                }
                self.budget -= 1;
                self.done.insert((i, k.clone()));
                match self.callees[i].1.clone() {
                    Callee::Lambda(ctx, sig, l) => {
                        let inner = extend(&ctx, &l.var, l.var_type.clone());
                        self.walk(&inner, &sig, &l.body, &[k])?;
                    }
                    Callee::Resumer(site) => self.walk_site(site, &[k])?,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_bundle, Bundle};

    fn theory(name: &str) -> Bundle {
        let path = format!("{}/theories/{name}", env!("CARGO_MANIFEST_DIR"));
        parse_bundle(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    fn judge(b: &Bundle, prog: &str) -> (Type, Morphism) {
        let p = b.program(prog).unwrap();
        Checker::new()
            .grade_of_computation(&Vec::new(), &p.sig, &p.body)
            .unwrap()
    }

    #[test]
    fn star_and_identity_lambda() {
        let b = theory("handler.ceff");
        let sig = b.signature("Sigma").unwrap();
        let c = Checker::new();
        assert_eq!(c.type_of_value(&Vec::new(), sig, &Value::Star).unwrap(), Type::Unit);
        let id = Value::lam(
            Morphism::identity("c"),
            "x",
            Type::Unit,
            Comp::val("c", Value::var("x")),
        );
        assert_eq!(
            c.type_of_value(&Vec::new(), sig, &id).unwrap(),
            Type::arrow(Type::Unit, Type::Unit, Morphism::identity("c"))
        );
    }

    #[test]
    fn ex36_grades() {
        let b = theory("ex36.ceff");
        let (ty, f) = judge(&b, "t");
        assert_eq!(f.to_string(), "τ^1_int;send_int;recv^int_int");
        assert_eq!(ty, b.aliases["int"]);
        let (ty, f) = judge(&b, "s");
        assert_eq!(f.to_string(), "recv^1_int;send_int");
        assert_eq!(ty, Type::Unit);
    }

    #[test]
    fn handler_example_judgements() {
        let b = theory("handler.ceff");
        let (ty, f) = judge(&b, "N");
        assert_eq!(f.to_string(), "g;h");
        let ab = Type::prod(b.aliases["A"].clone(), b.aliases["B"].clone());
        assert_eq!(ty, ab);
        let (ty, f) = judge(&b, "main");
        assert_eq!((ty.clone(), f.to_string()), (ab.clone(), "id_•".into()));
        let profile = Checker::new()
            .check_handler(b.handler("H").unwrap(), &ab)
            .unwrap();
        assert_eq!(profile.result, ab);
        assert_eq!(profile.at, "e");
    }

    #[test]
    fn let_of_incompatible_grades() {
        let b = theory("handler.ceff");
        let sig = b.signature("Sigma").unwrap();
        let m = Comp::let_("x", Comp::op("op2", Value::Star), Comp::op("op1", Value::Star));
        assert!(matches!(
            Checker::new().grade_of_computation(&Vec::new(), sig, &m),
            Err(TypeError::GradeMismatch(_))
        ));
    }

    #[test]
    fn captured_function_is_rejected() {
        let b = theory("handler.ceff");
        let sig = b.signature("Sigma'").unwrap();
        let fty = Type::arrow(Type::Unit, Type::Unit, Morphism::identity("•"));
        let inner = Comp::let_(
            "x",
            Comp::op("op1", Value::Star),
            Comp::let_(
                "y",
                Comp::op("op2", Value::Star),
                Comp::val("e", Value::pair(Value::var("x"), Value::var("y"))),
            ),
        );
        let m = Comp::let_(
            "u",
            Comp::App(Value::var("f"), Value::Star),
            Comp::handle(inner.clone(), b.handler("H").unwrap().clone()),
        );
        let ctx = vec![("f".to_string(), fty.clone())];
        assert!(Checker::new().grade_of_computation(&ctx, sig, &m).is_ok());
        let bad = Comp::Handle(
            Box::new(Comp::let_(
                "x",
                Comp::op("op1", Value::var("f")),
                Comp::let_(
                    "y",
                    Comp::op("op2", Value::Star),
                    Comp::val("e", Value::pair(Value::var("x"), Value::var("y"))),
                ),
            )),
            b.handler("H").unwrap().clone(),
        );
        assert_eq!(
            Checker::new().grade_of_computation(&ctx, sig, &bad),
            Err(TypeError::NonPrimitiveCapturedVariable("f".into()))
        );
    }

    #[test]
    fn missing_clause_is_reported() {
        let src = "handler H2 over Sigma to Sigma' via G at e { return z => val • z; \
                   op op1(p), r @ h => r (inr () : A); }";
        let mut full = std::fs::read_to_string(format!(
            "{}/theories/handler.ceff",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        full.push_str(src);
        let b2 = parse_bundle(&full).unwrap();
        let h2 = b2.handler("H2").unwrap().clone();
        let m = Comp::handle(Comp::op("op2", Value::Star), h2);
        let err = Checker::new()
            .grade_of_computation(&Vec::new(), b2.signature("Sigma'").unwrap(), &m)
            .unwrap_err();
        assert!(matches!(err, TypeError::MissingClause { ref op, ref k, .. } if op == "op2" && k == "id_e"));
    }

    #[test]
    fn mutable_store_judgements() {
        let b = theory("mutable_store.ceff");
        let (ty, f) = judge(&b, "N");
        assert_eq!(ty, b.aliases["B"]);
        assert_eq!(f.to_string(), "f^1_A;f^A_B");
        let c = Checker::new();
        for alpha in ["1", "A", "B"] {
            let h = b.handler(&format!("H_{alpha}")).unwrap();
            let r = if alpha == "1" { Type::Unit } else { b.aliases[alpha].clone() };
            let p = c.check_handler(h, &r).unwrap();
            assert_eq!(p.result, b.aliases["Store"]);
        }
        assert_eq!(judge(&b, "handled").1.to_string(), "id_store");
        assert_eq!(judge(&b, "closed").1.to_string(), "id_•");
    }
}
