//! Abstract syntax of values, computations, handlers and types.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;

use crate::grading::{GradingCategory, GradingFunctor, Morphism};
use crate::signature::GradedSignature;

mod lexer;
mod parser;
mod pretty;
mod subst;

pub use parser::{parse_bundle, parse_comp_in, parse_value_in, ParseError, ParseErrorKind};
pub use subst::{fresh_name, substitute, substitute_value};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Unit,
    Prod(Box<Type>, Box<Type>),
    Sum(Box<Type>, Box<Type>),
    Arrow(Box<Type>, Box<Type>, Morphism),
}

impl Type {
    pub fn prod(a: Type, b: Type) -> Type {
        Type::Prod(Box::new(a), Box::new(b))
    }

    pub fn sum(a: Type, b: Type) -> Type {
        Type::Sum(Box::new(a), Box::new(b))
    }

    pub fn arrow(a: Type, b: Type, f: Morphism) -> Type {
        Type::Arrow(Box::new(a), Box::new(b), f)
    }

    /// Built from unit, products and sums only.
    pub fn is_primitive(&self) -> bool {
        match self {
            Type::Unit => true,
            Type::Prod(a, b) | Type::Sum(a, b) => a.is_primitive() && b.is_primitive(),
            Type::Arrow(..) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Var(String),
    Star,
    /// The type is the whole sum `A + B`.
    Inl(Box<Value>, Type),
    Inr(Box<Value>, Type),
    Pair(Box<Value>, Box<Value>),
    Lam(Box<Lambda>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Lambda {
    pub grade: Morphism,
    pub var: String,
    pub var_type: Type,
    pub body: Comp,
}

impl Value {
    pub fn var(x: &str) -> Value {
        Value::Var(x.to_string())
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn inl(v: Value, ty: Type) -> Value {
        Value::Inl(Box::new(v), ty)
    }

    pub fn inr(v: Value, ty: Type) -> Value {
        Value::Inr(Box::new(v), ty)
    }

    pub fn lam(grade: Morphism, var: &str, var_type: Type, body: Comp) -> Value {
        Value::Lam(Box::new(Lambda {
            grade,
            var: var.to_string(),
            var_type,
            body,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Comp {
    Val(String, Value),
    Let(String, Box<Comp>, Box<Comp>),
    App(Value, Value),
    Op(String, Value),
    Split(Value, String, String, Box<Comp>),
    Case(Value, String, Box<Comp>, String, Box<Comp>),
    Handle(Box<Comp>, Arc<Handler>),
    /// `weaken g { M } h`: pre- and post-composition by wide morphisms.
    Weaken(Morphism, Box<Comp>, Morphism),
}

impl Comp {
    pub fn val(obj: &str, v: Value) -> Comp {
        Comp::Val(obj.to_string(), v)
    }

    pub fn let_(x: &str, m: Comp, n: Comp) -> Comp {
        Comp::Let(x.to_string(), Box::new(m), Box::new(n))
    }

    pub fn op(name: &str, v: Value) -> Comp {
        Comp::Op(name.to_string(), v)
    }

    pub fn split(v: Value, x: &str, y: &str, m: Comp) -> Comp {
        Comp::Split(v, x.to_string(), y.to_string(), Box::new(m))
    }

    pub fn case(v: Value, x: &str, m1: Comp, y: &str, m2: Comp) -> Comp {
        Comp::Case(v, x.to_string(), Box::new(m1), y.to_string(), Box::new(m2))
    }

    pub fn handle(m: Comp, h: Arc<Handler>) -> Comp {
        Comp::Handle(Box::new(m), h)
    }

    pub fn weaken(g: Morphism, m: Comp, h: Morphism) -> Comp {
        Comp::Weaken(g, Box::new(m), h)
    }

    pub fn size(&self) -> usize {
        match self {
            Comp::Val(_, v) | Comp::Op(_, v) => 1 + v.size(),
            Comp::Let(_, m, n) => 1 + m.size() + n.size(),
            Comp::App(v, w) => 1 + v.size() + w.size(),
            Comp::Split(v, _, _, m) => 1 + v.size() + m.size(),
            Comp::Case(v, _, m1, _, m2) => 1 + v.size() + m1.size() + m2.size(),
            Comp::Handle(m, _) | Comp::Weaken(_, m, _) => 1 + m.size(),
        }
    }
}

impl Value {
    pub fn size(&self) -> usize {
        match self {
            Value::Var(_) | Value::Star => 1,
            Value::Inl(v, _) | Value::Inr(v, _) => 1 + v.size(),
            Value::Pair(a, b) => 1 + a.size() + b.size(),
            Value::Lam(l) => 1 + l.body.size(),
        }
    }
}

/// An operation clause `op(p), r => M`, at a fixed continuation grade `k`
/// or, when `k` is absent, uniformly for every `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpClause {
    pub op: String,
    pub k: Option<Morphism>,
    pub param: String,
    pub resume: String,
    pub body: Comp,
}

/// A handler from `source` computations at object `at` into `target`
/// computations, regraded along `functor`.
pub struct Handler {
    pub name: String,
    pub source: Arc<GradedSignature>,
    pub target: Arc<GradedSignature>,
    pub functor: Arc<GradingFunctor>,
    pub at: String,
    /// Optional annotation of the handled type `R`.
    pub handled: Option<Type>,
    pub ret_var: String,
    pub ret_body: Comp,
    pub clauses: Vec<OpClause>,
}

impl Handler {
    /// The clause that handles `op` under continuation grade `k`: an
    /// explicit clause for exactly `k` if there is one, else the default.
    pub fn clause_for(&self, op: &str, k: &Morphism) -> Option<&OpClause> {
        self.clauses
            .iter()
            .find(|c| c.op == op && c.k.as_ref() == Some(k))
            .or_else(|| self.clauses.iter().find(|c| c.op == op && c.k.is_none()))
    }
}

// Handlers are top-level declarations with unique names.
impl PartialEq for Handler {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Eq for Handler {}

impl std::hash::Hash for Handler {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name.hash(state);
    }
}

impl fmt::Debug for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Handler({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub struct Program {
    pub name: String,
    pub sig: Arc<GradedSignature>,
    pub ty: Type,
    pub grade: Morphism,
    pub body: Comp,
}

/// Everything declared in one source file.
#[derive(Debug, Default, Clone)]
pub struct Bundle {
    pub categories: IndexMap<String, Arc<GradingCategory>>,
    pub functors: IndexMap<String, Arc<GradingFunctor>>,
    pub signatures: IndexMap<String, Arc<GradedSignature>>,
    pub handlers: IndexMap<String, Arc<Handler>>,
    pub programs: IndexMap<String, Program>,
    pub aliases: IndexMap<String, Type>,
}

impl Bundle {
    pub fn program(&self, name: &str) -> Option<&Program> {
        self.programs.get(name)
    }

    pub fn handler(&self, name: &str) -> Option<&Arc<Handler>> {
        self.handlers.get(name)
    }

    pub fn signature(&self, name: &str) -> Option<&Arc<GradedSignature>> {
        self.signatures.get(name)
    }
}

pub fn free_vars(m: &Comp) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fv_comp(m, &mut Vec::new(), &mut out);
    out
}

pub fn free_vars_value(v: &Value) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fv_value(v, &mut Vec::new(), &mut out);
    out
}

fn fv_value(v: &Value, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match v {
        Value::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Value::Star => {}
        Value::Inl(v, _) | Value::Inr(v, _) => fv_value(v, bound, out),
        Value::Pair(a, b) => {
            fv_value(a, bound, out);
            fv_value(b, bound, out);
        }
        Value::Lam(l) => {
            bound.push(l.var.clone());
            fv_comp(&l.body, bound, out);
            bound.pop();
        }
    }
}

fn fv_comp(m: &Comp, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match m {
        Comp::Val(_, v) | Comp::Op(_, v) => fv_value(v, bound, out),
        Comp::Let(x, m, n) => {
            fv_comp(m, bound, out);
            bound.push(x.clone());
            fv_comp(n, bound, out);
            bound.pop();
        }
        Comp::App(v, w) => {
            fv_value(v, bound, out);
            fv_value(w, bound, out);
        }
        Comp::Split(v, x, y, m) => {
            fv_value(v, bound, out);
            bound.push(x.clone());
            bound.push(y.clone());
            fv_comp(m, bound, out);
            bound.pop();
            bound.pop();
        }
        Comp::Case(v, x, m1, y, m2) => {
            fv_value(v, bound, out);
            bound.push(x.clone());
            fv_comp(m1, bound, out);
            bound.pop();
            bound.push(y.clone());
            fv_comp(m2, bound, out);
            bound.pop();
        }
        // handlers are closed declarations
        Comp::Handle(m, _) | Comp::Weaken(_, m, _) => fv_comp(m, bound, out),
    }
}

/// Every variable name occurring in a term, bound or free.
pub fn all_names(m: &Comp, out: &mut BTreeSet<String>) {
    match m {
        Comp::Val(_, v) | Comp::Op(_, v) => all_names_value(v, out),
        Comp::Let(x, m, n) => {
            out.insert(x.clone());
            all_names(m, out);
            all_names(n, out);
        }
        Comp::App(v, w) => {
            all_names_value(v, out);
            all_names_value(w, out);
        }
        Comp::Split(v, x, y, m) => {
            all_names_value(v, out);
            out.insert(x.clone());
            out.insert(y.clone());
            all_names(m, out);
        }
        Comp::Case(v, x, m1, y, m2) => {
            all_names_value(v, out);
            out.insert(x.clone());
            out.insert(y.clone());
            all_names(m1, out);
            all_names(m2, out);
        }
        Comp::Handle(m, _) | Comp::Weaken(_, m, _) => all_names(m, out),
    }
}

pub fn all_names_value(v: &Value, out: &mut BTreeSet<String>) {
    match v {
        Value::Var(x) => {
            out.insert(x.clone());
        }
        Value::Star => {}
        Value::Inl(v, _) | Value::Inr(v, _) => all_names_value(v, out),
        Value::Pair(a, b) => {
            all_names_value(a, out);
            all_names_value(b, out);
        }
        Value::Lam(l) => {
            out.insert(l.var.clone());
            all_names(&l.body, out);
        }
    }
}
