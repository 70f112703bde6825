//! Denotational semantics: types as finite sets or function spaces,
//! computations as graded term trees, handlers as folds over trees.

use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::freemodel::{coerce, graft, node, unit_leaf, Shape, TermTree, TreeError};
use crate::grading::{GradingError, Morphism};
use crate::signature::{enumerate_type, index_of, GradedSignature};
use crate::syntax::{Comp, Handler, Program, Type, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DenoteError {
    #[error("handler {handler} has no clause for `{op}` at continuation grade {k}")]
    MissingClause { handler: String, op: String, k: String },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("ill-typed term: {0}")]
    IllTyped(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Grading(#[from] GradingError),
}

pub type SemFn = Arc<dyn Fn(&SemValue) -> Result<TermTree, DenoteError> + Send + Sync>;

#[derive(Clone)]
pub enum SemValue {
    Star,
    Pair(Box<SemValue>, Box<SemValue>),
    Inl(Box<SemValue>),
    Inr(Box<SemValue>),
    Fun(SemFn),
}

impl SemValue {
    pub fn pair(a: SemValue, b: SemValue) -> SemValue {
        SemValue::Pair(Box::new(a), Box::new(b))
    }

    pub fn inl(v: SemValue) -> SemValue {
        SemValue::Inl(Box::new(v))
    }

    pub fn inr(v: SemValue) -> SemValue {
        SemValue::Inr(Box::new(v))
    }

    pub fn try_eq(&self, other: &SemValue) -> Result<bool, TreeError> {
        match (self, other) {
            (SemValue::Fun(_), _) | (_, SemValue::Fun(_)) => Err(TreeError::NonComparable),
            (SemValue::Star, SemValue::Star) => Ok(true),
            (SemValue::Pair(a, b), SemValue::Pair(c, d)) => Ok(a.try_eq(c)? && b.try_eq(d)?),
            (SemValue::Inl(a), SemValue::Inl(b)) | (SemValue::Inr(a), SemValue::Inr(b)) => {
                a.try_eq(b)
            }
            _ => Ok(false),
        }
    }

    pub fn contains_function(&self) -> bool {
        match self {
            SemValue::Star => false,
            SemValue::Pair(a, b) => a.contains_function() || b.contains_function(),
            SemValue::Inl(a) | SemValue::Inr(a) => a.contains_function(),
            SemValue::Fun(_) => true,
        }
    }

    pub fn apply(&self, arg: &SemValue) -> Result<TermTree, DenoteError> {
        match self {
            SemValue::Fun(f) => f(arg),
            _ => Err(DenoteError::IllTyped(format!("applied non-function {self}"))),
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            SemValue::Star => json!("()"),
            SemValue::Pair(a, b) => json!({"pair": [a.to_json(), b.to_json()]}),
            SemValue::Inl(a) => json!({"inl": a.to_json()}),
            SemValue::Inr(a) => json!({"inr": a.to_json()}),
            SemValue::Fun(_) => json!("<function>"),
        }
    }

    /// The value as a closed term of type `ty`.
    pub fn to_value(&self, ty: &Type) -> Option<Value> {
        match (self, ty) {
            (SemValue::Star, Type::Unit) => Some(Value::Star),
            (SemValue::Pair(a, b), Type::Prod(ta, tb)) => {
                Some(Value::pair(a.to_value(ta)?, b.to_value(tb)?))
            }
            (SemValue::Inl(a), Type::Sum(ta, _)) => Some(Value::inl(a.to_value(ta)?, ty.clone())),
            (SemValue::Inr(b), Type::Sum(_, tb)) => Some(Value::inr(b.to_value(tb)?, ty.clone())),
            _ => None,
        }
    }
}

// Panics on functions, which have no decidable equality.
impl PartialEq for SemValue {
    fn eq(&self, other: &Self) -> bool {
        self.try_eq(other).expect("compared function values")
    }
}

impl fmt::Debug for SemValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for SemValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemValue::Star => write!(f, "()"),
            SemValue::Pair(a, b) => write!(f, "({a}, {b})"),
            SemValue::Inl(a) => write!(f, "inl {}", Atom(a)),
            SemValue::Inr(a) => write!(f, "inr {}", Atom(a)),
            SemValue::Fun(_) => write!(f, "<function>"),
        }
    }
}

struct Atom<'a>(&'a SemValue);

impl fmt::Display for Atom<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            SemValue::Inl(_) | SemValue::Inr(_) => write!(f, "({})", self.0),
            v => write!(f, "{v}"),
        }
    }
}

/// `⟦A⟧`.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Finite(Vec<SemValue>),
    /// Functions from `⟦arg⟧` into trees of grade `grade` over `⟦result⟧`.
    Functions { arg: Type, result: Type, grade: Morphism },
}

pub fn denote_type(ty: &Type) -> Domain {
    match ty {
        Type::Arrow(a, b, f) => Domain::Functions {
            arg: (**a).clone(),
            result: (**b).clone(),
            grade: f.clone(),
        },
        _ => Domain::Finite(enumerate_type(ty).expect("first-order types are finite")),
    }
}

/// `⟦Γ⟧`, by name; later entries shadow earlier ones.
pub type Env = Vec<(String, SemValue)>;

fn bind(env: &Env, x: &str, v: SemValue) -> Env {
    let mut out: Env = env.iter().filter(|(y, _)| y != x).cloned().collect();
    out.push((x.to_string(), v));
    out
}

pub fn denote_value(sig: &Arc<GradedSignature>, env: &Env, v: &Value) -> Result<SemValue, DenoteError> {
    Ok(match v {
        Value::Var(x) => env
            .iter()
            .rev()
            .find(|(y, _)| y == x)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| DenoteError::Unbound(x.clone()))?,
        Value::Star => SemValue::Star,
        Value::Pair(a, b) => SemValue::pair(denote_value(sig, env, a)?, denote_value(sig, env, b)?),
        Value::Inl(a, _) => SemValue::inl(denote_value(sig, env, a)?),
        Value::Inr(a, _) => SemValue::inr(denote_value(sig, env, a)?),
        Value::Lam(l) => {
            let env = env.clone();
            let sig = sig.clone();
            let l = (**l).clone();
            SemValue::Fun(Arc::new(move |arg: &SemValue| {
                denote_computation(&sig, &bind(&env, &l.var, arg.clone()), &l.body)
            }))
        }
    })
}

pub fn denote_computation(
    sig: &Arc<GradedSignature>,
    env: &Env,
    m: &Comp,
) -> Result<TermTree, DenoteError> {
    let cat = &sig.category;
    match m {
        Comp::Val(a, v) => Ok(unit_leaf(a, denote_value(sig, env, v)?)),
        Comp::Let(x, m1, n) => {
            let head = denote_computation(sig, env, m1)?;
            graft(cat, &head, &mut |_, v| {
                denote_computation(sig, &bind(env, x, v.clone()), n)
            })
        }
        Comp::App(f, a) => denote_value(sig, env, f)?.apply(&denote_value(sig, env, a)?),
        Comp::Op(op, v) => {
            let o = sig
                .op(op)
                .ok_or_else(|| DenoteError::IllTyped(format!("unknown operation `{op}`")))?;
            let param = denote_value(sig, env, v)?;
            let c = o.grade.cod.clone();
            let children = enumerate_type(&o.arity)
                .ok_or_else(|| DenoteError::IllTyped(format!("arity of `{op}` is not finite")))?
                .into_iter()
                .map(|y| unit_leaf(&c, y))
                .collect();
            Ok(node(cat, op, &o.grade, param, Morphism::identity(c), children)?)
        }
        Comp::Split(v, x, y, body) => match denote_value(sig, env, v)? {
            SemValue::Pair(a, b) => denote_computation(sig, &bind(&bind(env, x, *a), y, *b), body),
            other => Err(DenoteError::IllTyped(format!("split of {other}"))),
        },
        Comp::Case(v, x, m1, y, m2) => match denote_value(sig, env, v)? {
            SemValue::Inl(a) => denote_computation(sig, &bind(env, x, *a), m1),
            SemValue::Inr(b) => denote_computation(sig, &bind(env, y, *b), m2),
            other => Err(DenoteError::IllTyped(format!("case of {other}"))),
        },
        Comp::Handle(inner, h) => {
            let t = denote_computation(&h.source, env, inner)?;
            denote_handler(h, &t)
        }
        Comp::Weaken(g, body, h) => {
            let t = denote_computation(sig, env, body)?;
            let post = graft::<DenoteError, _>(cat, &t, &mut |_, v| {
                Ok(coerce(cat, h, unit_leaf(&h.cod, v.clone()))?)
            })?;
            Ok(coerce(cat, g, post)?)
        }
    }
}

/// Folds a tree of `H.source` computations into one of `H.target`
/// computations: leaves go through the return clause, operation nodes
/// through the clause selected by their continuation grade with the folded
/// children as the resumption, and coercions along the handler's functor.
pub fn denote_handler(h: &Arc<Handler>, t: &TermTree) -> Result<TermTree, DenoteError> {
    match t.shape() {
        Shape::Leaf { val, .. } => {
            let env = vec![(h.ret_var.clone(), val.clone())];
            denote_computation(&h.target, &env, &h.ret_body)
        }
        Shape::Node {
            op,
            param,
            k,
            children,
            ..
        } => {
            let clause = h.clause_for(op, k).ok_or_else(|| DenoteError::MissingClause {
                handler: h.name.clone(),
                op: op.clone(),
                k: k.to_string(),
            })?;
            let arity = h
                .source
                .op(op)
                .ok_or_else(|| DenoteError::IllTyped(format!("unknown operation `{op}`")))?
                .arity
                .clone();
            let folded = Arc::new(
                children
                    .iter()
                    .map(|c| denote_handler(h, c))
                    .collect::<Result<Vec<_>, _>>()?,
            );
            let resume = SemValue::Fun(Arc::new(move |y: &SemValue| {
                let i = index_of(&arity, y)
                    .ok_or_else(|| DenoteError::IllTyped(format!("{y} resumes at the wrong type")))?;
                Ok(folded[i].clone())
            }));
            let env = bind(
                &vec![(clause.param.clone(), param.clone())],
                &clause.resume,
                resume,
            );
            denote_computation(&h.target, &env, &clause.body)
        }
        Shape::Coerce { r, child } => {
            let inner = denote_handler(h, child)?;
            let gr = h.functor.apply(r)?;
            Ok(coerce(&h.target.category, &gr, inner)?)
        }
    }
}

pub fn denote_program(p: &Program) -> Result<TermTree, DenoteError> {
    denote_computation(&p.sig, &Vec::new(), &p.body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_bundle, Bundle};

    fn theory(name: &str) -> Bundle {
        let path = format!("{}/theories/{name}", env!("CARGO_MANIFEST_DIR"));
        parse_bundle(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    fn b2() -> Type {
        Type::sum(Type::Unit, Type::Unit)
    }

    #[test]
    fn types() {
        assert_eq!(denote_type(&Type::Unit), Domain::Finite(vec![SemValue::Star]));
        match denote_type(&b2()) {
            Domain::Finite(v) => assert_eq!(v.len(), 2),
            d => panic!("{d:?}"),
        }
        let f = Type::arrow(Type::Unit, Type::Unit, Morphism::identity("a"));
        assert!(matches!(denote_type(&f), Domain::Functions { .. }));
    }

    #[test]
    fn identity_lambda_is_unit() {
        let b = theory("handler.ceff");
        let sig = b.signature("Sigma").unwrap();
        let four = Type::sum(b2(), b2());
        let lam = Value::lam(Morphism::identity("c"), "x", four.clone(), Comp::val("c", Value::var("x")));
        let f = denote_value(sig, &Vec::new(), &lam).unwrap();
        let dom = enumerate_type(&four).unwrap();
        assert_eq!(dom.len(), 4);
        for w in dom {
            assert_eq!(f.apply(&w).unwrap(), unit_leaf("c", w.clone()));
        }
    }

    #[test]
    fn operation_tree_and_right_unit() {
        let b = theory("handler.ceff");
        let sig = b.signature("Sigma").unwrap();
        let call = Comp::op("op1", Value::Star);
        let t = denote_computation(sig, &Vec::new(), &call).unwrap();
        assert_eq!(t.to_string(), "do(op1, (), id_d)[e(d, inl ()), e(d, inr ())]");
        assert_eq!(t.grade().to_string(), "g");
        let relet = Comp::let_("x", call, Comp::val("d", Value::var("x")));
        assert_eq!(denote_computation(sig, &Vec::new(), &relet).unwrap(), t);
    }

    #[test]
    fn handler_example_denotes_a_leaf() {
        let b = theory("handler.ceff");
        let n = denote_program(b.program("N").unwrap()).unwrap();
        assert_eq!(n.grade().to_string(), "g;h");
        let main = denote_program(b.program("main").unwrap()).unwrap();
        assert_eq!(main.to_string(), "e(•, (inr (), inr (inl ())))");
        let folded = denote_handler(b.handler("H").unwrap(), &n).unwrap();
        assert_eq!(folded, main);
    }

    #[test]
    fn return_clause_fold() {
        let b = theory("handler.ceff");
        let v = SemValue::pair(SemValue::inr(SemValue::Star), SemValue::inl(SemValue::Star));
        let out = denote_handler(b.handler("H").unwrap(), &unit_leaf("e", v.clone())).unwrap();
        assert_eq!(out, unit_leaf("•", v));
    }

    #[test]
    fn ex36_grades_are_preserved() {
        let b = theory("ex36.ceff");
        for name in ["t", "s"] {
            let p = b.program(name).unwrap();
            assert_eq!(denote_program(p).unwrap().grade(), &p.grade);
        }
    }

    #[test]
    fn function_values_refuse_comparison() {
        let f = SemValue::Fun(Arc::new(|v: &SemValue| Ok(unit_leaf("a", v.clone()))));
        assert_eq!(f.try_eq(&SemValue::Star), Err(TreeError::NonComparable));
        assert!(f.contains_function());
    }
}
