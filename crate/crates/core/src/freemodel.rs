//! Graded Σ-term trees, finite Σ-models and interpretation of terms in them.
//!
//! A tree of grade `f` is the free model's element at `f`: leaves `e(a, x)`
//! have grade `id_a`, an operation node `do(op, p, {t_y})` whose children
//! share grade `k` has grade `g;k` for `op` graded `g`, and a coercion node
//! `coerce(r, t)` (for `r` in the wide subcategory) has grade `r;grade(t)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::denote::SemValue;
use crate::grading::{GradingCategory, GradingError, Morphism};
use crate::signature::{enumerate_type, index_of, GradedSignature};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("subtrees disagree on grade: {expected} versus {found}")]
    GradeHeterogeneous { expected: String, found: String },
    #[error("model has no interpretation of `{op}` at {k}")]
    MissingInterp { op: String, k: String },
    #[error("model has no carrier at {0}")]
    MissingCarrier(String),
    #[error("equation {index} relates grade {left} to grade {right}")]
    GradeMismatchInEquation {
        index: usize,
        left: String,
        right: String,
    },
    #[error("function values cannot be compared")]
    NonComparable,
    #[error("coercion nodes have no interpretation in a Σ-model")]
    CoercionInModel,
    #[error("malformed model: {0}")]
    BadModel(String),
    #[error("malformed tree: {0}")]
    BadTree(String),
    #[error(transparent)]
    Grading(#[from] GradingError),
}

#[derive(Clone)]
pub enum Shape {
    Leaf {
        obj: String,
        val: SemValue,
    },
    Node {
        op: String,
        op_grade: Morphism,
        param: SemValue,
        k: Morphism,
        children: Vec<TermTree>,
    },
    Coerce {
        r: Morphism,
        child: Box<TermTree>,
    },
}

/// A term tree together with its grade in normal form.
#[derive(Clone)]
pub struct TermTree {
    grade: Morphism,
    shape: Shape,
}

pub fn unit_leaf(obj: &str, val: SemValue) -> TermTree {
    TermTree {
        grade: Morphism::identity(obj),
        shape: Shape::Leaf {
            obj: obj.to_string(),
            val,
        },
    }
}

/// `do(op, param, children)`, every child graded `k`.
pub fn node(
    cat: &GradingCategory,
    op: &str,
    op_grade: &Morphism,
    param: SemValue,
    k: Morphism,
    children: Vec<TermTree>,
) -> Result<TermTree, TreeError> {
    for c in &children {
        if c.grade != k {
            return Err(TreeError::GradeHeterogeneous {
                expected: k.to_string(),
                found: c.grade.to_string(),
            });
        }
    }
    Ok(TermTree {
        grade: cat.compose(op_grade, &k)?,
        shape: Shape::Node {
            op: op.to_string(),
            op_grade: op_grade.clone(),
            param,
            k,
            children,
        },
    })
}

/// `coerce(r, t)` kept in normal form: identities vanish and directly
/// nested coercions merge.
pub fn coerce(cat: &GradingCategory, r: &Morphism, t: TermTree) -> Result<TermTree, TreeError> {
    if r.cod != t.grade.dom {
        return Err(TreeError::BadTree(format!(
            "cannot coerce a tree of grade {} by {r}",
            t.grade
        )));
    }
    if r.is_identity() {
        return Ok(t);
    }
    let grade = cat.compose(r, &t.grade)?;
    match t.shape {
        Shape::Coerce { r: inner, child } => {
            let merged = cat.compose(r, &inner)?;
            if merged.is_identity() {
                Ok(*child)
            } else {
                Ok(TermTree {
                    grade,
                    shape: Shape::Coerce { r: merged, child },
                })
            }
        }
        shape => Ok(TermTree {
            grade,
            shape: Shape::Coerce {
                r: r.clone(),
                child: Box::new(TermTree {
                    grade: t.grade,
                    shape,
                }),
            },
        }),
    }
}

/// Replaces every leaf `e(b, x)` by `phi(b, x)`; all images must share one
/// grade `g`, and the result has grade `grade(t);g`.
pub fn graft<E, F>(cat: &GradingCategory, t: &TermTree, phi: &mut F) -> Result<TermTree, E>
where
    E: From<TreeError>,
    F: FnMut(&str, &SemValue) -> Result<TermTree, E>,
{
    let mut image_grade: Option<Morphism> = None;
    graft_inner(cat, t, phi, &mut image_grade)
}

fn graft_inner<E, F>(
    cat: &GradingCategory,
    t: &TermTree,
    phi: &mut F,
    image_grade: &mut Option<Morphism>,
) -> Result<TermTree, E>
where
    E: From<TreeError>,
    F: FnMut(&str, &SemValue) -> Result<TermTree, E>,
{
    match &t.shape {
        Shape::Leaf { obj, val } => {
            let out = phi(obj, val)?;
            match image_grade {
                Some(g) if *g != out.grade => {
                    return Err(TreeError::GradeHeterogeneous {
                        expected: g.to_string(),
                        found: out.grade.to_string(),
                    }
                    .into())
                }
                Some(_) => {}
                None => *image_grade = Some(out.grade.clone()),
            }
            Ok(out)
        }
        Shape::Node {
            op,
            op_grade,
            param,
            children,
            ..
        } => {
            let children = children
                .iter()
                .map(|c| graft_inner(cat, c, phi, image_grade))
                .collect::<Result<Vec<_>, E>>()?;
            let k = children[0].grade.clone();
            Ok(node(cat, op, op_grade, param.clone(), k, children)?)
        }
        Shape::Coerce { r, child } => {
            let child = graft_inner(cat, child, phi, image_grade)?;
            Ok(coerce(cat, r, child)?)
        }
    }
}

impl TermTree {
    pub fn grade(&self) -> &Morphism {
        &self.grade
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn depth(&self) -> usize {
        match &self.shape {
            Shape::Leaf { .. } => 0,
            Shape::Node { children, .. } => {
                1 + children.iter().map(TermTree::depth).max().unwrap_or(0)
            }
            Shape::Coerce { child, .. } => child.depth(),
        }
    }

    pub fn size(&self) -> usize {
        match &self.shape {
            Shape::Leaf { .. } => 1,
            Shape::Node { children, .. } => 1 + children.iter().map(TermTree::size).sum::<usize>(),
            Shape::Coerce { child, .. } => 1 + child.size(),
        }
    }

    /// Structural equality; errors when a function value would be compared.
    pub fn try_eq(&self, other: &TermTree) -> Result<bool, TreeError> {
        if self.grade != other.grade {
            return Ok(false);
        }
        match (&self.shape, &other.shape) {
            (Shape::Leaf { obj: a, val: x }, Shape::Leaf { obj: b, val: y }) => {
                Ok(a == b && x.try_eq(y)?)
            }
            (
                Shape::Node {
                    op: o1,
                    param: p1,
                    k: k1,
                    children: c1,
                    ..
                },
                Shape::Node {
                    op: o2,
                    param: p2,
                    k: k2,
                    children: c2,
                    ..
                },
            ) => {
                if o1 != o2 || k1 != k2 || c1.len() != c2.len() || !p1.try_eq(p2)? {
                    return Ok(false);
                }
                for (a, b) in c1.iter().zip(c2) {
                    if !a.try_eq(b)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            (Shape::Coerce { r: r1, child: c1 }, Shape::Coerce { r: r2, child: c2 }) => {
                Ok(r1 == r2 && c1.try_eq(c2)?)
            }
            _ => Ok(false),
        }
    }

    /// Whether some leaf carries a function value.
    pub fn has_function_leaf(&self) -> bool {
        match &self.shape {
            Shape::Leaf { val, .. } => val.contains_function(),
            Shape::Node { children, .. } => children.iter().any(TermTree::has_function_leaf),
            Shape::Coerce { child, .. } => child.has_function_leaf(),
        }
    }

    /// Leaf payloads in left-to-right order.
    pub fn leaves(&self) -> Vec<&SemValue> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a SemValue>) {
        match &self.shape {
            Shape::Leaf { val, .. } => out.push(val),
            Shape::Node { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
            Shape::Coerce { child, .. } => child.collect_leaves(out),
        }
    }

    pub fn to_json(&self) -> Json {
        match &self.shape {
            Shape::Leaf { obj, val } => json!({"leaf": {"obj": obj, "val": val.to_json()}}),
            Shape::Node {
                op,
                param,
                k,
                children,
                ..
            } => json!({"node": {
                "op": op,
                "param": param.to_json(),
                "k": k.to_string(),
                "children": children.iter().map(TermTree::to_json).collect::<Vec<_>>(),
            }}),
            Shape::Coerce { r, child } => {
                json!({"coerce": {"r": r.to_string(), "child": child.to_json()}})
            }
        }
    }
}

// Panics on function leaves, which have no decidable equality; use
// `try_eq` where that can happen.
impl PartialEq for TermTree {
    fn eq(&self, other: &Self) -> bool {
        self.try_eq(other).expect("compared term trees with function leaves")
    }
}

impl fmt::Debug for TermTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for TermTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            Shape::Leaf { obj, val } => write!(f, "e({obj}, {val})"),
            Shape::Node {
                op,
                param,
                k,
                children,
                ..
            } => {
                write!(f, "do({op}, {param}, {k})[")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, "]")
            }
            Shape::Coerce { r, child } => write!(f, "coerce({r})[{child}]"),
        }
    }
}

/// A Σ-model at object `a` restricted to finitely many grades: carriers
/// `I(k)` for chosen `k` into `a`, each the set `{0, .., n-1}`, and tables
/// for `op` at `k` mapping `P × I(k)^Q` to `I(g;k)`.
#[derive(Debug, Clone)]
pub struct FiniteModel {
    pub at: String,
    sig: Arc<GradedSignature>,
    carrier: BTreeMap<Morphism, usize>,
    interp: HashMap<(String, Morphism), Vec<usize>>,
}

impl FiniteModel {
    pub fn new(sig: Arc<GradedSignature>, at: &str) -> FiniteModel {
        FiniteModel {
            at: at.to_string(),
            sig,
            carrier: BTreeMap::new(),
            interp: HashMap::new(),
        }
    }

    pub fn signature(&self) -> &Arc<GradedSignature> {
        &self.sig
    }

    pub fn with_carrier(mut self, k: Morphism, size: usize) -> Result<Self, TreeError> {
        if k.cod != self.at {
            return Err(TreeError::BadModel(format!("{k} does not end at {}", self.at)));
        }
        if size == 0 {
            return Err(TreeError::BadModel(format!("empty carrier at {k}")));
        }
        self.carrier.insert(k, size);
        Ok(self)
    }

    pub fn carrier_size(&self, k: &Morphism) -> Option<usize> {
        self.carrier.get(k).copied()
    }

    pub fn grades(&self) -> impl Iterator<Item = &Morphism> {
        self.carrier.keys()
    }

    /// The number of table entries `op` at `k` needs, and its codomain size.
    pub fn table_shape(&self, op: &str, k: &Morphism) -> Result<(usize, usize), TreeError> {
        let o = self.sig.op(op).ok_or_else(|| TreeError::MissingInterp {
            op: op.to_string(),
            k: k.to_string(),
        })?;
        let n = self
            .carrier_size(k)
            .ok_or_else(|| TreeError::MissingCarrier(k.to_string()))?;
        let out = self.sig.category.compose(&o.grade, k)?;
        let m = self
            .carrier_size(&out)
            .ok_or_else(|| TreeError::MissingCarrier(out.to_string()))?;
        let p = enumerate_type(&o.param).map(|v| v.len()).unwrap_or(0);
        let q = enumerate_type(&o.arity).map(|v| v.len()).unwrap_or(0);
        Ok((p * n.pow(q as u32), m))
    }

    /// Sets the table for `op` at `k`; entry `p * n^q + Σ x_i n^(q-1-i)` is
    /// the image of parameter index `p` and children `x_0 .. x_{q-1}`.
    pub fn with_table(mut self, op: &str, k: Morphism, table: Vec<usize>) -> Result<Self, TreeError> {
        let (len, m) = self.table_shape(op, &k)?;
        if table.len() != len || table.iter().any(|&x| x >= m) {
            return Err(TreeError::BadModel(format!(
                "table for `{op}` at {k} must have {len} entries below {m}"
            )));
        }
        self.interp.insert((op.to_string(), k), table);
        Ok(self)
    }

    /// Sets the table for `op` at `k` from a function.
    pub fn with_fn(
        self,
        op: &str,
        k: Morphism,
        f: impl Fn(&SemValue, &[usize]) -> usize,
    ) -> Result<Self, TreeError> {
        let (len, _) = self.table_shape(op, &k)?;
        let o = self.sig.op(op).expect("checked by table_shape").clone();
        let params = enumerate_type(&o.param).unwrap_or_default();
        let q = enumerate_type(&o.arity).map(|v| v.len()).unwrap_or(0);
        let n = self.carrier_size(&k).expect("checked by table_shape");
        let per = len / params.len().max(1);
        let mut table = Vec::with_capacity(len);
        for p in &params {
            for i in 0..per {
                table.push(f(p, &digits(i, n, q)));
            }
        }
        self.with_table(op, k, table)
    }

    pub fn apply(
        &self,
        op: &str,
        k: &Morphism,
        param: &SemValue,
        children: &[usize],
    ) -> Result<usize, TreeError> {
        let missing = || TreeError::MissingInterp {
            op: op.to_string(),
            k: k.to_string(),
        };
        let table = self.interp.get(&(op.to_string(), k.clone())).ok_or_else(missing)?;
        let o = self.sig.op(op).ok_or_else(missing)?;
        let n = self
            .carrier_size(k)
            .ok_or_else(|| TreeError::MissingCarrier(k.to_string()))?;
        let p = index_of(&o.param, param)
            .ok_or_else(|| TreeError::BadTree(format!("{param} is not a parameter of `{op}`")))?;
        let mut idx = p;
        for &x in children {
            idx = idx * n + x;
        }
        Ok(table[idx])
    }
}

/// Base-`n` digits of `i`, most significant first, padded to `len`.
fn digits(mut i: usize, n: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = i % n;
        i /= n;
    }
    out
}

/// `⟦t⟧` at continuation `k`: each leaf variable is sent by `env` into
/// `I(k)`, and the result lies in `I(grade(t);k)`.
pub fn interpret_term(
    t: &TermTree,
    model: &FiniteModel,
    k: &Morphism,
    env: &dyn Fn(&SemValue) -> Result<usize, TreeError>,
) -> Result<usize, TreeError> {
    match &t.shape {
        Shape::Leaf { val, .. } => env(val),
        Shape::Node {
            op,
            param,
            k: inner,
            children,
            ..
        } => {
            let xs = children
                .iter()
                .map(|c| interpret_term(c, model, k, env))
                .collect::<Result<Vec<_>, _>>()?;
            let kk = model.sig.category.compose(inner, k)?;
            model.apply(op, &kk, param, &xs)
        }
        Shape::Coerce { .. } => Err(TreeError::CoercionInModel),
    }
}

/// The unique homomorphism from the free model extending `phi` on leaves,
/// evaluated on a tree.
pub fn free_extension<'a>(
    phi: &'a dyn Fn(&SemValue) -> Result<usize, TreeError>,
    model: &'a FiniteModel,
) -> impl Fn(&TermTree) -> Result<usize, TreeError> + 'a {
    move |t: &TermTree| {
        let id = Morphism::identity(model.at.clone());
        interpret_term(t, model, &id, phi)
    }
}

/// A failed equation: both sides differ under `env` at continuation `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub k: Morphism,
    pub env: Vec<(SemValue, usize)>,
    pub left: usize,
    pub right: usize,
}

/// Interprets both sides of each equation over every environment at every
/// continuation grade the model supports, reporting each violation.
pub fn check_equations(
    equations: &[(TermTree, TermTree)],
    model: &FiniteModel,
) -> Result<Vec<Violation>, TreeError> {
    let cat = &model.sig.category;
    let mut out = Vec::new();
    for (index, (l, r)) in equations.iter().enumerate() {
        if l.grade != r.grade {
            return Err(TreeError::GradeMismatchInEquation {
                index,
                left: l.grade.to_string(),
                right: r.grade.to_string(),
            });
        }
        let mut vars: Vec<SemValue> = Vec::new();
        for v in l.leaves().into_iter().chain(r.leaves()) {
            if !vars.iter().any(|w| w.try_eq(v).unwrap_or(false)) {
                vars.push(v.clone());
            }
        }
        for (k, &n) in &model.carrier {
            if k.dom != l.grade.cod {
                continue;
            }
            let Ok(whole) = cat.compose(&l.grade, k) else {
                continue;
            };
            if model.carrier_size(&whole).is_none() {
                continue;
            }
            let total = n.pow(vars.len() as u32);
            for i in 0..total {
                let assignment = digits(i, n, vars.len());
                let env = |v: &SemValue| -> Result<usize, TreeError> {
                    let pos = vars
                        .iter()
                        .position(|w| w.try_eq(v).unwrap_or(false))
                        .ok_or(TreeError::NonComparable)?;
                    Ok(assignment[pos])
                };
                let a = interpret_term(l, model, k, &env)?;
                let b = interpret_term(r, model, k, &env)?;
                if a != b {
                    out.push(Violation {
                        index,
                        k: k.clone(),
                        env: vars.iter().cloned().zip(assignment.iter().copied()).collect(),
                        left: a,
                        right: b,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Every tree of depth at most `depth` and grade rooted at `obj` over the
/// given signature, with leaves drawn from `vars`. Coercions are not
/// generated. Intended for small exhaustive checks.
pub fn trees_up_to(
    sig: &GradedSignature,
    obj_leaves: &[(String, Vec<SemValue>)],
    depth: usize,
) -> Result<Vec<TermTree>, TreeError> {
    let mut out: Vec<TermTree> = Vec::new();
    for (obj, vars) in obj_leaves {
        for v in vars {
            out.push(unit_leaf(obj, v.clone()));
        }
    }
    let mut frontier = out.clone();
    for _ in 0..depth {
        let mut by_grade: BTreeMap<Morphism, Vec<TermTree>> = BTreeMap::new();
        for t in &out {
            by_grade.entry(t.grade.clone()).or_default().push(t.clone());
        }
        let mut next = Vec::new();
        for o in sig.ops.values() {
            let params = enumerate_type(&o.param).unwrap_or_default();
            let q = enumerate_type(&o.arity).map(|v| v.len()).unwrap_or(0);
            for (k, pool) in &by_grade {
                if k.dom != o.grade.cod {
                    continue;
                }
                // only build nodes with at least one child from the frontier,
                // so each tree is produced once
                for idx in 0..pool.len().pow(q as u32) {
                    let choice = digits(idx, pool.len(), q);
                    let children: Vec<TermTree> =
                        choice.iter().map(|&i| pool[i].clone()).collect();
                    let fresh = children.iter().any(|c| {
                        frontier.iter().any(|f| f.try_eq(c).unwrap_or(false))
                    });
                    if !fresh {
                        continue;
                    }
                    for p in &params {
                        next.push(node(
                            &sig.category,
                            &o.name,
                            &o.grade,
                            p.clone(),
                            k.clone(),
                            children.clone(),
                        )?);
                    }
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    Ok(out)
}

/// Objects whose leaves appear anywhere in `t`.
pub fn leaf_objects(t: &TermTree) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fn go(t: &TermTree, out: &mut BTreeSet<String>) {
        match &t.shape {
            Shape::Leaf { obj, .. } => {
                out.insert(obj.clone());
            }
            Shape::Node { children, .. } => children.iter().for_each(|c| go(c, out)),
            Shape::Coerce { child, .. } => go(child, out),
        }
    }
    go(t, &mut out);
    out
}
