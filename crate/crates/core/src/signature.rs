//! Graded effect signatures and the finite enumeration of primitive types.

use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::denote::SemValue;
use crate::grading::{GradingCategory, Morphism, PathExpr};
use crate::syntax::Type;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("operation `{op}`: `{path}` is not a morphism of {category}")]
    UnknownMorphism {
        op: String,
        path: String,
        category: String,
    },
    #[error("operation `{op}`: `{ty}` is not a primitive type")]
    NonPrimitiveType { op: String, ty: String },
    #[error("operation `{0}` declared twice")]
    DuplicateOp(String),
}

/// `op : param ~> arity @ grade`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpSig {
    pub name: String,
    pub param: Type,
    pub arity: Type,
    pub grade: Morphism,
}

#[derive(Debug, Clone)]
pub struct OpDecl {
    pub name: String,
    pub param: Type,
    pub arity: Type,
    pub grade: PathExpr,
}

#[derive(Debug, Clone)]
pub struct GradedSignature {
    pub name: String,
    pub category: Arc<GradingCategory>,
    pub ops: IndexMap<String, OpSig>,
}

impl GradedSignature {
    pub fn empty(name: &str, category: Arc<GradingCategory>) -> GradedSignature {
        GradedSignature {
            name: name.to_string(),
            category,
            ops: IndexMap::new(),
        }
    }

    pub fn op(&self, name: &str) -> Option<&OpSig> {
        self.ops.get(name)
    }
}

pub fn build_signature(
    name: &str,
    category: Arc<GradingCategory>,
    decls: Vec<OpDecl>,
) -> Result<GradedSignature, SignatureError> {
    let mut ops = IndexMap::new();
    for d in decls {
        for ty in [&d.param, &d.arity] {
            if !ty.is_primitive() {
                return Err(SignatureError::NonPrimitiveType {
                    op: d.name.clone(),
                    ty: ty.to_string(),
                });
            }
        }
        let single = match category.objects() {
            [o] => Some(o.as_str()),
            _ => None,
        };
        let grade = category
            .resolve(&d.grade, single)
            .map_err(|_| SignatureError::UnknownMorphism {
                op: d.name.clone(),
                path: match &d.grade {
                    PathExpr::Id(Some(o)) => format!("id_{o}"),
                    PathExpr::Id(None) => "id".into(),
                    PathExpr::Gens(gs) => gs.join("."),
                },
                category: category.name().to_string(),
            })?;
        if ops.contains_key(&d.name) {
            return Err(SignatureError::DuplicateOp(d.name));
        }
        ops.insert(
            d.name.clone(),
            OpSig {
                name: d.name,
                param: d.param,
                arity: d.arity,
                grade,
            },
        );
    }
    Ok(GradedSignature {
        name: name.to_string(),
        category,
        ops,
    })
}

/// Canonical listing of a primitive type's values: `()` for unit, products
/// left-major, sums all left injections before all right ones. `None` for
/// types containing arrows.
pub fn enumerate_type(ty: &Type) -> Option<Vec<SemValue>> {
    match ty {
        Type::Unit => Some(vec![SemValue::Star]),
        Type::Prod(a, b) => {
            let (xs, ys) = (enumerate_type(a)?, enumerate_type(b)?);
            let mut out = Vec::with_capacity(xs.len() * ys.len());
            for x in &xs {
                for y in &ys {
                    out.push(SemValue::Pair(Box::new(x.clone()), Box::new(y.clone())));
                }
            }
            Some(out)
        }
        Type::Sum(a, b) => {
            let mut out: Vec<SemValue> = enumerate_type(a)?
                .into_iter()
                .map(|x| SemValue::Inl(Box::new(x)))
                .collect();
            out.extend(
                enumerate_type(b)?
                    .into_iter()
                    .map(|y| SemValue::Inr(Box::new(y))),
            );
            Some(out)
        }
        Type::Arrow(..) => None,
    }
}

/// Number of values of a primitive type.
pub fn type_size(ty: &Type) -> Option<usize> {
    match ty {
        Type::Unit => Some(1),
        Type::Prod(a, b) => Some(type_size(a)? * type_size(b)?),
        Type::Sum(a, b) => Some(type_size(a)? + type_size(b)?),
        Type::Arrow(..) => None,
    }
}

/// Position of `v` in the canonical enumeration of `ty`.
pub fn index_of(ty: &Type, v: &SemValue) -> Option<usize> {
    match (ty, v) {
        (Type::Unit, SemValue::Star) => Some(0),
        (Type::Prod(a, b), SemValue::Pair(x, y)) => {
            Some(index_of(a, x)? * type_size(b)? + index_of(b, y)?)
        }
        (Type::Sum(a, _), SemValue::Inl(x)) => index_of(a, x),
        (Type::Sum(a, b), SemValue::Inr(y)) => Some(type_size(a)? + index_of(b, y)?),
        _ => None,
    }
}

/// Whether a semantic value inhabits a primitive type.
pub fn inhabits(ty: &Type, v: &SemValue) -> bool {
    index_of(ty, v).is_some()
}
