//! Simultaneous capture-avoiding substitution of values for variables.
//!
//! Bound variables that would capture a free variable of a substituted value
//! are renamed by priming (`y`, `y'`, `y''`, ...), which keeps traces
//! deterministic without any global state.

use std::collections::BTreeSet;

use super::{all_names, free_vars_value, Comp, Lambda, Value};

/// The first of `base'`, `base''`, ... not in `avoid`.
pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let mut name = format!("{base}'");
    while avoid.contains(&name) {
        name.push('\'');
    }
    name
}

type Bindings = Vec<(String, Value)>;

/// `M[V1/x1, ..., Vn/xn]`.
pub fn substitute(m: &Comp, bindings: &[(String, Value)]) -> Comp {
    if bindings.is_empty() {
        return m.clone();
    }
    comp(m, &bindings.to_vec())
}

pub fn substitute_value(v: &Value, bindings: &[(String, Value)]) -> Value {
    if bindings.is_empty() {
        return v.clone();
    }
    value(v, &bindings.to_vec())
}

/// Prepares `bindings` for going under binder `x` whose scope is `body`:
/// drops the shadowed binding and renames `x` if it would capture.
fn under_binder(x: &str, bodies: &[&Comp], bindings: &Bindings) -> (String, Bindings) {
    let mut inner: Bindings = bindings.iter().filter(|(y, _)| y != x).cloned().collect();
    let captures = inner
        .iter()
        .any(|(_, v)| free_vars_value(v).contains(x));
    if !captures {
        return (x.to_string(), inner);
    }
    let mut avoid = BTreeSet::new();
    for (y, v) in &inner {
        avoid.insert(y.clone());
        avoid.extend(free_vars_value(v));
    }
    for b in bodies {
        all_names(b, &mut avoid);
    }
    let x2 = fresh_name(x, &avoid);
    inner.push((x.to_string(), Value::Var(x2.clone())));
    (x2, inner)
}

fn value(v: &Value, b: &Bindings) -> Value {
    match v {
        Value::Var(x) => match b.iter().find(|(y, _)| y == x) {
            Some((_, w)) => w.clone(),
            None => v.clone(),
        },
        Value::Star => Value::Star,
        Value::Inl(v, t) => Value::Inl(Box::new(value(v, b)), t.clone()),
        Value::Inr(v, t) => Value::Inr(Box::new(value(v, b)), t.clone()),
        Value::Pair(v, w) => Value::pair(value(v, b), value(w, b)),
        Value::Lam(l) => {
            let (var, inner) = under_binder(&l.var, &[&l.body], b);
            Value::Lam(Box::new(Lambda {
                grade: l.grade.clone(),
                var,
                var_type: l.var_type.clone(),
                body: sub_or_clone(&l.body, &inner),
            }))
        }
    }
}

fn sub_or_clone(m: &Comp, b: &Bindings) -> Comp {
    if b.is_empty() {
        m.clone()
    } else {
        comp(m, b)
    }
}

fn comp(m: &Comp, b: &Bindings) -> Comp {
    match m {
        Comp::Val(a, v) => Comp::Val(a.clone(), value(v, b)),
        Comp::Op(op, v) => Comp::Op(op.clone(), value(v, b)),
        Comp::App(v, w) => Comp::App(value(v, b), value(w, b)),
        Comp::Let(x, m1, n) => {
            let m1 = comp(m1, b);
            let (x, inner) = under_binder(x, &[n], b);
            Comp::Let(x, Box::new(m1), Box::new(sub_or_clone(n, &inner)))
        }
        Comp::Split(v, x, y, body) => {
            let v = value(v, b);
            let (x2, inner) = under_binder(x, &[body], b);
            let (y2, inner) = if y == x {
                // the second binder shadows the first
                under_binder(y, &[body], &inner)
            } else {
                let (y2, mut inner2) = under_binder(y, &[body], &inner);
                // a renamed x must not collide with the fresh y
                if y2 == x2 {
                    let mut avoid: BTreeSet<String> = BTreeSet::new();
                    avoid.insert(x2.clone());
                    all_names(body, &mut avoid);
                    for (_, v) in &inner2 {
                        avoid.extend(free_vars_value(v));
                    }
                    let y3 = fresh_name(&y2, &avoid);
                    inner2.retain(|(n, _)| n != y);
                    inner2.push((y.clone(), Value::Var(y3.clone())));
                    (y3, inner2)
                } else {
                    (y2, inner2)
                }
            };
            Comp::Split(v, x2, y2, Box::new(sub_or_clone(body, &inner)))
        }
        Comp::Case(v, x, m1, y, m2) => {
            let v = value(v, b);
            let (x, in1) = under_binder(x, &[m1], b);
            let (y, in2) = under_binder(y, &[m2], b);
            Comp::Case(
                v,
                x,
                Box::new(sub_or_clone(m1, &in1)),
                y,
                Box::new(sub_or_clone(m2, &in2)),
            )
        }
        Comp::Handle(m1, h) => Comp::Handle(Box::new(comp(m1, b)), h.clone()),
        Comp::Weaken(g, m1, h) => Comp::Weaken(g.clone(), Box::new(comp(m1, b)), h.clone()),
    }
}
