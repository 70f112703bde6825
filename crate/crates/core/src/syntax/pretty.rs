use std::fmt;

use super::{Comp, Type, Value};

fn needs_parens(t: &Type) -> bool {
    !matches!(t, Type::Unit)
}

fn write_child(f: &mut fmt::Formatter<'_>, t: &Type) -> fmt::Result {
    if needs_parens(t) {
        write!(f, "({t})")
    } else {
        write!(f, "{t}")
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Unit => write!(f, "1"),
            Type::Prod(a, b) => {
                write_child(f, a)?;
                write!(f, " * ")?;
                write_child(f, b)
            }
            Type::Sum(a, b) => {
                write_child(f, a)?;
                write!(f, " + ")?;
                write_child(f, b)
            }
            Type::Arrow(a, b, g) => {
                write_child(f, a)?;
                write!(f, " -> ")?;
                write_child(f, b)?;
                write!(f, " @ {}", g.source_form())
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Var(x) => write!(f, "{x}"),
            Value::Star => write!(f, "()"),
            Value::Pair(a, b) => write!(f, "({a}, {b})"),
            Value::Inl(v, t) => write!(f, "(inl {v} : {t})"),
            Value::Inr(v, t) => write!(f, "(inr {v} : {t})"),
            Value::Lam(l) => write!(
                f,
                "(fun^{} ({} : {}) => {})",
                l.grade.source_form(),
                l.var,
                l.var_type,
                l.body
            ),
        }
    }
}

fn braced_if_open(m: &Comp) -> String {
    match m {
        Comp::Let(..) | Comp::Split(..) | Comp::Case(..) => format!("{{ {m} }}"),
        _ => m.to_string(),
    }
}

impl fmt::Display for Comp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Comp::Val(a, v) => write!(f, "val {a} {v}"),
            Comp::Let(x, m, n) => write!(f, "let {x} <- {} in {n}", braced_if_open(m)),
            Comp::App(v, w) => write!(f, "{v} {w}"),
            Comp::Op(op, Value::Star) => write!(f, "do {op}()"),
            Comp::Op(op, v) => write!(f, "do {op}({v})"),
            Comp::Split(v, x, y, m) => write!(f, "split {v} as ({x}, {y}) in {m}"),
            Comp::Case(v, x, m1, y, m2) => write!(
                f,
                "case {v} of inl {x} => {} | inr {y} => {m2}",
                braced_if_open(m1)
            ),
            Comp::Handle(m, h) => write!(f, "handle {{ {m} }} with {}", h.name),
            Comp::Weaken(g, m, h) => write!(
                f,
                "weaken {} {{ {m} }} {}",
                g.source_form(),
                h.source_form()
            ),
        }
    }
}
