//! Recursive-descent parser for `.ceff` sources.
//!
//! Parsing is split in two: the grammar is read without knowing which
//! category a path belongs to (the body of `handle M with H` lives in the
//! source signature of `H`, which only appears after `M`), and a resolver
//! then normalizes every morphism in the category of its world.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::lexer::{lex, Tok, Token};
use super::{Bundle, Comp, Handler, Lambda, OpClause, Program, Type, Value};
use crate::grading::{
    build_category, build_functor, pair_completion, GradingCategory, GradingFunctor, Morphism,
    PathExpr, Presentation,
};
use crate::signature::{build_signature, GradedSignature, OpDecl};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnboundName(String),
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(m) => {
                write!(f, "{}:{}: syntax error: {m}", self.line, self.col)
            }
            ParseErrorKind::UnboundName(n) => {
                write!(f, "{}:{}: unbound name `{n}`", self.line, self.col)
            }
            ParseErrorKind::Invalid(m) => write!(f, "{}:{}: {m}", self.line, self.col),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "let", "in", "val", "do", "split", "as", "case", "of", "inl", "inr", "handle", "with",
    "weaken", "return", "op", "id", "fun", "category", "functor", "signature", "handler",
    "program", "type", "over", "to", "via", "at", "objects", "gen", "rule", "wide", "obj",
    "unit", "pair_completion", "identity", "collapse",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s) || s.starts_with("fun^")
}

/// A morphism before resolution: generators without endpoints, `id_a`, or a
/// bare `id` (empty `dom`).
fn raw_path(p: PathExpr) -> Morphism {
    match p {
        PathExpr::Id(Some(o)) => Morphism::identity(o),
        PathExpr::Id(None) => Morphism::identity(""),
        PathExpr::Gens(path) => Morphism {
            dom: String::new(),
            cod: String::new(),
            path,
        },
    }
}

fn to_path_expr(m: &Morphism) -> PathExpr {
    if m.path.is_empty() {
        if m.dom.is_empty() {
            PathExpr::Id(None)
        } else {
            PathExpr::Id(Some(m.dom.clone()))
        }
    } else {
        PathExpr::Gens(m.path.clone())
    }
}

struct Parser<'b> {
    toks: Vec<Token>,
    pos: usize,
    bundle: &'b mut Bundle,
}

type PResult<T> = Result<T, ParseError>;

impl<'b> Parser<'b> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err<T>(&self, kind: ParseErrorKind) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError { line, col, kind })
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let found = match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        };
        self.err(ParseErrorKind::Syntax(format!(
            "expected {}, found {found}",
            msg.into()
        )))
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.syntax(format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("`{s}`"))
        }
    }

    /// Any identifier, keywords included (used for object and generator names).
    fn name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.syntax("a name"),
        }
    }

    /// A variable or declaration name: an identifier that is not a keyword.
    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            _ => self.syntax("an identifier"),
        }
    }

    fn name_list(&mut self) -> PResult<Vec<String>> {
        let mut out = vec![self.name()?];
        while self.eat_sym(",") {
            out.push(self.name()?);
        }
        Ok(out)
    }

    fn path_rest(&mut self, first: String) -> PResult<PathExpr> {
        if first == "id" {
            return Ok(PathExpr::Id(None));
        }
        if let Some(o) = first.strip_prefix("id_") {
            return Ok(PathExpr::Id(Some(o.to_string())));
        }
        let mut gens = vec![first];
        while self.eat_sym(".") {
            gens.push(self.name()?);
        }
        Ok(PathExpr::Gens(gens))
    }

    fn path(&mut self) -> PResult<PathExpr> {
        let first = self.name()?;
        self.path_rest(first)
    }

    // ---- types ----

    fn ty(&mut self) -> PResult<Type> {
        let a = self.sum_ty()?;
        if self.eat_sym("->") {
            let b = self.ty()?;
            self.expect_sym("@")?;
            let g = self.path()?;
            return Ok(Type::arrow(a, b, raw_path(g)));
        }
        Ok(a)
    }

    fn sum_ty(&mut self) -> PResult<Type> {
        let a = self.prod_ty()?;
        if self.eat_sym("+") {
            let b = self.sum_ty()?;
            return Ok(Type::sum(a, b));
        }
        Ok(a)
    }

    fn prod_ty(&mut self) -> PResult<Type> {
        let a = self.atom_ty()?;
        if self.eat_sym("*") {
            let b = self.prod_ty()?;
            return Ok(Type::prod(a, b));
        }
        Ok(a)
    }

    fn atom_ty(&mut self) -> PResult<Type> {
        if self.eat_sym("(") {
            let t = self.ty()?;
            self.expect_sym(")")?;
            return Ok(t);
        }
        match self.peek().clone() {
            Tok::Ident(s) if s == "1" || s == "unit" => {
                self.bump();
                Ok(Type::Unit)
            }
            Tok::Ident(s) => match self.bundle.aliases.get(&s) {
                Some(t) => {
                    let t = t.clone();
                    self.bump();
                    Ok(t)
                }
                None => self.err(ParseErrorKind::UnboundName(s)),
            },
            _ => self.syntax("a type"),
        }
    }

    // ---- values ----

    fn starts_value(&self) -> bool {
        match self.peek() {
            Tok::Sym("(") => true,
            Tok::Ident(s) => {
                s == "inl" || s == "inr" || s.starts_with("fun^") || !is_keyword(s)
            }
            _ => false,
        }
    }

    fn value(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Tok::Sym("(") => {
                self.bump();
                if self.eat_sym(")") {
                    return Ok(Value::Star);
                }
                let v = self.value()?;
                if self.eat_sym(",") {
                    let w = self.value()?;
                    self.expect_sym(")")?;
                    return Ok(Value::pair(v, w));
                }
                self.expect_sym(")")?;
                Ok(v)
            }
            Tok::Ident(s) if s == "inl" || s == "inr" => {
                self.bump();
                let v = self.atomic_value()?;
                self.expect_sym(":")?;
                let t = self.ty()?;
                Ok(if s == "inl" {
                    Value::inl(v, t)
                } else {
                    Value::inr(v, t)
                })
            }
            Tok::Ident(s) if s.starts_with("fun^") => {
                self.bump();
                let first = s["fun^".len()..].to_string();
                if first.is_empty() {
                    return self.syntax("a grade after `fun^`");
                }
                let grade = raw_path(self.path_rest(first)?);
                self.expect_sym("(")?;
                let var = self.ident()?;
                self.expect_sym(":")?;
                let var_type = self.ty()?;
                self.expect_sym(")")?;
                self.expect_sym("=>")?;
                let body = self.comp()?;
                Ok(Value::Lam(Box::new(Lambda {
                    grade,
                    var,
                    var_type,
                    body,
                })))
            }
            Tok::Ident(_) => Ok(Value::Var(self.ident()?)),
            _ => self.syntax("a value"),
        }
    }

    fn atomic_value(&mut self) -> PResult<Value> {
        match self.peek() {
            Tok::Sym("(") => self.value(),
            Tok::Ident(s) if !is_keyword(s) => self.value(),
            _ => self.syntax("a variable or parenthesized value"),
        }
    }

    // ---- computations ----

    fn comp(&mut self) -> PResult<Comp> {
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            Tok::Sym("{") => {
                self.bump();
                let m = self.comp()?;
                self.expect_sym("}")?;
                return Ok(m);
            }
            _ => String::new(),
        };
        match kw.as_str() {
            "val" => {
                self.bump();
                let obj = match (self.peek().clone(), self.peek_at(1).clone()) {
                    (Tok::Ident(o), next) if !o.starts_with("fun^") && o != "inl" && o != "inr" => {
                        let next_starts = match next {
                            Tok::Sym("(") => true,
                            Tok::Ident(n) => {
                                n == "inl" || n == "inr" || n.starts_with("fun^") || !is_keyword(&n)
                            }
                            _ => false,
                        };
                        if next_starts {
                            self.bump();
                            o
                        } else {
                            String::new()
                        }
                    }
                    _ => String::new(),
                };
                let v = self.value()?;
                Ok(Comp::Val(obj, v))
            }
            "let" => {
                self.bump();
                let x = self.ident()?;
                self.expect_sym("<-")?;
                let m = self.comp()?;
                self.expect_kw("in")?;
                let n = self.comp()?;
                Ok(Comp::let_(&x, m, n))
            }
            "do" => {
                self.bump();
                let op = self.ident()?;
                self.expect_sym("(")?;
                if self.eat_sym(")") {
                    return Ok(Comp::Op(op, Value::Star));
                }
                let v = self.value()?;
                let v = if self.eat_sym(",") {
                    let w = self.value()?;
                    Value::pair(v, w)
                } else {
                    v
                };
                self.expect_sym(")")?;
                Ok(Comp::Op(op, v))
            }
            "split" => {
                self.bump();
                let v = self.value()?;
                self.expect_kw("as")?;
                self.expect_sym("(")?;
                let x = self.ident()?;
                self.expect_sym(",")?;
                let y = self.ident()?;
                self.expect_sym(")")?;
                self.expect_kw("in")?;
                let m = self.comp()?;
                Ok(Comp::split(v, &x, &y, m))
            }
            "case" => {
                self.bump();
                let v = self.value()?;
                self.expect_kw("of")?;
                self.expect_kw("inl")?;
                let x = self.ident()?;
                self.expect_sym("=>")?;
                let m1 = self.comp()?;
                self.expect_sym("|")?;
                self.expect_kw("inr")?;
                let y = self.ident()?;
                self.expect_sym("=>")?;
                let m2 = self.comp()?;
                Ok(Comp::case(v, &x, m1, &y, m2))
            }
            "handle" => {
                self.bump();
                let m = self.comp()?;
                self.expect_kw("with")?;
                let name = self.ident_pos()?;
                let h = match self.bundle.handlers.get(&name.0) {
                    Some(h) => h.clone(),
                    None => {
                        return Err(ParseError {
                            line: name.1,
                            col: name.2,
                            kind: ParseErrorKind::UnboundName(name.0),
                        })
                    }
                };
                Ok(Comp::handle(m, h))
            }
            "weaken" => {
                self.bump();
                let g = raw_path(self.path()?);
                self.expect_sym("{")?;
                let m = self.comp()?;
                self.expect_sym("}")?;
                let h = raw_path(self.path()?);
                Ok(Comp::weaken(g, m, h))
            }
            _ if self.starts_value() => {
                let v = self.value()?;
                if !self.starts_value() {
                    return self.syntax("an argument value");
                }
                let w = self.value()?;
                Ok(Comp::App(v, w))
            }
            _ => self.syntax("a computation"),
        }
    }

    fn ident_pos(&mut self) -> PResult<(String, usize, usize)> {
        let (l, c) = self.here();
        Ok((self.ident()?, l, c))
    }

    // ---- declarations ----

    fn invalid<T>(&self, at: (usize, usize), msg: impl fmt::Display) -> PResult<T> {
        Err(ParseError {
            line: at.0,
            col: at.1,
            kind: ParseErrorKind::Invalid(msg.to_string()),
        })
    }

    fn unbound<T>(&self, at: (usize, usize), name: &str) -> PResult<T> {
        Err(ParseError {
            line: at.0,
            col: at.1,
            kind: ParseErrorKind::UnboundName(name.to_string()),
        })
    }

    fn category(&self, at: (usize, usize), name: &str) -> PResult<Arc<GradingCategory>> {
        match self.bundle.categories.get(name) {
            Some(c) => Ok(c.clone()),
            None => self.unbound(at, name),
        }
    }

    fn signature(&self, at: (usize, usize), name: &str) -> PResult<Arc<GradedSignature>> {
        match self.bundle.signatures.get(name) {
            Some(s) => Ok(s.clone()),
            None => self.unbound(at, name),
        }
    }

    fn fresh_decl(&self, at: (usize, usize), name: &str, taken: bool) -> PResult<()> {
        if taken {
            return self.invalid(at, format!("`{name}` is declared twice"));
        }
        Ok(())
    }

    fn decl(&mut self) -> PResult<()> {
        let at = self.here();
        let kw = self.name()?;
        match kw.as_str() {
            "category" => self.category_decl(at),
            "functor" => self.functor_decl(at),
            "type" => {
                let name = self.ident()?;
                self.expect_sym("=")?;
                let t = self.ty()?;
                self.expect_sym(";")?;
                let taken = self.bundle.aliases.contains_key(&name);
                self.fresh_decl(at, &name, taken)?;
                self.bundle.aliases.insert(name, t);
                Ok(())
            }
            "signature" => self.signature_decl(at),
            "handler" => self.handler_decl(at),
            "program" => self.program_decl(at),
            _ => {
                self.pos -= 1;
                self.syntax("a declaration")
            }
        }
    }

    fn category_decl(&mut self, at: (usize, usize)) -> PResult<()> {
        let name = self.ident()?;
        let taken = self.bundle.categories.contains_key(&name);
        self.fresh_decl(at, &name, taken)?;
        if self.eat_sym("=") {
            self.expect_kw("pair_completion")?;
            let src_at = self.here();
            let src = self.ident()?;
            self.expect_sym(";")?;
            let s = self.category(src_at, &src)?;
            let c = match pair_completion(&s, &name) {
                Ok(c) => c,
                Err(e) => return self.invalid(at, e),
            };
            self.bundle.categories.insert(name, Arc::new(c));
            return Ok(());
        }
        let mut p = Presentation::new(&name);
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            let item = self.name()?;
            match item.as_str() {
                "objects" => p.objects.extend(self.name_list()?),
                "gen" => {
                    let names = self.name_list()?;
                    self.expect_sym(":")?;
                    let dom = self.name()?;
                    self.expect_sym("->")?;
                    let cod = self.name()?;
                    for n in names {
                        p.generators.push((n, dom.clone(), cod.clone()));
                    }
                }
                "rule" => {
                    let lhs = self.path()?;
                    self.expect_sym("=")?;
                    let rhs = self.path()?;
                    let gens = |e: PathExpr| match e {
                        PathExpr::Gens(g) => g,
                        PathExpr::Id(_) => Vec::new(),
                    };
                    p.rules.push((gens(lhs), gens(rhs)));
                }
                "wide" => p.wide.extend(self.name_list()?),
                _ => {
                    self.pos -= 1;
                    return self.syntax("`objects`, `gen`, `rule` or `wide`");
                }
            }
            self.expect_sym(";")?;
        }
        match build_category(&p) {
            Ok(c) => {
                self.bundle.categories.insert(name, Arc::new(c));
                Ok(())
            }
            Err(e) => self.invalid(at, format!("category {name}: {e}")),
        }
    }

    fn functor_decl(&mut self, at: (usize, usize)) -> PResult<()> {
        let name = self.ident()?;
        let taken = self.bundle.functors.contains_key(&name);
        self.fresh_decl(at, &name, taken)?;
        self.expect_sym(":")?;
        let s_at = self.here();
        let s = self.ident()?;
        self.expect_sym("->")?;
        let t_at = self.here();
        let t = self.ident()?;
        let source = self.category(s_at, &s)?;
        let target = self.category(t_at, &t)?;
        self.expect_sym("{")?;
        let mut objs = HashMap::new();
        let mut gens = Vec::new();
        let mut built = None;
        while !self.eat_sym("}") {
            let item = self.name()?;
            match item.as_str() {
                "identity" => {
                    if !Arc::ptr_eq(&source, &target) {
                        return self.invalid(at, "identity functor needs equal categories");
                    }
                    built = Some(GradingFunctor::identity(&name, source.clone()));
                }
                "collapse" => {
                    let o = self.name()?;
                    match GradingFunctor::collapse(&name, source.clone(), target.clone(), &o) {
                        Ok(f) => built = Some(f),
                        Err(e) => return self.invalid(at, e),
                    }
                }
                "obj" => {
                    let a = self.name()?;
                    self.expect_sym("=>")?;
                    let b = self.name()?;
                    objs.insert(a, b);
                }
                "gen" => {
                    let g = self.name()?;
                    self.expect_sym("=>")?;
                    let p = self.path()?;
                    gens.push((g, p));
                }
                _ => {
                    self.pos -= 1;
                    return self.syntax("`obj`, `gen`, `identity` or `collapse`");
                }
            }
            self.expect_sym(";")?;
        }
        let f = match built {
            Some(f) => f,
            None => {
                let mut gmap = HashMap::new();
                for (g, p) in gens {
                    let Some(gen) = source.generator(&g) else {
                        return self.unbound(at, &g);
                    };
                    let hint = objs.get(&gen.dom).cloned();
                    match target.resolve(&p, hint.as_deref()) {
                        Ok(m) => {
                            gmap.insert(g, m);
                        }
                        Err(e) => return self.invalid(at, format!("functor {name}: {e}")),
                    }
                }
                match build_functor(&name, source, target, objs, gmap) {
                    Ok(f) => f,
                    Err(e) => return self.invalid(at, e),
                }
            }
        };
        self.bundle.functors.insert(name, Arc::new(f));
        Ok(())
    }

    fn signature_decl(&mut self, at: (usize, usize)) -> PResult<()> {
        let name = self.ident()?;
        let taken = self.bundle.signatures.contains_key(&name);
        self.fresh_decl(at, &name, taken)?;
        self.expect_kw("over")?;
        let c_at = self.here();
        let c = self.ident()?;
        let cat = self.category(c_at, &c)?;
        self.expect_sym("{")?;
        let mut decls = Vec::new();
        while !self.eat_sym("}") {
            self.expect_kw("op")?;
            let op = self.ident()?;
            self.expect_sym(":")?;
            let param = self.ty()?;
            self.expect_sym("~>")?;
            let arity = self.ty()?;
            self.expect_sym("@")?;
            let grade = self.path()?;
            self.expect_sym(";")?;
            decls.push(OpDecl {
                name: op,
                param,
                arity,
                grade,
            });
        }
        match build_signature(&name, cat, decls) {
            Ok(s) => {
                self.bundle.signatures.insert(name, Arc::new(s));
                Ok(())
            }
            Err(e) => self.invalid(at, e),
        }
    }

    fn handler_decl(&mut self, at: (usize, usize)) -> PResult<()> {
        let name = self.ident()?;
        let taken = self.bundle.handlers.contains_key(&name);
        self.fresh_decl(at, &name, taken)?;
        self.expect_kw("over")?;
        let s_at = self.here();
        let s = self.ident()?;
        self.expect_kw("to")?;
        let t_at = self.here();
        let t = self.ident()?;
        self.expect_kw("via")?;
        let f_at = self.here();
        let f = self.ident()?;
        self.expect_kw("at")?;
        let b = self.name()?;
        let source = self.signature(s_at, &s)?;
        let target = self.signature(t_at, &t)?;
        let functor = match self.bundle.functors.get(&f) {
            Some(f) => f.clone(),
            None => return self.unbound(f_at, &f),
        };
        if functor.source.name() != source.category.name()
            || functor.target.name() != target.category.name()
        {
            return self.invalid(
                at,
                format!(
                    "handler {name}: functor {f} runs {} -> {}, not {} -> {}",
                    functor.source.name(),
                    functor.target.name(),
                    source.category.name(),
                    target.category.name()
                ),
            );
        }
        if !source.category.has_object(&b) {
            return self.unbound(at, &b);
        }
        self.expect_sym("{")?;
        let mut ret = None;
        let mut clauses = Vec::new();
        while !self.eat_sym("}") {
            let item_at = self.here();
            if self.is_kw("return") {
                self.bump();
                let x = self.ident()?;
                let r = if self.eat_sym(":") {
                    Some(self.ty()?)
                } else {
                    None
                };
                self.expect_sym("=>")?;
                let body = self.comp()?;
                self.expect_sym(";")?;
                ret = Some((x, r, body, item_at));
                continue;
            }
            self.expect_kw("op")?;
            let op_at = self.here();
            let op = self.ident()?;
            self.expect_sym("(")?;
            let param = self.ident()?;
            self.expect_sym(")")?;
            self.expect_sym(",")?;
            let resume = self.ident()?;
            let k = if self.eat_sym("@") {
                Some(self.path()?)
            } else {
                None
            };
            self.expect_sym("=>")?;
            let body = self.comp()?;
            self.expect_sym(";")?;
            if source.op(&op).is_none() {
                return self.unbound(op_at, &op);
            }
            let k = match k {
                None => None,
                Some(p) => match source.category.resolve(&p, Some(&b)) {
                    Ok(m) if m.cod == b => Some(m),
                    Ok(m) => {
                        return self.invalid(
                            item_at,
                            format!("clause grade {m} does not end at `{b}`"),
                        )
                    }
                    Err(e) => return self.invalid(item_at, e),
                },
            };
            if clauses
                .iter()
                .any(|c: &(OpClause, _)| c.0.op == op && c.0.k == k)
            {
                return self.invalid(item_at, format!("duplicate clause for `{op}`"));
            }
            clauses.push((
                OpClause {
                    op,
                    k,
                    param,
                    resume,
                    body,
                },
                item_at,
            ));
        }
        let Some((ret_var, handled, ret_body, ret_at)) = ret else {
            return self.invalid(at, format!("handler {name} has no return clause"));
        };
        let r = Resolver;
        let handled = match handled {
            Some(ty) => Some(r.ty(&target.category, ty).map_err(|e| e.at(ret_at))?),
            None => None,
        };
        let ret_body = r.comp(&target, ret_body).map_err(|e| e.at(ret_at))?;
        let mut resolved = Vec::new();
        for (c, c_at) in clauses {
            let body = r.comp(&target, c.body).map_err(|e| e.at(c_at))?;
            resolved.push(OpClause { body, ..c });
        }
        let h = Handler {
            name: name.clone(),
            source,
            target,
            functor,
            at: b,
            handled,
            ret_var,
            ret_body,
            clauses: resolved,
        };
        self.bundle.handlers.insert(name, Arc::new(h));
        Ok(())
    }

    fn program_decl(&mut self, at: (usize, usize)) -> PResult<()> {
        let name = self.ident()?;
        let taken = self.bundle.programs.contains_key(&name);
        self.fresh_decl(at, &name, taken)?;
        self.expect_kw("over")?;
        let s_at = self.here();
        let s = self.ident()?;
        let sig = self.signature(s_at, &s)?;
        self.expect_sym(":")?;
        let ty = self.ty()?;
        self.expect_sym("@")?;
        let grade = raw_path(self.path()?);
        self.expect_sym("{")?;
        let body = self.comp()?;
        self.expect_sym("}")?;
        let r = Resolver;
        let ty = r.ty(&sig.category, ty).map_err(|e| e.at(at))?;
        let grade = r.morphism(&sig.category, &grade).map_err(|e| e.at(at))?;
        let body = r.comp(&sig, body).map_err(|e| e.at(at))?;
        self.bundle.programs.insert(
            name.clone(),
            Program {
                name,
                sig,
                ty,
                grade,
                body,
            },
        );
        Ok(())
    }
}

/// Resolution failure, positioned at the enclosing declaration.
struct ResolveError(ParseErrorKind);

impl ResolveError {
    fn at(self, at: (usize, usize)) -> ParseError {
        ParseError {
            line: at.0,
            col: at.1,
            kind: self.0,
        }
    }
}

struct Resolver;

fn single_object(cat: &GradingCategory) -> Option<&str> {
    match cat.objects() {
        [o] => Some(o.as_str()),
        _ => None,
    }
}

impl Resolver {
    fn morphism(&self, cat: &GradingCategory, m: &Morphism) -> Result<Morphism, ResolveError> {
        cat.resolve(&to_path_expr(m), single_object(cat))
            .map_err(|e| ResolveError(ParseErrorKind::Invalid(format!("{e} in {}", cat.name()))))
    }

    fn ty(&self, cat: &GradingCategory, t: Type) -> Result<Type, ResolveError> {
        Ok(match t {
            Type::Unit => Type::Unit,
            Type::Prod(a, b) => Type::prod(self.ty(cat, *a)?, self.ty(cat, *b)?),
            Type::Sum(a, b) => Type::sum(self.ty(cat, *a)?, self.ty(cat, *b)?),
            Type::Arrow(a, b, g) => {
                Type::arrow(self.ty(cat, *a)?, self.ty(cat, *b)?, self.morphism(cat, &g)?)
            }
        })
    }

    fn value(&self, sig: &Arc<GradedSignature>, v: Value) -> Result<Value, ResolveError> {
        let cat = &sig.category;
        Ok(match v {
            Value::Var(_) | Value::Star => v,
            Value::Inl(v, t) => Value::inl(self.value(sig, *v)?, self.ty(cat, t)?),
            Value::Inr(v, t) => Value::inr(self.value(sig, *v)?, self.ty(cat, t)?),
            Value::Pair(a, b) => Value::pair(self.value(sig, *a)?, self.value(sig, *b)?),
            Value::Lam(l) => {
                let l = *l;
                Value::Lam(Box::new(Lambda {
                    grade: self.morphism(cat, &l.grade)?,
                    var: l.var,
                    var_type: self.ty(cat, l.var_type)?,
                    body: self.comp(sig, l.body)?,
                }))
            }
        })
    }

    fn comp(&self, sig: &Arc<GradedSignature>, m: Comp) -> Result<Comp, ResolveError> {
        let cat = &sig.category;
        Ok(match m {
            Comp::Val(obj, v) => {
                let obj = if obj.is_empty() {
                    match single_object(cat) {
                        Some(o) => o.to_string(),
                        None => {
                            return Err(ResolveError(ParseErrorKind::Invalid(
                                "`val` needs an object here".into(),
                            )))
                        }
                    }
                } else if cat.has_object(&obj) {
                    obj
                } else {
                    return Err(ResolveError(ParseErrorKind::UnboundName(obj)));
                };
                Comp::Val(obj, self.value(sig, v)?)
            }
            Comp::Let(x, m, n) => Comp::Let(
                x,
                Box::new(self.comp(sig, *m)?),
                Box::new(self.comp(sig, *n)?),
            ),
            Comp::App(v, w) => Comp::App(self.value(sig, v)?, self.value(sig, w)?),
            Comp::Op(op, v) => {
                if sig.op(&op).is_none() {
                    return Err(ResolveError(ParseErrorKind::UnboundName(op)));
                }
                Comp::Op(op, self.value(sig, v)?)
            }
            Comp::Split(v, x, y, m) => {
                Comp::Split(self.value(sig, v)?, x, y, Box::new(self.comp(sig, *m)?))
            }
            Comp::Case(v, x, m1, y, m2) => Comp::Case(
                self.value(sig, v)?,
                x,
                Box::new(self.comp(sig, *m1)?),
                y,
                Box::new(self.comp(sig, *m2)?),
            ),
            Comp::Handle(m, h) => {
                let inner = self.comp(&h.source, *m)?;
                Comp::Handle(Box::new(inner), h)
            }
            Comp::Weaken(g, m, h) => Comp::Weaken(
                self.morphism(cat, &g)?,
                Box::new(self.comp(sig, *m)?),
                self.morphism(cat, &h)?,
            ),
        })
    }
}

fn lex_tokens(src: &str) -> PResult<Vec<Token>> {
    lex(src).map_err(|(line, col, msg)| ParseError {
        line,
        col,
        kind: ParseErrorKind::Syntax(msg),
    })
}

/// Parses a whole source file into a validated bundle.
pub fn parse_bundle(src: &str) -> Result<Bundle, ParseError> {
    let mut bundle = Bundle::default();
    let toks = lex_tokens(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        bundle: &mut bundle,
    };
    while *p.peek() != Tok::Eof {
        p.decl()?;
    }
    Ok(bundle)
}

fn in_signature<T>(
    bundle: &Bundle,
    sig_name: &str,
    src: &str,
    parse: impl FnOnce(&mut Parser) -> PResult<T>,
) -> Result<(T, Arc<GradedSignature>), ParseError> {
    let sig = bundle.signatures.get(sig_name).cloned().ok_or(ParseError {
        line: 1,
        col: 1,
        kind: ParseErrorKind::UnboundName(sig_name.to_string()),
    })?;
    let mut scratch = bundle.clone();
    let mut p = Parser {
        toks: lex_tokens(src)?,
        pos: 0,
        bundle: &mut scratch,
    };
    let out = parse(&mut p)?;
    if *p.peek() != Tok::Eof {
        return p.syntax("end of input");
    }
    Ok((out, sig))
}

/// Parses a computation in the world of signature `sig_name`.
pub fn parse_comp_in(bundle: &Bundle, sig_name: &str, src: &str) -> Result<Comp, ParseError> {
    let (m, sig) = in_signature(bundle, sig_name, src, |p| p.comp())?;
    Resolver
        .comp(&sig, m)
        .map_err(|e| e.at((1, 1)))
}

/// Parses a value in the world of signature `sig_name`.
pub fn parse_value_in(bundle: &Bundle, sig_name: &str, src: &str) -> Result<Value, ParseError> {
    let (v, sig) = in_signature(bundle, sig_name, src, |p| p.value())?;
    Resolver
        .value(&sig, v)
        .map_err(|e| e.at((1, 1)))
}
