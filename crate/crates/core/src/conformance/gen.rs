//! Random generation of closed, well-graded computations.
//!
//! Terms are built top-down from a requested type and grade by running the
//! typing rules backwards: a `let` splits its grade into a factorization, a
//! `handle` picks a handler whose functor maps some source grade onto the
//! target, a `weaken` peels wide morphisms off either end. Every emitted
//! term is re-checked.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grading::{GradingCategory, Morphism};
use crate::signature::{type_size, GradedSignature};
use crate::syntax::{Bundle, Comp, Handler, Type, Value};
use crate::typecheck::{Checker, Ctx};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("only {found} of {wanted} terms could be generated")]
    GenerationExhausted { wanted: usize, found: usize },
    #[error("the bundle declares no signature")]
    NoSignature,
}

/// A generated closed computation with its judgement.
#[derive(Debug, Clone)]
pub struct Generated {
    pub world: Arc<GradedSignature>,
    pub ty: Type,
    pub grade: Morphism,
    pub body: Comp,
}

/// Longest generator paths in the grade pools.
const POOL_LEN: usize = 3;
/// Recursive calls allowed while building one term.
const CALL_BUDGET: usize = 600;
/// Attempts per requested term.
const ATTEMPTS: usize = 40;
/// Largest finite type drawn for intermediate results.
const MAX_TYPE_SIZE: usize = 8;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Val,
    Op,
    Let,
    Case,
    Split,
    App,
    Handle,
    Weaken,
}

pub struct Generator<'b> {
    bundle: &'b Bundle,
    rng: ChaCha8Rng,
    checker: Checker,
    pools: HashMap<String, Vec<Morphism>>,
    factors: HashMap<(String, Morphism), Vec<(Morphism, Morphism)>>,
    weakenings: HashMap<(String, Morphism), Vec<(Morphism, Morphism, Morphism)>>,
    preimages: HashMap<(String, Morphism), Vec<Morphism>>,
    targets: HashMap<String, Vec<Morphism>>,
    types: Vec<Type>,
    budget: usize,
    fresh: usize,
}

impl<'b> Generator<'b> {
    pub fn new(bundle: &'b Bundle, seed: u64) -> Generator<'b> {
        let mut types = vec![Type::Unit, Type::sum(Type::Unit, Type::Unit)];
        let mut add = |t: &Type| {
            if t.is_primitive()
                && type_size(t).is_some_and(|n| n <= MAX_TYPE_SIZE)
                && !types.contains(t)
            {
                types.push(t.clone());
            }
        };
        for sig in bundle.signatures.values() {
            for o in sig.ops.values() {
                add(&o.param);
                add(&o.arity);
            }
        }
        for h in bundle.handlers.values() {
            if let Some(t) = &h.handled {
                add(t);
            }
        }
        for t in bundle.aliases.values() {
            add(t);
        }
        Generator {
            bundle,
            rng: ChaCha8Rng::seed_from_u64(seed),
            checker: Checker::new(),
            pools: HashMap::new(),
            factors: HashMap::new(),
            weakenings: HashMap::new(),
            preimages: HashMap::new(),
            targets: HashMap::new(),
            types,
            budget: 0,
            fresh: 0,
        }
    }

    fn pool(&mut self, cat: &GradingCategory) -> Vec<Morphism> {
        self.pools
            .entry(cat.name().to_string())
            .or_insert_with(|| cat.morphisms_up_to(POOL_LEN).unwrap_or_default())
            .clone()
    }

    /// Pairs `(g, h)` with `g;h = f`, from splits of `f`'s normal form and
    /// from pairs of short morphisms.
    fn factorizations(&mut self, cat: &GradingCategory, f: &Morphism) -> Vec<(Morphism, Morphism)> {
        let key = (cat.name().to_string(), f.clone());
        if let Some(v) = self.factors.get(&key) {
            return v.clone();
        }
        let mut out: Vec<(Morphism, Morphism)> = Vec::new();
        for i in 0..=f.path.len() {
            let pre = cat.morphism_from_path(f.path[..i].to_vec(), Some(&f.dom));
            let post = cat.morphism_from_path(f.path[i..].to_vec(), Some(&f.cod));
            if let (Ok(g), Ok(h)) = (pre, post) {
                if cat.compose(&g, &h).ok().as_ref() == Some(f) && !out.contains(&(g.clone(), h.clone())) {
                    out.push((g, h));
                }
            }
        }
        let pool = self.pool(cat);
        for g in pool.iter().filter(|g| g.dom == f.dom) {
            for h in pool.iter().filter(|h| h.cod == f.cod && h.dom == g.cod) {
                if cat.compose(g, h).ok().as_ref() == Some(f) {
                    let pair = (g.clone(), h.clone());
                    if !out.contains(&pair) {
                        out.push(pair);
                    }
                }
            }
        }
        self.factors.insert(key, out.clone());
        out
    }

    /// Grades a program over `world` can plausibly have: composites of up to
    /// three operation grades, wide generators, or images of source
    /// operation grades under handlers into `world`.
    fn targets(&mut self, world: &GradedSignature) -> Vec<Morphism> {
        if let Some(v) = self.targets.get(&world.name) {
            return v.clone();
        }
        let cat = &world.category;
        let mut atoms: Vec<Morphism> = world.ops.values().map(|o| o.grade.clone()).collect();
        for g in cat.generators().iter().filter(|g| g.wide) {
            atoms.extend(cat.generator_morphism(&g.name));
        }
        for h in self.bundle.handlers.values().filter(|h| h.target.name == world.name) {
            for o in h.source.ops.values() {
                atoms.extend(h.functor.apply(&o.grade));
            }
        }
        let mut out: Vec<Morphism> = cat.objects().iter().map(|o| Morphism::identity(o.clone())).collect();
        let mut layer = out.clone();
        for _ in 0..3 {
            let mut next = Vec::new();
            for m in &layer {
                for a in atoms.iter().filter(|a| a.dom == m.cod) {
                    if let Ok(c) = cat.compose(m, a) {
                        if !out.contains(&c) {
                            out.push(c.clone());
                            next.push(c);
                        }
                    }
                }
            }
            layer = next;
        }
        self.targets.insert(world.name.clone(), out.clone());
        out
    }

    /// Grades `g` at the handler's object with `G g = f`.
    fn preimages(&mut self, h: &Handler, f: &Morphism) -> Vec<Morphism> {
        let key = (h.name.clone(), f.clone());
        if let Some(v) = self.preimages.get(&key) {
            return v.clone();
        }
        let out: Vec<Morphism> = self
            .pool(&h.source.category)
            .into_iter()
            .filter(|g| g.cod == h.at && h.functor.apply(g).ok().as_ref() == Some(f))
            .collect();
        self.preimages.insert(key, out.clone());
        out
    }

    /// Triples `(w1, f', w2)` of wide `w1`, `w2`, not both identities, with
    /// `w1;f';w2 = f`.
    fn weakenings(&mut self, cat: &GradingCategory, f: &Morphism) -> Vec<(Morphism, Morphism, Morphism)> {
        let key = (cat.name().to_string(), f.clone());
        if let Some(v) = self.weakenings.get(&key) {
            return v.clone();
        }
        let pool = self.pool(cat);
        let wide: Vec<&Morphism> = pool.iter().filter(|m| cat.in_wide(m)).collect();
        let mut out = Vec::new();
        for w1 in wide.iter().filter(|w| w.dom == f.dom) {
            for w2 in wide.iter().filter(|w| w.cod == f.cod) {
                if w1.is_identity() && w2.is_identity() {
                    continue;
                }
                for inner in pool.iter().filter(|m| m.dom == w1.cod && m.cod == w2.dom) {
                    let whole = cat.compose(w1, inner).and_then(|m| cat.compose(&m, w2));
                    if whole.ok().as_ref() == Some(f) {
                        out.push(((*w1).clone(), inner.clone(), (*w2).clone()));
                    }
                }
            }
        }
        self.weakenings.insert(key, out.clone());
        out
    }

    fn name(&mut self, base: &str) -> String {
        self.fresh += 1;
        format!("{base}{}", self.fresh)
    }

    fn random_type(&mut self) -> Type {
        self.types.choose(&mut self.rng).expect("nonempty").clone()
    }

    pub fn value(&mut self, world: &Arc<GradedSignature>, ctx: &Ctx, ty: &Type, depth: usize) -> Option<Value> {
        let vars: Vec<&String> = ctx.iter().filter(|(_, t)| t == ty).map(|(x, _)| x).collect();
        if !vars.is_empty() && self.rng.gen_bool(0.6) {
            return Some(Value::Var(vars.choose(&mut self.rng)?.to_string()));
        }
        match ty {
            Type::Unit => Some(Value::Star),
            Type::Prod(a, b) => Some(Value::pair(
                self.value(world, ctx, a, depth)?,
                self.value(world, ctx, b, depth)?,
            )),
            Type::Sum(a, b) => {
                if self.rng.gen_bool(0.5) {
                    Some(Value::inl(self.value(world, ctx, a, depth)?, ty.clone()))
                } else {
                    Some(Value::inr(self.value(world, ctx, b, depth)?, ty.clone()))
                }
            }
            Type::Arrow(a, b, f) => {
                if depth == 0 {
                    return vars.first().map(|x| Value::Var(x.to_string()));
                }
                let x = self.name("x");
                let inner = extend(ctx, &x, (**a).clone());
                let body = self.term(world, &inner, b, f, depth - 1)?;
                Some(Value::lam(f.clone(), &x, (**a).clone(), body))
            }
        }
    }

    fn kinds(&mut self, world: &Arc<GradedSignature>, f: &Morphism, depth: usize) -> Vec<Kind> {
        let mut weighted: Vec<(Kind, u32)> = Vec::new();
        if f.is_identity() {
            weighted.push((Kind::Val, 2));
        }
        if depth > 0 {
            weighted.extend([
                (Kind::Op, 3),
                (Kind::Let, 4),
                (Kind::Case, 1),
                (Kind::Split, 1),
                (Kind::App, 1),
                (Kind::Handle, 2),
            ]);
            if world.category.has_wide_generators() {
                weighted.push((Kind::Weaken, 1));
            }
        }
        // weighted order without replacement
        let mut out = Vec::new();
        while !weighted.is_empty() {
            let total: u32 = weighted.iter().map(|(_, w)| w).sum();
            let mut pick = self.rng.gen_range(0..total);
            let i = weighted
                .iter()
                .position(|(_, w)| {
                    if pick < *w {
                        true
                    } else {
                        pick -= w;
                        false
                    }
                })
                .expect("pick below total");
            out.push(weighted.remove(i).0);
        }
        out
    }

    /// Some `M` with `ctx ⊢_f M : ty` in `world`, built to `depth`.
    pub fn term(
        &mut self,
        world: &Arc<GradedSignature>,
        ctx: &Ctx,
        ty: &Type,
        f: &Morphism,
        depth: usize,
    ) -> Option<Comp> {
        if self.budget == 0 {
            return None;
        }
        self.budget -= 1;
        for kind in self.kinds(world, f, depth) {
            if let Some(m) = self.attempt(kind, world, ctx, ty, f, depth) {
                return Some(m);
            }
        }
        None
    }

    fn attempt(
        &mut self,
        kind: Kind,
        world: &Arc<GradedSignature>,
        ctx: &Ctx,
        ty: &Type,
        f: &Morphism,
        depth: usize,
    ) -> Option<Comp> {
        let cat = world.category.clone();
        match kind {
            Kind::Val => Some(Comp::val(&f.dom, self.value(world, ctx, ty, depth.min(2))?)),
            Kind::Op => {
                let ops: Vec<_> = world
                    .ops
                    .values()
                    .filter(|o| o.grade == *f && o.arity == *ty)
                    .cloned()
                    .collect();
                let o = ops.choose(&mut self.rng)?.clone();
                Some(Comp::op(&o.name, self.value(world, ctx, &o.param, 0)?))
            }
            Kind::Let => {
                let mut fs = self.factorizations(&cat, f);
                fs.shuffle(&mut self.rng);
                for (g, h) in fs.into_iter().take(3) {
                    // favour binding the result of an operation
                    let ops: Vec<_> = world.ops.values().filter(|o| o.grade == g).cloned().collect();
                    let b = match ops.choose(&mut self.rng) {
                        Some(o) if self.rng.gen_bool(0.7) => o.arity.clone(),
                        _ => self.random_type(),
                    };
                    let Some(head) = self.term(world, ctx, &b, &g, depth - 1) else {
                        continue;
                    };
                    let x = self.name("x");
                    let inner = extend(ctx, &x, b);
                    if let Some(n) = self.term(world, &inner, ty, &h, depth - 1) {
                        return Some(Comp::let_(&x, head, n));
                    }
                }
                None
            }
            Kind::Case => {
                let sums: Vec<Type> = self.types.iter().filter(|t| matches!(t, Type::Sum(..))).cloned().collect();
                let st = sums.choose(&mut self.rng)?.clone();
                let Type::Sum(a, b) = &st else { unreachable!() };
                let v = self.value(world, ctx, &st, 0)?;
                let (x, y) = (self.name("x"), self.name("y"));
                let m1 = self.term(world, &extend(ctx, &x, (**a).clone()), ty, f, depth - 1)?;
                let m2 = self.term(world, &extend(ctx, &y, (**b).clone()), ty, f, depth - 1)?;
                Some(Comp::case(v, &x, m1, &y, m2))
            }
            Kind::Split => {
                let (a, b) = (self.random_type(), self.random_type());
                let pt = Type::prod(a.clone(), b.clone());
                let v = self.value(world, ctx, &pt, 0)?;
                let (x, y) = (self.name("x"), self.name("y"));
                let inner = extend(&extend(ctx, &x, a), &y, b);
                let body = self.term(world, &inner, ty, f, depth - 1)?;
                Some(Comp::split(v, &x, &y, body))
            }
            Kind::App => {
                let b = self.random_type();
                let fun_ty = Type::arrow(b.clone(), ty.clone(), f.clone());
                let lam = self.value(world, ctx, &fun_ty, depth - 1)?;
                let arg = self.value(world, ctx, &b, 0)?;
                if self.rng.gen_bool(0.5) {
                    Some(Comp::App(lam, arg))
                } else {
                    // bind the function first so that it flows through a leaf
                    let g = self.name("g");
                    Some(Comp::let_(
                        &g,
                        Comp::val(&f.dom, lam),
                        Comp::App(Value::Var(g.clone()), arg),
                    ))
                }
            }
            Kind::Handle => {
                let mut pool: Vec<Arc<Handler>> = self
                    .bundle
                    .handlers
                    .values()
                    .filter(|h| h.target.name == world.name)
                    .cloned()
                    .collect();
                pool.shuffle(&mut self.rng);
                let delta: Ctx = ctx.iter().filter(|(_, t)| t.is_primitive()).cloned().collect();
                for h in pool.into_iter().take(2) {
                    let mut grades = self.preimages(&h, f);
                    if grades.is_empty() {
                        continue;
                    }
                    let mut handled: Vec<Type> = self
                        .types
                        .clone()
                        .into_iter()
                        .filter(|r| {
                            self.checker
                                .check_handler(&h, r)
                                .is_ok_and(|p| p.result == *ty)
                        })
                        .collect();
                    handled.shuffle(&mut self.rng);
                    grades.shuffle(&mut self.rng);
                    let (Some(r), Some(g)) = (handled.first().cloned(), grades.first().cloned()) else {
                        continue;
                    };
                    let source = h.source.clone();
                    if let Some(body) = self.term(&source, &delta, &r, &g, depth - 1) {
                        return Some(Comp::handle(body, h));
                    }
                }
                None
            }
            Kind::Weaken => {
                let options = self.weakenings(&cat, f);
                let (w1, inner, w2) = options.choose(&mut self.rng)?.clone();
                let body = self.term(world, ctx, ty, &inner, depth - 1)?;
                Some(Comp::weaken(w1, body, w2))
            }
        }
    }

    /// Some `M` with `ctx ⊢_f M : ty`, re-checked before returning.
    pub fn open_term(
        &mut self,
        world: &Arc<GradedSignature>,
        ctx: &Ctx,
        ty: &Type,
        f: &Morphism,
        depth: usize,
    ) -> Option<Comp> {
        for _ in 0..ATTEMPTS {
            self.budget = CALL_BUDGET;
            let Some(body) = self.term(world, ctx, ty, f, depth) else {
                continue;
            };
            if let Ok((t, g)) = self.checker.grade_of_computation(ctx, world, &body) {
                if t == *ty && g == *f {
                    return Some(body);
                }
            }
        }
        None
    }

    /// Grades worth asking of programs over `world`.
    pub fn target_grades(&mut self, world: &GradedSignature) -> Vec<Morphism> {
        self.targets(world)
    }

    /// A closed term with the given judgement, re-checked before returning.
    pub fn program_at(
        &mut self,
        world: &Arc<GradedSignature>,
        ty: &Type,
        f: &Morphism,
        depth: usize,
    ) -> Option<Generated> {
        for _ in 0..ATTEMPTS {
            self.budget = CALL_BUDGET;
            self.fresh = 0;
            let Some(body) = self.term(world, &Vec::new(), ty, f, depth) else {
                continue;
            };
            match self.checker.grade_of_computation(&Vec::new(), world, &body) {
                Ok((t, g)) if t == *ty && g == *f => {
                    return Some(Generated {
                        world: world.clone(),
                        ty: ty.clone(),
                        grade: f.clone(),
                        body,
                    })
                }
                _ => continue,
            }
        }
        None
    }

    /// A closed term of primitive type over a random signature and grade.
    pub fn random_program(&mut self, depth: usize) -> Option<Generated> {
        let worlds: Vec<Arc<GradedSignature>> = self.bundle.signatures.values().cloned().collect();
        for _ in 0..ATTEMPTS {
            let world = worlds.choose(&mut self.rng)?.clone();
            let grades = self.targets(&world);
            let f = grades.choose(&mut self.rng)?.clone();
            let ty = self.random_type();
            if let Some(g) = self.program_at(&world, &ty, &f, depth) {
                return Some(g);
            }
        }
        None
    }
}

fn extend(ctx: &Ctx, x: &str, ty: Type) -> Ctx {
    crate::typecheck::extend(ctx, x, ty)
}

/// `count` closed well-graded computations of depth at most `depth`,
/// deterministic in `seed`.
pub fn generate_wellgraded_terms(
    bundle: &Bundle,
    seed: u64,
    count: usize,
    depth: usize,
) -> Result<Vec<Generated>, GenError> {
    if bundle.signatures.is_empty() {
        return Err(GenError::NoSignature);
    }
    let mut g = Generator::new(bundle, seed);
    let mut out = Vec::with_capacity(count);
    let mut misses = 0;
    while out.len() < count {
        match g.random_program(depth) {
            Some(p) => out.push(p),
            None => {
                misses += 1;
                if misses > count.max(10) {
                    return Err(GenError::GenerationExhausted {
                        wanted: count,
                        found: out.len(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Closed programs of type `1` at identity grades, spread over every
/// signature and object of the bundle.
pub fn generate_unit_programs(
    bundle: &Bundle,
    seed: u64,
    count: usize,
    depth: usize,
) -> Result<Vec<Generated>, GenError> {
    let targets: Vec<(Arc<GradedSignature>, Morphism)> = bundle
        .signatures
        .values()
        .flat_map(|s| {
            s.category
                .objects()
                .iter()
                .map(|o| (s.clone(), Morphism::identity(o.clone())))
                .collect::<Vec<_>>()
        })
        .collect();
    if targets.is_empty() {
        return Err(GenError::NoSignature);
    }
    let mut g = Generator::new(bundle, seed);
    let mut out = Vec::with_capacity(count);
    let mut misses = 0;
    let mut i = 0;
    while out.len() < count {
        let (world, f) = &targets[i % targets.len()];
        i += 1;
        match g.program_at(world, &Type::Unit, f, depth) {
            Some(p) => out.push(p),
            None => {
                misses += 1;
                if misses > count.max(10) {
                    return Err(GenError::GenerationExhausted {
                        wanted: count,
                        found: out.len(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Maximal nesting of computations in a term.
pub fn comp_depth(m: &Comp) -> usize {
    fn value_depth(v: &Value) -> usize {
        match v {
            Value::Var(_) | Value::Star => 0,
            Value::Inl(v, _) | Value::Inr(v, _) => value_depth(v),
            Value::Pair(a, b) => value_depth(a).max(value_depth(b)),
            Value::Lam(l) => 1 + comp_depth(&l.body),
        }
    }
    match m {
        Comp::Val(_, v) => value_depth(v),
        Comp::Op(_, v) => 1 + value_depth(v),
        Comp::App(v, w) => 1 + value_depth(v).max(value_depth(w)),
        Comp::Let(_, a, b) => 1 + comp_depth(a).max(comp_depth(b)),
        Comp::Split(v, _, _, b) => 1 + value_depth(v).max(comp_depth(b)),
        Comp::Case(v, _, a, _, b) => 1 + value_depth(v).max(comp_depth(a)).max(comp_depth(b)),
        Comp::Handle(b, _) | Comp::Weaken(_, b, _) => 1 + comp_depth(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_bundle;

    fn theory(name: &str) -> Bundle {
        let path = format!("{}/theories/{name}", env!("CARGO_MANIFEST_DIR"));
        parse_bundle(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn depth_zero_gives_a_value() {
        let b = theory("ex36.ceff");
        let out = generate_unit_programs(&b, 1, 1, 0).unwrap();
        assert!(matches!(out[0].body, Comp::Val(..)));
    }

    #[test]
    fn deterministic_in_seed() {
        let b = theory("ex36.ceff");
        let a = generate_wellgraded_terms(&b, 7, 20, 4).unwrap();
        let c = generate_wellgraded_terms(&b, 7, 20, 4).unwrap();
        let show = |v: &[Generated]| v.iter().map(|g| g.body.to_string()).collect::<Vec<_>>();
        assert_eq!(show(&a), show(&c));
    }

    #[test]
    fn generated_terms_recheck() {
        let b = theory("ex36.ceff");
        let checker = Checker::new();
        for g in generate_wellgraded_terms(&b, 3, 50, 5).unwrap() {
            let (t, f) = checker.grade_of_computation(&Vec::new(), &g.world, &g.body).unwrap();
            assert_eq!((t, f), (g.ty.clone(), g.grade.clone()));
        }
    }
}
