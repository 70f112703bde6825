//! Finitely presented grading categories.
//!
//! A category is given by objects, generating morphisms and oriented rewrite
//! rules between generator paths. Morphisms are generator paths kept in
//! normal form, so equality of morphisms is plain structural equality once
//! both sides have been normalized by the same category.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Default bound on rewrite steps performed by a single normalization.
pub const DEFAULT_STEP_CAP: usize = 10_000;

/// Length of the generator paths enumerated when checking termination.
const TERMINATION_PROBE_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GradingError {
    #[error("rule `{lhs} = {rhs}` connects {lhs_dom}->{lhs_cod} with {rhs_dom}->{rhs_cod}")]
    EndpointMismatch {
        lhs: String,
        rhs: String,
        lhs_dom: String,
        lhs_cod: String,
        rhs_dom: String,
        rhs_cod: String,
    },
    #[error("rewriting `{0}` exceeded the step cap of {1}")]
    NonTerminatingRules(String, usize),
    #[error("rules are not confluent: `{word}` rewrites to both `{left}` and `{right}`")]
    NotConfluent {
        word: String,
        left: String,
        right: String,
    },
    #[error("cannot compose {0} with {1}")]
    NotComposable(String, String),
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("duplicate declaration `{0}`")]
    Duplicate(String),
    #[error("rule has an empty left-hand side")]
    EmptyRule,
    #[error("identity needs an explicit object here")]
    AmbiguousIdentity,
    #[error("wide subcategory is not closed: rule `{0}` leaves the marked generators")]
    WideNotClosed(String),
    #[error("functor {functor}: {reason}")]
    BadFunctor { functor: String, reason: String },
}

/// A morphism of a grading category: a generator path in normal form.
///
/// The empty path is the identity on `dom` (which then equals `cod`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Morphism {
    pub dom: String,
    pub cod: String,
    pub path: Vec<String>,
}

impl Morphism {
    pub fn identity(obj: impl Into<String>) -> Self {
        let obj = obj.into();
        Morphism {
            dom: obj.clone(),
            cod: obj,
            path: Vec::new(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.path.is_empty()
    }

    /// Concrete-syntax form, generators separated by `.`.
    pub fn source_form(&self) -> String {
        if self.path.is_empty() {
            format!("id_{}", self.dom)
        } else {
            self.path.join(".")
        }
    }
}

/// Displays the diagrammatic composite `g1;g2;...`, or `id_a`.
impl fmt::Display for Morphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "id_{}", self.dom)
        } else {
            write!(f, "{}", self.path.join(";"))
        }
    }
}

/// A morphism as written in source, before it is resolved against a category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathExpr {
    /// `id` or `id_a`.
    Id(Option<String>),
    Gens(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generator {
    pub name: String,
    pub dom: String,
    pub cod: String,
    pub wide: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub lhs: Vec<String>,
    pub rhs: Vec<String>,
}

/// Declarations from which a category is built.
#[derive(Debug, Clone, Default)]
pub struct Presentation {
    pub name: String,
    pub objects: Vec<String>,
    /// `(name, dom, cod)`.
    pub generators: Vec<(String, String, String)>,
    /// `(lhs, rhs)`; an empty rhs denotes the identity.
    pub rules: Vec<(Vec<String>, Vec<String>)>,
    pub wide: Vec<String>,
}

impl Presentation {
    pub fn new(name: impl Into<String>) -> Self {
        Presentation {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn object(mut self, name: &str) -> Self {
        self.objects.push(name.to_string());
        self
    }

    pub fn generator(mut self, name: &str, dom: &str, cod: &str) -> Self {
        self.generators
            .push((name.to_string(), dom.to_string(), cod.to_string()));
        self
    }

    pub fn rule(mut self, lhs: &[&str], rhs: &[&str]) -> Self {
        self.rules.push((
            lhs.iter().map(|s| s.to_string()).collect(),
            rhs.iter().map(|s| s.to_string()).collect(),
        ));
        self
    }

    pub fn wide(mut self, gen: &str) -> Self {
        self.wide.push(gen.to_string());
        self
    }
}

/// A finitely presented small category with decidable morphism equality.
#[derive(Debug, Clone)]
pub struct GradingCategory {
    name: String,
    objects: Vec<String>,
    generators: Vec<Generator>,
    gen_index: HashMap<String, usize>,
    rules: Vec<Rule>,
    step_cap: usize,
}

pub fn build_category(p: &Presentation) -> Result<GradingCategory, GradingError> {
    build_category_with_cap(p, DEFAULT_STEP_CAP)
}

pub fn build_category_with_cap(
    p: &Presentation,
    step_cap: usize,
) -> Result<GradingCategory, GradingError> {
    let mut objects = Vec::new();
    let mut seen = HashSet::new();
    for o in &p.objects {
        if !seen.insert(o.clone()) {
            return Err(GradingError::Duplicate(o.clone()));
        }
        objects.push(o.clone());
    }
    let mut generators = Vec::new();
    let mut gen_index = HashMap::new();
    for (name, dom, cod) in &p.generators {
        for o in [dom, cod] {
            if !seen.contains(o) {
                return Err(GradingError::UnknownObject(o.clone()));
            }
        }
        if gen_index.insert(name.clone(), generators.len()).is_some() {
            return Err(GradingError::Duplicate(name.clone()));
        }
        generators.push(Generator {
            name: name.clone(),
            dom: dom.clone(),
            cod: cod.clone(),
            wide: false,
        });
    }
    for w in &p.wide {
        let i = *gen_index
            .get(w)
            .ok_or_else(|| GradingError::UnknownGenerator(w.clone()))?;
        generators[i].wide = true;
    }
    let mut cat = GradingCategory {
        name: p.name.clone(),
        objects,
        generators,
        gen_index,
        rules: Vec::new(),
        step_cap,
    };
    for (lhs, rhs) in &p.rules {
        if lhs.is_empty() {
            return Err(GradingError::EmptyRule);
        }
        let (ld, lc) = cat.path_endpoints(lhs, None)?;
        let (rd, rc) = cat.path_endpoints(rhs, Some(&ld))?;
        if ld != rd || lc != rc {
            return Err(GradingError::EndpointMismatch {
                lhs: lhs.join("."),
                rhs: if rhs.is_empty() {
                    "id".into()
                } else {
                    rhs.join(".")
                },
                lhs_dom: ld,
                lhs_cod: lc,
                rhs_dom: rd,
                rhs_cod: rc,
            });
        }
        cat.rules.push(Rule {
            lhs: lhs.clone(),
            rhs: rhs.clone(),
        });
    }
    cat.check_termination()?;
    cat.check_confluence()?;
    cat.check_wide_closed()?;
    Ok(cat)
}

impl GradingCategory {
    /// One object, no generators.
    pub fn trivial(name: &str, object: &str) -> GradingCategory {
        build_category(&Presentation::new(name).object(object)).expect("trivial category")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn has_object(&self, o: &str) -> bool {
        self.objects.iter().any(|x| x == o)
    }

    pub fn generator(&self, name: &str) -> Option<&Generator> {
        self.gen_index.get(name).map(|&i| &self.generators[i])
    }

    pub fn identity(&self, obj: &str) -> Result<Morphism, GradingError> {
        if !self.has_object(obj) {
            return Err(GradingError::UnknownObject(obj.to_string()));
        }
        Ok(Morphism::identity(obj))
    }

    /// Endpoints of a composable path; `empty_at` supplies the object of an
    /// empty path.
    fn path_endpoints(
        &self,
        path: &[String],
        empty_at: Option<&str>,
    ) -> Result<(String, String), GradingError> {
        let Some(first) = path.first() else {
            let o = empty_at.ok_or(GradingError::AmbiguousIdentity)?;
            return Ok((o.to_string(), o.to_string()));
        };
        let g = self
            .generator(first)
            .ok_or_else(|| GradingError::UnknownGenerator(first.clone()))?;
        let dom = g.dom.clone();
        let mut cod = g.cod.clone();
        for name in &path[1..] {
            let g = self
                .generator(name)
                .ok_or_else(|| GradingError::UnknownGenerator(name.clone()))?;
            if g.dom != cod {
                return Err(GradingError::NotComposable(
                    path.join("."),
                    format!("{} at {}", name, cod),
                ));
            }
            cod = g.cod.clone();
        }
        Ok((dom, cod))
    }

    /// Builds the morphism denoted by a generator path.
    pub fn morphism(&self, path: &[&str]) -> Result<Morphism, GradingError> {
        let path: Vec<String> = path.iter().map(|s| s.to_string()).collect();
        self.morphism_from_path(path, None)
    }

    pub fn morphism_from_path(
        &self,
        path: Vec<String>,
        empty_at: Option<&str>,
    ) -> Result<Morphism, GradingError> {
        let (dom, cod) = self.path_endpoints(&path, empty_at)?;
        if path.is_empty() {
            return self.identity(&dom);
        }
        let path = self.normalize(path)?;
        Ok(Morphism { dom, cod, path })
    }

    pub fn generator_morphism(&self, name: &str) -> Result<Morphism, GradingError> {
        self.morphism(&[name])
    }

    /// Resolves a source-level path; `id` without object uses `id_hint`.
    pub fn resolve(&self, e: &PathExpr, id_hint: Option<&str>) -> Result<Morphism, GradingError> {
        match e {
            PathExpr::Id(Some(o)) => self.identity(o),
            PathExpr::Id(None) => {
                let o = id_hint.ok_or(GradingError::AmbiguousIdentity)?;
                self.identity(o)
            }
            PathExpr::Gens(gs) => self.morphism_from_path(gs.clone(), id_hint),
        }
    }

    /// Checks that a morphism is a well-formed normal-form morphism of this category.
    pub fn contains(&self, m: &Morphism) -> bool {
        if !self.has_object(&m.dom) || !self.has_object(&m.cod) {
            return false;
        }
        match self.path_endpoints(&m.path, Some(&m.dom)) {
            Ok((d, c)) => d == m.dom && c == m.cod && self.is_normal(&m.path),
            Err(_) => false,
        }
    }

    /// Diagrammatic composite `f;g` (first `f`, then `g`).
    pub fn compose(&self, f: &Morphism, g: &Morphism) -> Result<Morphism, GradingError> {
        if f.cod != g.dom {
            return Err(GradingError::NotComposable(f.to_string(), g.to_string()));
        }
        let mut path = f.path.clone();
        path.extend(g.path.iter().cloned());
        Ok(Morphism {
            dom: f.dom.clone(),
            cod: g.cod.clone(),
            path: self.normalize(path)?,
        })
    }

    pub fn compose_all<'a>(
        &self,
        first: &Morphism,
        rest: impl IntoIterator<Item = &'a Morphism>,
    ) -> Result<Morphism, GradingError> {
        let mut acc = first.clone();
        for m in rest {
            acc = self.compose(&acc, m)?;
        }
        Ok(acc)
    }

    fn find_redex(&self, path: &[String]) -> Option<(usize, usize)> {
        for i in 0..path.len() {
            for (ri, r) in self.rules.iter().enumerate() {
                if path[i..].starts_with(&r.lhs) {
                    return Some((i, ri));
                }
            }
        }
        None
    }

    fn is_normal(&self, path: &[String]) -> bool {
        self.find_redex(path).is_none()
    }

    /// Rewrites leftmost-first (first declared rule at the leftmost position)
    /// until no rule applies.
    pub fn normalize(&self, mut path: Vec<String>) -> Result<Vec<String>, GradingError> {
        let mut steps = 0;
        while let Some((i, ri)) = self.find_redex(&path) {
            steps += 1;
            if steps > self.step_cap {
                return Err(GradingError::NonTerminatingRules(
                    path.join("."),
                    self.step_cap,
                ));
            }
            let r = &self.rules[ri];
            path.splice(i..i + r.lhs.len(), r.rhs.iter().cloned());
        }
        Ok(path)
    }

    /// All composable generator paths of exactly `len` generators.
    pub fn paths_of_len(&self, len: usize) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = vec![Vec::new()];
        for _ in 0..len {
            let mut next = Vec::new();
            for p in &out {
                let last_cod = p
                    .last()
                    .map(|n| self.generator(n).expect("own generator").cod.clone());
                for g in &self.generators {
                    if last_cod.as_ref().is_none_or(|c| *c == g.dom) {
                        let mut q = p.clone();
                        q.push(g.name.clone());
                        next.push(q);
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Distinct normal-form morphisms reachable by paths of at most `max_len`
    /// generators, identities included.
    pub fn morphisms_up_to(&self, max_len: usize) -> Result<Vec<Morphism>, GradingError> {
        let mut seen = BTreeSet::new();
        for o in &self.objects {
            seen.insert(Morphism::identity(o.clone()));
        }
        for len in 1..=max_len {
            for p in self.paths_of_len(len) {
                seen.insert(self.morphism_from_path(p, None)?);
            }
        }
        Ok(seen.into_iter().collect())
    }

    fn check_termination(&self) -> Result<(), GradingError> {
        if self.rules.is_empty() {
            return Ok(());
        }
        for len in 1..=TERMINATION_PROBE_LEN {
            for p in self.paths_of_len(len) {
                self.normalize(p)?;
            }
        }
        for r in &self.rules {
            self.normalize(r.lhs.clone())?;
        }
        Ok(())
    }

    /// Local confluence over every critical pair of the rule set.
    fn check_confluence(&self) -> Result<(), GradingError> {
        let check = |word: Vec<String>, a: Vec<String>, b: Vec<String>| {
            let na = self.normalize(a)?;
            let nb = self.normalize(b)?;
            if na != nb {
                return Err(GradingError::NotConfluent {
                    word: word.join("."),
                    left: show_path(&na),
                    right: show_path(&nb),
                });
            }
            Ok(())
        };
        for r1 in &self.rules {
            for r2 in &self.rules {
                let (l1, l2) = (&r1.lhs, &r2.lhs);
                // suffix of l1 overlapping a prefix of l2
                for j in 1..l1.len().min(l2.len()) {
                    if l1[l1.len() - j..] == l2[..j] {
                        let mut word = l1.clone();
                        word.extend(l2[j..].iter().cloned());
                        let mut a = r1.rhs.clone();
                        a.extend(l2[j..].iter().cloned());
                        let mut b = l1[..l1.len() - j].to_vec();
                        b.extend(r2.rhs.iter().cloned());
                        check(word, a, b)?;
                    }
                }
                // l2 strictly inside l1
                if l2.len() <= l1.len() && !std::ptr::eq(r1, r2) {
                    for i in 0..=(l1.len() - l2.len()) {
                        if l1[i..i + l2.len()] == l2[..] {
                            let mut b = l1[..i].to_vec();
                            b.extend(r2.rhs.iter().cloned());
                            b.extend(l1[i + l2.len()..].iter().cloned());
                            check(l1.clone(), r1.rhs.clone(), b)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_wide_closed(&self) -> Result<(), GradingError> {
        for r in &self.rules {
            let lhs_wide = r.lhs.iter().all(|g| self.is_wide_generator(g));
            let rhs_wide = r.rhs.iter().all(|g| self.is_wide_generator(g));
            if lhs_wide && !rhs_wide {
                return Err(GradingError::WideNotClosed(format!(
                    "{} = {}",
                    r.lhs.join("."),
                    show_path(&r.rhs)
                )));
            }
        }
        Ok(())
    }

    fn is_wide_generator(&self, g: &str) -> bool {
        self.generator(g).is_some_and(|g| g.wide)
    }

    /// Membership in the wide subcategory: identities, and normal forms made
    /// only of marked generators.
    pub fn in_wide(&self, m: &Morphism) -> bool {
        m.path.iter().all(|g| self.is_wide_generator(g))
    }

    pub fn has_wide_generators(&self) -> bool {
        self.generators.iter().any(|g| g.wide)
    }
}

fn show_path(p: &[String]) -> String {
    if p.is_empty() {
        "id".to_string()
    } else {
        p.join(".")
    }
}

/// A functor between two finitely presented categories, given on generators.
#[derive(Debug, Clone)]
pub struct GradingFunctor {
    pub name: String,
    pub source: Arc<GradingCategory>,
    pub target: Arc<GradingCategory>,
    object_map: HashMap<String, String>,
    generator_map: HashMap<String, Morphism>,
}

pub fn build_functor(
    name: &str,
    source: Arc<GradingCategory>,
    target: Arc<GradingCategory>,
    object_map: HashMap<String, String>,
    generator_map: HashMap<String, Morphism>,
) -> Result<GradingFunctor, GradingError> {
    let bad = |reason: String| GradingError::BadFunctor {
        functor: name.to_string(),
        reason,
    };
    for o in source.objects() {
        let img = object_map
            .get(o)
            .ok_or_else(|| bad(format!("object `{o}` is not mapped")))?;
        if !target.has_object(img) {
            return Err(bad(format!("`{img}` is not an object of {}", target.name())));
        }
    }
    for g in source.generators() {
        let img = generator_map
            .get(&g.name)
            .ok_or_else(|| bad(format!("generator `{}` is not mapped", g.name)))?;
        if !target.contains(img) {
            return Err(bad(format!("image of `{}` is not a morphism of {}", g.name, target.name())));
        }
        if img.dom != object_map[&g.dom] || img.cod != object_map[&g.cod] {
            return Err(bad(format!(
                "image {} of `{}` does not run {} -> {}",
                img, g.name, object_map[&g.dom], object_map[&g.cod]
            )));
        }
    }
    let f = GradingFunctor {
        name: name.to_string(),
        source,
        target,
        object_map,
        generator_map,
    };
    for r in f.source.rules() {
        let (dom, _) = f.source.path_endpoints(&r.lhs, None)?;
        let l = f.map_path(&r.lhs, &dom)?;
        let rr = f.map_path(&r.rhs, &dom)?;
        if l != rr {
            return Err(bad(format!(
                "rule {} = {} maps to {} and {}",
                r.lhs.join("."),
                show_path(&r.rhs),
                l,
                rr
            )));
        }
    }
    Ok(f)
}

impl GradingFunctor {
    /// The identity functor on a category.
    pub fn identity(name: &str, cat: Arc<GradingCategory>) -> GradingFunctor {
        let object_map = cat.objects().iter().map(|o| (o.clone(), o.clone())).collect();
        let generator_map = cat
            .generators()
            .iter()
            .map(|g| {
                let m = Morphism {
                    dom: g.dom.clone(),
                    cod: g.cod.clone(),
                    path: vec![g.name.clone()],
                };
                // a generator may be reducible on its own (e.g. `t = id`)
                let path = cat.normalize(m.path.clone()).expect("validated rules");
                (g.name.clone(), Morphism { path, ..m })
            })
            .collect();
        build_functor(name, cat.clone(), cat, object_map, generator_map).expect("identity functor")
    }

    /// Sends everything in `source` to the identity on `object` of `target`.
    pub fn collapse(
        name: &str,
        source: Arc<GradingCategory>,
        target: Arc<GradingCategory>,
        object: &str,
    ) -> Result<GradingFunctor, GradingError> {
        let object_map = source
            .objects()
            .iter()
            .map(|o| (o.clone(), object.to_string()))
            .collect();
        let generator_map = source
            .generators()
            .iter()
            .map(|g| (g.name.clone(), Morphism::identity(object)))
            .collect();
        build_functor(name, source, target, object_map, generator_map)
    }

    pub fn map_object(&self, o: &str) -> Option<&str> {
        self.object_map.get(o).map(|s| s.as_str())
    }

    fn map_path(&self, path: &[String], dom: &str) -> Result<Morphism, GradingError> {
        let start = self
            .map_object(dom)
            .ok_or_else(|| GradingError::UnknownObject(dom.to_string()))?;
        let mut acc = Morphism::identity(start);
        for g in path {
            let img = self
                .generator_map
                .get(g)
                .ok_or_else(|| GradingError::UnknownGenerator(g.clone()))?;
            acc = self.target.compose(&acc, img)?;
        }
        Ok(acc)
    }

    /// Image of a source morphism, normalized in the target.
    pub fn apply(&self, f: &Morphism) -> Result<Morphism, GradingError> {
        self.map_path(&f.path, &f.dom)
    }

    /// Whether wide generators of the source land in the target's wide subcategory.
    pub fn preserves_wide(&self) -> bool {
        self.source
            .generators()
            .iter()
            .filter(|g| g.wide)
            .all(|g| self.target.in_wide(&self.generator_map[&g.name]))
    }
}

/// Name of the fresh generator standing for the pair `(a, b)`.
pub fn pair_generator_name(a: &str, b: &str) -> String {
    format!("⟨{a},{b}⟩")
}

/// The pair completion: one absorbing generator `⟨a,b⟩` per ordered pair of
/// objects. The original generators form the wide subcategory.
pub fn pair_completion(s: &GradingCategory, name: &str) -> Result<GradingCategory, GradingError> {
    let mut p = Presentation::new(name);
    p.objects = s.objects().to_vec();
    for g in s.generators() {
        p.generators
            .push((g.name.clone(), g.dom.clone(), g.cod.clone()));
        p.wide.push(g.name.clone());
    }
    for r in s.rules() {
        p.rules.push((r.lhs.clone(), r.rhs.clone()));
    }
    let objs = s.objects();
    for a in objs {
        for b in objs {
            p.generators
                .push((pair_generator_name(a, b), a.clone(), b.clone()));
        }
    }
    for a in objs {
        for b in objs {
            for c in objs {
                // in2(b,c) . in2(a,b) = in2(a,c)
                p.rules.push((
                    vec![pair_generator_name(a, b), pair_generator_name(b, c)],
                    vec![pair_generator_name(a, c)],
                ));
            }
        }
    }
    for g in s.generators() {
        for z in objs {
            // in2(b,c) . in1 f = in2(a,c)
            p.rules.push((
                vec![g.name.clone(), pair_generator_name(&g.cod, z)],
                vec![pair_generator_name(&g.dom, z)],
            ));
            // in1 g . in2(a,b) = in2(a,c)
            p.rules.push((
                vec![pair_generator_name(z, &g.dom), g.name.clone()],
                vec![pair_generator_name(z, &g.cod)],
            ));
        }
    }
    build_category_with_cap(&p, s.step_cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ex36() -> GradingCategory {
        let objs = ["1", "int"];
        let mut p = Presentation::new("S36").object("1").object("int");
        for a in objs {
            for b in objs {
                p = p
                    .generator(&format!("recv^{a}_{b}"), a, b)
                    .generator(&format!("τ^{a}_{b}"), a, b)
                    .wide(&format!("τ^{a}_{b}"));
            }
            p = p.generator(&format!("send_{a}"), a, a);
        }
        for a in objs {
            for b in objs {
                for c in objs {
                    p = p.rule(
                        &[&format!("τ^{a}_{b}"), &format!("τ^{b}_{c}")],
                        &[&format!("τ^{a}_{c}")],
                    );
                }
            }
            p = p.rule(&[&format!("τ^{a}_{a}")], &[]);
        }
        build_category(&p).unwrap()
    }

    #[test]
    fn ex36_presentation_builds() {
        let c = ex36();
        assert_eq!(c.objects().len(), 2);
        assert_eq!(c.rules().len(), 10);
    }

    #[test]
    fn trivial_category_has_only_identities() {
        let c = build_category(&Presentation::new("T").object("a")).unwrap();
        assert_eq!(c.morphisms_up_to(4).unwrap(), vec![Morphism::identity("a")]);
    }

    #[test]
    fn endpoint_mismatch_is_rejected() {
        let p = Presentation::new("S")
            .object("a")
            .object("b")
            .object("c")
            .generator("f", "a", "b")
            .generator("g", "a", "c")
            .rule(&["f"], &["g"]);
        assert!(matches!(
            build_category(&p),
            Err(GradingError::EndpointMismatch { .. })
        ));
    }

    #[test]
    fn nonterminating_rules_are_rejected() {
        let p = Presentation::new("S")
            .object("a")
            .generator("f", "a", "a")
            .rule(&["f"], &["f", "f"]);
        assert!(matches!(
            build_category(&p),
            Err(GradingError::NonTerminatingRules(..))
        ));
    }

    #[test]
    fn nonconfluent_rules_are_rejected() {
        // f.g -> h1 and g.k -> h2 overlap on f.g.k with distinct normal forms
        let p = Presentation::new("S")
            .object("a")
            .generator("f", "a", "a")
            .generator("g", "a", "a")
            .generator("k", "a", "a")
            .generator("h1", "a", "a")
            .generator("h2", "a", "a")
            .rule(&["f", "g"], &["h1"])
            .rule(&["g", "k"], &["h2"]);
        assert!(matches!(
            build_category(&p),
            Err(GradingError::NotConfluent { .. })
        ));
    }

    #[test]
    fn wide_must_be_closed() {
        let p = Presentation::new("S")
            .object("a")
            .object("b")
            .generator("w", "a", "b")
            .generator("v", "b", "a")
            .generator("x", "a", "a")
            .rule(&["w", "v"], &["x"])
            .wide("w")
            .wide("v");
        assert!(matches!(
            build_category(&p),
            Err(GradingError::WideNotClosed(_))
        ));
    }

    #[test]
    fn compose_examples() {
        let c = ex36();
        let f = c.morphism(&["τ^1_int"]).unwrap();
        let id = c.identity("1").unwrap();
        assert_eq!(c.compose(&id, &f).unwrap(), f);
        let back = c.morphism(&["τ^int_1"]).unwrap();
        assert_eq!(c.compose(&f, &back).unwrap(), Morphism::identity("1"));
        let send = c.morphism(&["send_int"]).unwrap();
        assert_eq!(c.compose(&f, &send).unwrap().to_string(), "τ^1_int;send_int");
        assert!(matches!(
            c.compose(&send, &f),
            Err(GradingError::NotComposable(..))
        ));
    }

    #[test]
    fn identity_generator_reduces() {
        let c = ex36();
        assert!(c.morphism(&["τ^int_int"]).unwrap().is_identity());
        assert!(c.in_wide(&c.morphism(&["τ^1_int"]).unwrap()));
        assert!(!c.in_wide(&c.morphism(&["send_1"]).unwrap()));
    }

    #[test]
    fn normalization_is_idempotent() {
        let c = ex36();
        for len in 0..=6 {
            for p in c.paths_of_len(len) {
                let n = c.normalize(p).unwrap();
                assert_eq!(c.normalize(n.clone()).unwrap(), n);
            }
        }
    }

    #[test]
    fn associativity_on_generator_triples() {
        let c = ex36();
        for p in c.paths_of_len(3) {
            let [f, g, h] = [0, 1, 2].map(|i| c.morphism(&[p[i].as_str()]).unwrap());
            let l = c.compose(&c.compose(&f, &g).unwrap(), &h).unwrap();
            let r = c.compose(&f, &c.compose(&g, &h).unwrap()).unwrap();
            assert_eq!(l, r);
        }
    }

    fn handler_example_cats() -> (Arc<GradingCategory>, Arc<GradingCategory>) {
        let s = build_category(
            &Presentation::new("S")
                .object("c")
                .object("d")
                .object("e")
                .generator("g", "c", "d")
                .generator("h", "d", "e"),
        )
        .unwrap();
        (Arc::new(s), Arc::new(GradingCategory::trivial("S'", "•")))
    }

    #[test]
    fn collapse_functor_sends_everything_to_identity() {
        let (s, t) = handler_example_cats();
        let g = GradingFunctor::collapse("G", s.clone(), t, "•").unwrap();
        let m = s.morphism(&["g", "h"]).unwrap();
        assert_eq!(g.apply(&m).unwrap(), Morphism::identity("•"));
        assert_eq!(
            g.apply(&Morphism::identity("c")).unwrap(),
            Morphism::identity("•")
        );
        let stray = Morphism {
            dom: "c".into(),
            cod: "d".into(),
            path: vec!["nope".into()],
        };
        assert!(matches!(
            g.apply(&stray),
            Err(GradingError::UnknownGenerator(_))
        ));
    }

    #[test]
    fn functor_must_respect_rules() {
        let s = Arc::new(ex36());
        let t = Arc::new(
            build_category(
                &Presentation::new("T")
                    .object("x")
                    .generator("u", "x", "x"),
            )
            .unwrap(),
        );
        let objs = s.objects().iter().map(|o| (o.clone(), "x".to_string())).collect();
        // every generator to u: τ^1_1 = id forces u = id, which fails
        let gens = s
            .generators()
            .iter()
            .map(|g| (g.name.clone(), t.morphism(&["u"]).unwrap()))
            .collect();
        assert!(matches!(
            build_functor("F", s, t, objs, gens),
            Err(GradingError::BadFunctor { .. })
        ));
    }

    #[test]
    fn pair_completion_homs() {
        let s = build_category(&Presentation::new("D").object("a").object("b")).unwrap();
        let n = pair_completion(&s, "D∇").unwrap();
        let homs: Vec<_> = n
            .morphisms_up_to(4)
            .unwrap()
            .into_iter()
            .filter(|m| m.dom == "a" && m.cod == "b")
            .collect();
        assert_eq!(homs.len(), 1);
        assert_eq!(homs[0].path, vec![pair_generator_name("a", "b")]);
    }

    #[test]
    fn pair_completion_absorbs() {
        let s = build_category(
            &Presentation::new("S")
                .object("a")
                .object("b")
                .object("c")
                .generator("f", "a", "b"),
        )
        .unwrap();
        let n = pair_completion(&s, "S∇").unwrap();
        let ab = n.morphism(&[&pair_generator_name("a", "b")]).unwrap();
        let bc = n.morphism(&[&pair_generator_name("b", "c")]).unwrap();
        let ac = n.morphism(&[&pair_generator_name("a", "c")]).unwrap();
        assert_eq!(n.compose(&ab, &bc).unwrap(), ac);
        let f = n.morphism(&["f"]).unwrap();
        assert_eq!(n.compose(&f, &bc).unwrap(), ac);
        assert!(n.in_wide(&f));
        assert!(!n.in_wide(&ac));
    }
}
