//! Acceptance criteria, one line each. Runs without the libtest harness so
//! that every line is printed regardless of outcome.

use std::sync::Arc;
use std::time::{Duration, Instant};

use cateff::conformance::gen::comp_depth;
use cateff::conformance::{
    check_corpus, generate_unit_programs, generate_wellgraded_terms, verify_program_soundness, CorpusReport,
};
use cateff::denote::SemValue;
use cateff::eval::{Evaluator, Outcome, RunOptions, DEFAULT_MAX_STEPS};
use cateff::freemodel::{free_extension, trees_up_to, FiniteModel, Shape, TermTree};
use cateff::grading::{
    build_category, pair_completion, pair_generator_name, GradingCategory, GradingFunctor, Morphism, PathExpr,
    Presentation,
};
use cateff::signature::{build_signature, GradedSignature, OpDecl};
use cateff::syntax::{parse_bundle, Bundle, Comp, Type, Value};
use cateff::typecheck::Checker;

const THEORIES: [&str; 3] = ["ex36.ceff", "handler.ceff", "mutable_store.ceff"];

fn theory(name: &str) -> Bundle {
    let path = format!("{}/theories/{name}", env!("CARGO_MANIFEST_DIR"));
    let src = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    parse_bundle(&src).unwrap_or_else(|e| panic!("{path}: {e}"))
}

type Outcome_ = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn judge(b: &Bundle, prog: &str) -> Result<(Type, Morphism), String> {
    let p = b.program(prog).ok_or_else(|| format!("no program {prog}"))?;
    Checker::new()
        .grade_of_computation(&Vec::new(), &p.sig, &p.body)
        .map_err(|e| format!("{prog}: {e}"))
}

fn golden_grading() -> Outcome_ {
    let start = Instant::now();
    let b = theory("ex36.ceff");
    let (_, t) = judge(&b, "t")?;
    let (_, s) = judge(&b, "s")?;
    let elapsed = start.elapsed();
    ensure(t.to_string() == "τ^1_int;send_int;recv^int_int", || format!("t has grade {t}"))?;
    ensure(s.to_string() == "recv^1_int;send_int", || format!("s has grade {s}"))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("t @ {t}, s @ {s} in {elapsed:?}"))
}

fn golden_trace() -> Outcome_ {
    let start = Instant::now();
    let b = theory("handler.ceff");
    let (_, f) = judge(&b, "main")?;
    ensure(f.to_string() == "id_•", || format!("main has grade {f}"))?;
    let p = b.program("main").unwrap();
    let ev = Evaluator::new();
    let trace = ev.run(&p.sig, &p.body, RunOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (_, first) = trace.steps.first().ok_or("no steps")?;
    // (fun^{G h} v. handle (let x <- val d v in ...) with H) V'
    let shaped = match first {
        Comp::App(Value::Lam(lam), Value::Inr(arg, _)) => {
            lam.grade == Morphism::identity("•")
                && **arg == Value::Star
                && matches!(&lam.body, Comp::Handle(m, h) if h.name == "H" && matches!(
                    &**m,
                    Comp::Let(x, bound, _) if x == "x"
                        && **bound == Comp::Val("d".into(), Value::Var(lam.var.clone()))
                ))
        }
        _ => false,
    };
    ensure(shaped, || format!("first step is {first}"))?;
    let a = Type::sum(Type::Unit, Type::Unit);
    let v1 = Value::inr(Value::Star, a.clone());
    let w1 = Value::inr(Value::inl(Value::Star, a.clone()), Type::sum(Type::Unit, a));
    let expected = Comp::val("•", Value::pair(v1, w1));
    ensure(*trace.last() == expected, || format!("final configuration is {}", trace.last()))?;
    ensure(trace.steps.len() < 20, || format!("{} steps", trace.steps.len()))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("{} steps ending in {}, {elapsed:?}", trace.steps.len(), trace.last()))
}

fn mutable_store() -> Outcome_ {
    let start = Instant::now();
    let b = theory("mutable_store.ceff");
    let (ty, f) = judge(&b, "N")?;
    ensure(f.to_string() == "f^1_A;f^A_B", || format!("N has grade {f}"))?;
    ensure(ty == b.aliases["B"], || format!("N has type {ty}"))?;
    let store = b.aliases["Store"].clone();
    let c = Checker::new();
    for alpha in ["1", "A", "B"] {
        let h = b.handler(&format!("H_{alpha}")).ok_or("missing handler")?;
        let r = if alpha == "1" { Type::Unit } else { b.aliases[alpha].clone() };
        let p = c.check_handler(h, &r).map_err(|e| format!("H_{alpha}: {e}"))?;
        ensure(p.at == alpha && p.handled == r && p.result == store, || {
            format!("H_{alpha} has profile {} {} => {}", p.at, p.handled, p.result)
        })?;
    }
    let (_, fh) = judge(&b, "handled")?;
    ensure(fh.is_identity(), || format!("handle N with H_B has grade {fh}"))?;
    let (_, fc) = judge(&b, "closed")?;
    ensure(fc.is_identity(), || format!("closed has grade {fc}"))?;
    let p = b.program("closed").unwrap();
    let trace = Evaluator::new()
        .run(&p.sig, &p.body, RunOptions::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(matches!(trace.outcome, Outcome::Value { .. }), || format!("ended in {}", trace.last()))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("handle N with H_B @ {fh}, closed runs to {} in {elapsed:?}", trace.last()))
}

/// A generated corpus over every shipped theory, checked once and shared.
struct Corpus {
    report: CorpusReport,
    golden_steps: usize,
    golden_ok: Result<(), String>,
    primitive: usize,
    max_depth: usize,
    elapsed: Duration,
}

fn corpus() -> Corpus {
    let start = Instant::now();
    let mut report = CorpusReport::default();
    let mut primitive = 0;
    let mut max_depth = 0;
    let mut golden_steps = 0;
    let mut golden_ok = Ok(());
    let ev = Evaluator::new();
    for (i, name) in THEORIES.iter().enumerate() {
        let b = theory(name);
        for p in b.programs.values() {
            match verify_program_soundness(&ev, p, DEFAULT_MAX_STEPS) {
                Ok(r) if r.divergence.is_none() => golden_steps += r.steps,
                Ok(r) => golden_ok = Err(format!("{}: {:?}", p.name, r.divergence)),
                Err(e) => golden_ok = Err(format!("{}: {e}", p.name)),
            }
        }
        let seed = 1000 + i as u64;
        let mut progs = generate_wellgraded_terms(&b, seed, 400, 5).expect("generation");
        progs.extend(generate_unit_programs(&b, seed + 7, 150, 5).expect("generation"));
        primitive += progs.iter().filter(|g| g.ty.is_primitive()).count();
        max_depth = max_depth.max(progs.iter().map(|g| comp_depth(&g.body)).max().unwrap_or(0));
        report.merge(check_corpus(&progs, DEFAULT_MAX_STEPS));
    }
    Corpus {
        report,
        golden_steps,
        golden_ok,
        primitive,
        max_depth,
        elapsed: start.elapsed(),
    }
}

fn first_of(v: &[String]) -> String {
    v.first().cloned().unwrap_or_default()
}

fn soundness(c: &Corpus) -> Outcome_ {
    c.golden_ok.clone()?;
    let r = &c.report;
    ensure(c.primitive >= 1000, || format!("only {} primitive-result programs", c.primitive))?;
    ensure(c.max_depth <= 5, || format!("depth {} exceeds 5", c.max_depth))?;
    ensure(r.soundness_checked >= 1000, || format!("only {} checked", r.soundness_checked))?;
    ensure(r.soundness_violations.is_empty(), || {
        format!("{} violations, e.g. {}", r.soundness_violations.len(), first_of(&r.soundness_violations))
    })?;
    Ok(format!(
        "{} golden steps, {} generated programs ({} steps), 0 violations",
        c.golden_steps, r.soundness_checked, r.steps
    ))
}

fn adequacy(c: &Corpus) -> Outcome_ {
    let r = &c.report;
    ensure(r.adequacy_checked > 0, || "no program had a unit-leaf denotation".into())?;
    ensure(r.adequacy_violations.is_empty(), || {
        format!("{} violations, e.g. {}", r.adequacy_violations.len(), first_of(&r.adequacy_violations))
    })?;
    Ok(format!("{} unit programs reach val, 0 violations", r.adequacy_checked))
}

fn lemmas(c: &Corpus) -> Outcome_ {
    let r = &c.report;
    for (what, v) in [
        ("progress", &r.progress_violations),
        ("preservation", &r.preservation_violations),
        ("safety", &r.safety_violations),
    ] {
        ensure(v.is_empty(), || format!("{what}: {} violations, e.g. {}", v.len(), first_of(v)))?;
    }
    within(c.elapsed, Duration::from_secs(60))?;
    Ok(format!("{} programs, {} steps, 0 violations, suite {:?}", r.programs, r.steps, c.elapsed))
}

/// All maps `0..len -> 0..n`.
fn all_maps(len: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|m| {
                (0..n).map(move |x| {
                    let mut m = m.clone();
                    m.push(x);
                    m
                })
            })
            .collect();
    }
    out
}

fn universality() -> Outcome_ {
    let start = Instant::now();
    let cat = Arc::new(
        build_category(
            &Presentation::new("C")
                .object("a")
                .generator("p", "a", "a")
                .generator("q", "a", "a"),
        )
        .map_err(|e| e.to_string())?,
    );
    let sig: Arc<GradedSignature> = Arc::new(
        build_signature(
            "Tick",
            cat.clone(),
            vec![OpDecl {
                name: "tick".into(),
                param: Type::Unit,
                arity: Type::Unit,
                grade: PathExpr::Gens(vec!["p".into()]),
            }],
        )
        .map_err(|e| e.to_string())?,
    );
    let id = Morphism::identity("a");
    let p = cat.morphism(&["p"]).map_err(|e| e.to_string())?;
    let pp = cat.morphism(&["p", "p"]).map_err(|e| e.to_string())?;
    let xs = vec![SemValue::inl(SemValue::Star), SemValue::inr(SemValue::Star)];
    let trees: Vec<TermTree> =
        trees_up_to(&sig, &[("a".into(), xs.clone())], 2).map_err(|e| e.to_string())?;
    ensure(trees.len() == 6, || format!("{} trees of depth <= 2", trees.len()))?;
    let leaf_index = |v: &SemValue| xs.iter().position(|x| x.try_eq(v).unwrap_or(false));
    let child_index = |c: &TermTree| trees.iter().position(|t| t.try_eq(c).unwrap_or(false));

    let mut models = 0usize;
    let mut checked = 0usize;
    for n0 in 1..=3 {
        for n1 in 1..=3 {
            for n2 in 1..=3 {
                for t0 in all_maps(n0, n1) {
                    for t1 in all_maps(n1, n2) {
                        models += 1;
                        let model = FiniteModel::new(sig.clone(), "a")
                            .with_carrier(id.clone(), n0)
                            .and_then(|m| m.with_carrier(p.clone(), n1))
                            .and_then(|m| m.with_carrier(pp.clone(), n2))
                            .and_then(|m| m.with_table("tick", id.clone(), t0.clone()))
                            .and_then(|m| m.with_table("tick", p.clone(), t1.clone()))
                            .map_err(|e| e.to_string())?;
                        let table = |k: &Morphism| if k.is_identity() { &t0 } else { &t1 };
                        let size = |g: &Morphism| match g.path.len() {
                            0 => n0,
                            1 => n1,
                            _ => n2,
                        };
                        for phi_vals in all_maps(xs.len(), n0) {
                            let phi = |v: &SemValue| {
                                Ok(phi_vals[leaf_index(v).expect("leaf from xs")])
                            };
                            let h = free_extension(&phi, &model);
                            let image: Vec<usize> =
                                trees.iter().map(&h).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
                            // every leaf-agreeing homomorphism on the trees
                            let mut homs = Vec::new();
                            let sizes: Vec<usize> = trees.iter().map(|t| size(t.grade())).collect();
                            let total: usize = sizes.iter().product();
                            for mut i in 0..total {
                                let cand: Vec<usize> = sizes
                                    .iter()
                                    .map(|&n| {
                                        let d = i % n;
                                        i /= n;
                                        d
                                    })
                                    .collect();
                                let ok = trees.iter().zip(&cand).all(|(t, &v)| match t.shape() {
                                    Shape::Leaf { val, .. } => v == phi_vals[leaf_index(val).unwrap()],
                                    Shape::Node { k, children, .. } => {
                                        v == table(k)[cand[child_index(&children[0]).unwrap()]]
                                    }
                                    Shape::Coerce { .. } => false,
                                });
                                if ok {
                                    homs.push(cand);
                                }
                            }
                            ensure(homs.len() == 1 && homs[0] == image, || {
                                format!(
                                    "model {t0:?}/{t1:?}, phi {phi_vals:?}: free extension {image:?}, homomorphisms {homs:?}"
                                )
                            })?;
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("{models} models, {checked} leaf maps, {} trees, {elapsed:?}", trees.len()))
}

fn gen_morphism(cat: &GradingCategory, g: &str) -> Result<Morphism, String> {
    cat.generator_morphism(g).map_err(|e| e.to_string())
}

fn compose(cat: &GradingCategory, f: &Morphism, g: &Morphism) -> Result<Morphism, String> {
    cat.compose(f, g).map_err(|e| format!("{f} ; {g}: {e}"))
}

/// Normalization, associativity and unit laws; returns the number of checks.
fn category_laws(cat: &GradingCategory) -> Result<usize, String> {
    let mut n = 0;
    for len in 0..=6 {
        for path in cat.paths_of_len(len) {
            let once = cat.normalize(path.clone()).map_err(|e| e.to_string())?;
            let twice = cat.normalize(once.clone()).map_err(|e| e.to_string())?;
            ensure(once == twice, || format!("{}: {path:?} not idempotent", cat.name()))?;
            for r in cat.rules() {
                let hit = !r.lhs.is_empty() && once.windows(r.lhs.len()).any(|w| w == r.lhs.as_slice());
                ensure(!hit, || format!("{}: {once:?} still contains {:?}", cat.name(), r.lhs))?;
            }
            n += 1;
        }
    }
    let gens: Vec<Morphism> = cat
        .generators()
        .iter()
        .map(|g| gen_morphism(cat, &g.name))
        .chain(cat.objects().iter().map(|o| Ok(Morphism::identity(o.clone()))))
        .collect::<Result<_, _>>()?;
    for f in &gens {
        for g in gens.iter().filter(|g| g.dom == f.cod) {
            for h in gens.iter().filter(|h| h.dom == g.cod) {
                let l = compose(cat, &compose(cat, f, g)?, h)?;
                let r = compose(cat, f, &compose(cat, g, h)?)?;
                ensure(l == r, || format!("{}: ({f};{g});{h} = {l} but {f};({g};{h}) = {r}", cat.name()))?;
                n += 1;
            }
        }
    }
    for f in cat.morphisms_up_to(3).map_err(|e| e.to_string())? {
        let l = compose(cat, &Morphism::identity(f.dom.clone()), &f)?;
        let r = compose(cat, &f, &Morphism::identity(f.cod.clone()))?;
        ensure(l == f && r == f, || format!("{}: unit law fails at {f}", cat.name()))?;
        n += 1;
    }
    Ok(n)
}

fn functor_laws(g: &GradingFunctor) -> Result<usize, String> {
    let (s, t) = (&g.source, &g.target);
    let mut n = 0;
    for o in s.objects() {
        let image = g.apply(&Morphism::identity(o.clone())).map_err(|e| e.to_string())?;
        let target = g.map_object(o).ok_or_else(|| format!("{}: no image for {o}", g.name))?;
        ensure(image == Morphism::identity(target), || format!("{}: id_{o} goes to {image}", g.name))?;
        n += 1;
    }
    let ms = s.morphisms_up_to(2).map_err(|e| e.to_string())?;
    for f in &ms {
        for h in ms.iter().filter(|h| h.dom == f.cod) {
            let whole = g.apply(&compose(s, f, h)?).map_err(|e| e.to_string())?;
            let gf = g.apply(f).map_err(|e| e.to_string())?;
            let gh = g.apply(h).map_err(|e| e.to_string())?;
            let parts = compose(t, &gf, &gh)?;
            ensure(whole == parts, || format!("{}: G({f};{h}) = {whole} but G{f};G{h} = {parts}", g.name))?;
            n += 1;
        }
    }
    Ok(n)
}

/// Every composite with a pair generator on either side is the pair
/// generator of its outer endpoints.
fn pair_laws(s: &GradingCategory) -> Result<usize, String> {
    let c = pair_completion(s, &format!("{}∇", s.name())).map_err(|e| e.to_string())?;
    let mut n = category_laws(&c)?;
    let pair = |a: &str, b: &str| gen_morphism(&c, &pair_generator_name(a, b));
    let ms = c.morphisms_up_to(2).map_err(|e| e.to_string())?;
    for m in &ms {
        for o in c.objects() {
            let after = compose(&c, m, &pair(&m.cod, o)?)?;
            ensure(after == pair(&m.dom, o)?, || format!("{m};⟨{},{o}⟩ = {after}", m.cod))?;
            let before = compose(&c, &pair(o, &m.dom)?, m)?;
            ensure(before == pair(o, &m.cod)?, || format!("⟨{o},{}⟩;{m} = {before}", m.dom))?;
            n += 2;
        }
    }
    for a in s.objects() {
        for b in s.objects() {
            let homs = c.morphisms_up_to(3).map_err(|e| e.to_string())?;
            let in2 = homs.iter().filter(|m| m.dom == *a && m.cod == *b && !m.path.iter().all(|g| s.generator(g).is_some()));
            ensure(in2.count() == 1, || format!("{}: several new morphisms {a} -> {b}", c.name()))?;
        }
    }
    Ok(n)
}

fn category_law_suite() -> Outcome_ {
    let start = Instant::now();
    let mut checks = 0;
    let mut cats: Vec<Arc<GradingCategory>> = Vec::new();
    let mut functors: Vec<Arc<GradingFunctor>> = Vec::new();
    for name in THEORIES {
        let b = theory(name);
        cats.extend(b.categories.values().cloned());
        functors.extend(b.functors.values().cloned());
        functors.extend(b.handlers.values().map(|h| h.functor.clone()));
    }
    let discrete = build_category(&Presentation::new("D").object("a").object("b")).map_err(|e| e.to_string())?;
    cats.push(Arc::new(discrete));
    for c in &cats {
        checks += category_laws(c)?;
        checks += pair_laws(c)?;
    }
    for g in &functors {
        checks += functor_laws(g)?;
    }
    Ok(format!(
        "{} categories, {} functors, {checks} checks, {:?}",
        cats.len(),
        functors.len(),
        start.elapsed()
    ))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, r: Outcome_| match r {
        Ok(detail) => println!("PASS  {name}: {detail}"),
        Err(why) => {
            failed += 1;
            println!("FAIL  {name}: {why}");
        }
    };
    report("golden grading", golden_grading());
    report("golden trace", golden_trace());
    report("mutable store", mutable_store());
    let c = corpus();
    report("soundness", soundness(&c));
    report("adequacy", adequacy(&c));
    report("progress, preservation, safety", lemmas(&c));
    report("free-model universality", universality());
    report("category laws", category_law_suite());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
