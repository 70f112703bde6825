use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use cateff::conformance::gen::Generator;
use cateff::denote::{denote_computation, SemValue};
use cateff::eval::{Evaluator, RunOptions};
use cateff::freemodel::{coerce, graft, node, trees_up_to, unit_leaf, TermTree, TreeError};
use cateff::grading::{build_category, GradingCategory, Morphism, PathExpr, Presentation};
use cateff::signature::{build_signature, enumerate_type, index_of, type_size, GradedSignature, OpDecl};
use cateff::syntax::{parse_comp_in, parse_bundle, substitute, Bundle, Type};
use cateff::typecheck::Checker;

fn theory(name: &str) -> &'static Bundle {
    static CACHE: OnceLock<Vec<(String, Bundle)>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        ["ex36.ceff", "handler.ceff", "mutable_store.ceff"]
            .iter()
            .map(|n| {
                let path = format!("{}/theories/{n}", env!("CARGO_MANIFEST_DIR"));
                (n.to_string(), parse_bundle(&std::fs::read_to_string(path).unwrap()).unwrap())
            })
            .collect()
    });
    &all.iter().find(|(n, _)| n == name).unwrap().1
}

fn theory_name() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("ex36.ceff"), Just("handler.ceff"), Just("mutable_store.ceff")]
}

fn s36() -> Arc<GradingCategory> {
    theory("ex36.ceff").categories["S36"].clone()
}

fn primitive_type() -> impl Strategy<Value = Type> {
    let leaf = Just(Type::Unit);
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Type::sum(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Type::prod(a, b)),
        ]
    })
}

fn size_oracle(t: &Type) -> usize {
    match t {
        Type::Unit => 1,
        Type::Sum(a, b) => size_oracle(a) + size_oracle(b),
        Type::Prod(a, b) => size_oracle(a) * size_oracle(b),
        Type::Arrow(..) => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_cardinality(t in primitive_type()) {
        let all = enumerate_type(&t).unwrap();
        prop_assert_eq!(all.len(), size_oracle(&t));
        prop_assert_eq!(type_size(&t), Some(all.len()));
        for (i, v) in all.iter().enumerate() {
            prop_assert_eq!(index_of(&t, v), Some(i));
        }
    }

    #[test]
    fn normalization_is_idempotent(picks in prop::collection::vec(0usize..64, 0..8)) {
        let cat = s36();
        // a composable path steered by the picks
        let mut path: Vec<String> = Vec::new();
        let mut at: Option<String> = None;
        for p in picks {
            let next: Vec<_> = cat.generators().iter().filter(|g| at.as_ref().is_none_or(|a| *a == g.dom)).collect();
            let g = next[p % next.len()];
            path.push(g.name.clone());
            at = Some(g.cod.clone());
        }
        let once = cat.normalize(path).unwrap();
        prop_assert_eq!(cat.normalize(once.clone()).unwrap(), once);
    }

    #[test]
    fn composition_is_associative(i in 0usize..1000, j in 0usize..1000, k in 0usize..1000) {
        let cat = &theory("mutable_store.ceff").categories["S"];
        let ms = cat.morphisms_up_to(2).unwrap();
        let f = &ms[i % ms.len()];
        let gs: Vec<_> = ms.iter().filter(|g| g.dom == f.cod).collect();
        let g = gs[j % gs.len()];
        let hs: Vec<_> = ms.iter().filter(|h| h.dom == g.cod).collect();
        let h = hs[k % hs.len()];
        let l = cat.compose(&cat.compose(f, g).unwrap(), h).unwrap();
        let r = cat.compose(f, &cat.compose(g, h).unwrap()).unwrap();
        prop_assert_eq!(l, r);
    }

    #[test]
    fn generated_programs_print_and_parse_back(name in theory_name(), seed in any::<u64>()) {
        let b = theory(name);
        let mut g = Generator::new(b, seed);
        let p = g.random_program(4).unwrap();
        let text = p.body.to_string();
        let back = parse_comp_in(b, &p.world.name, &text).unwrap();
        prop_assert_eq!(back, p.body);
    }

    #[test]
    fn evaluation_is_deterministic(name in theory_name(), seed in any::<u64>()) {
        let b = theory(name);
        let p = Generator::new(b, seed).random_program(4).unwrap();
        let ev = Evaluator::new();
        let a = ev.run(&p.world, &p.body, RunOptions::default()).unwrap();
        let c = ev.run(&p.world, &p.body, RunOptions::default()).unwrap();
        prop_assert_eq!(a.steps, c.steps);
        prop_assert_eq!(a.outcome, c.outcome);
    }

    #[test]
    fn substitution_preserves_judgements(name in theory_name(), seed in any::<u64>(), pick in any::<usize>()) {
        let b = theory(name);
        let mut g = Generator::new(b, seed);
        let worlds: Vec<_> = b.signatures.values().cloned().collect();
        let world = worlds[pick % worlds.len()].clone();
        let grades = g.target_grades(&world);
        let f = grades[(pick / 7) % grades.len()].clone();
        let a = Type::sum(Type::Unit, Type::Unit);
        let ctx = vec![("z".to_string(), a.clone())];
        let Some(m) = g.open_term(&world, &ctx, &Type::Unit, &f, 3) else {
            return Ok(());
        };
        let v = g.value(&world, &Vec::new(), &a, 1).unwrap();
        let closed = substitute(&m, &[("z".into(), v.clone())]);
        let (ty, grade) = Checker::new().grade_of_computation(&Vec::new(), &world, &closed).unwrap();
        prop_assert_eq!(ty, Type::Unit);
        prop_assert_eq!(grade, f);
        // ⟦M[V/z]⟧ = ⟦M⟧ with z bound to ⟦V⟧
        let sv = cateff::denote::denote_value(&world, &Vec::new(), &v).unwrap();
        let open = denote_computation(&world, &vec![("z".into(), sv)], &m).unwrap();
        let shut = denote_computation(&world, &Vec::new(), &closed).unwrap();
        prop_assert!(open.try_eq(&shut).unwrap());
    }
}

fn tt() -> SemValue {
    SemValue::inl(SemValue::Star)
}

fn ff() -> SemValue {
    SemValue::inr(SemValue::Star)
}

/// One object with generators p, q and a binary `flip` at p.
fn flip_sig() -> Arc<GradedSignature> {
    let cat = build_category(
        &Presentation::new("C")
            .object("a")
            .generator("p", "a", "a")
            .generator("q", "a", "a"),
    )
    .unwrap();
    Arc::new(
        build_signature(
            "Flip",
            Arc::new(cat),
            vec![OpDecl {
                name: "flip".into(),
                param: Type::Unit,
                arity: Type::sum(Type::Unit, Type::Unit),
                grade: PathExpr::Gens(vec!["p".into()]),
            }],
        )
        .unwrap(),
    )
}

fn pick(pair: &(TermTree, TermTree), v: &SemValue) -> TermTree {
    if v.try_eq(&tt()).unwrap() {
        pair.0.clone()
    } else {
        pair.1.clone()
    }
}

/// Leaf assignments `tt ↦ a, ff ↦ b` with `a` and `b` of equal grade.
fn assignments(trees: &[TermTree]) -> Vec<(TermTree, TermTree)> {
    let mut out = Vec::new();
    for a in trees.iter().filter(|t| t.depth() <= 1) {
        for b in trees.iter().filter(|t| t.depth() <= 1 && t.grade() == a.grade()) {
            out.push((a.clone(), b.clone()));
        }
    }
    out
}

#[test]
fn graft_satisfies_the_monad_laws() {
    let sig = flip_sig();
    let cat = &sig.category;
    let trees = trees_up_to(&sig, &[("a".into(), vec![tt(), ff()])], 2).unwrap();
    let phis = assignments(&trees);
    let mut checks = 0;
    for t in &trees {
        let same = graft::<TreeError, _>(cat, t, &mut |o: &str, v: &SemValue| Ok(unit_leaf(o, v.clone()))).unwrap();
        assert_eq!(&same, t);
        for phi in &phis {
            let mut by_phi = |_: &str, v: &SemValue| Ok::<_, TreeError>(pick(phi, v));
            let once = graft(cat, t, &mut by_phi).unwrap();
            assert_eq!(once.grade(), &cat.compose(t.grade(), phi.0.grade()).unwrap());
            for psi in &phis {
                let mut by_psi = |_: &str, v: &SemValue| Ok::<_, TreeError>(pick(psi, v));
                let left = graft(cat, &once, &mut by_psi).unwrap();
                let right = graft(cat, t, &mut |_: &str, v: &SemValue| {
                    graft(cat, &pick(phi, v), &mut |_: &str, w: &SemValue| Ok::<_, TreeError>(pick(psi, w)))
                })
                .unwrap();
                assert_eq!(left, right);
                checks += 1;
            }
        }
    }
    for v in [tt(), ff()] {
        for phi in &phis {
            let leaf = unit_leaf("a", v.clone());
            let out = graft(cat, &leaf, &mut |_: &str, w: &SemValue| Ok::<_, TreeError>(pick(phi, w))).unwrap();
            assert_eq!(out, pick(phi, &v));
        }
    }
    assert!(checks > 1000);
}

#[test]
fn nested_coercions_collapse() {
    let cat = s36();
    let wide: Vec<Morphism> = cat
        .morphisms_up_to(2)
        .unwrap()
        .into_iter()
        .filter(|m| cat.in_wide(m))
        .collect();
    let g = cat.morphism(&["send_int"]).unwrap();
    let base = vec![
        unit_leaf("1", SemValue::Star),
        unit_leaf("int", SemValue::Star),
        node(&cat, "sendint", &g, SemValue::Star, Morphism::identity("int"), vec![unit_leaf("int", SemValue::Star)])
            .unwrap(),
    ];
    for t in &base {
        for r2 in wide.iter().filter(|r| r.cod == t.grade().dom) {
            for r1 in wide.iter().filter(|r| r.cod == r2.dom) {
                let stepwise = coerce(&cat, r1, coerce(&cat, r2, t.clone()).unwrap()).unwrap();
                let at_once = coerce(&cat, &cat.compose(r1, r2).unwrap(), t.clone()).unwrap();
                assert_eq!(stepwise, at_once, "{r1} then {r2} on {t}");
                let expected = cat.compose(&cat.compose(r1, r2).unwrap(), t.grade()).unwrap();
                assert_eq!(stepwise.grade(), &expected);
            }
        }
    }
}
