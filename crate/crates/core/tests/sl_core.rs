use std::collections::HashMap;

use hcv_core::sl::text::{render_heap, render_pure};
use hcv_core::sl::*;
use proptest::prelude::*;

fn v(s: &str) -> Var {
    hcv_core::sl::text::var_of(s)
}

fn h(s: &str) -> SymbolicHeap {
    parse_heap(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn state(stack: &[(&str, Val)], heap: &[(u32, &str, &[(&str, Val)])]) -> ConcreteState {
    ConcreteState {
        stack: stack.iter().map(|(k, x)| (v(k), *x)).collect(),
        heap: heap
            .iter()
            .map(|(l, ty, fs)| {
                (*l, Cell { ty: (*ty).into(), fields: fs.iter().map(|(f, x)| ((*f).into(), Some(*x))).collect() })
            })
            .collect(),
    }
}

#[test]
fn subst_renames_free_occurrences() {
    let m: HashMap<Var, Var> = [(v("x"), v("z"))].into_iter().collect();
    assert_eq!(parse_pure("x = y").unwrap().rename(&m), parse_pure("z = y").unwrap());
    let bound = parse_pure("(exists x. x = y)").unwrap();
    assert_eq!(bound.rename(&m), bound);
}

#[test]
fn subst_avoids_capture() {
    let m: HashMap<Var, Var> = [(v("y"), v("x"))].into_iter().collect();
    let r = parse_pure("(exists x. x = y)").unwrap().rename(&m);
    let Pure::Exists(b, body) = r else { panic!() };
    assert_ne!(b, v("x"));
    assert_eq!(*body, Pure::eq_vars(&b, &v("x")));
}

#[test]
fn error_rename_replaces_eps() {
    let d = h("exists r. res->node{val:i,next:r} & eps = 0 : [2]");
    let m: HashMap<Var, Var> = [(Var::eps(), v("eps#7"))].into_iter().collect();
    let r = d.rename(&m);
    assert!(r.free_vars().contains(&v("eps#7")));
    assert!(!r.free_vars().contains(&Var::eps()));
}

#[test]
fn free_vars_examples() {
    let d = h("exists r. res->node{val:i,next:r}");
    assert_eq!(d.free_vars().into_iter().collect::<Vec<_>>(), vec![v("i"), v("res")]);
    assert!(Pure::tt().free_vars().is_empty());
    let b = h("exists i1,r. res->node{val:i,next:r} * sll(i1,r,eps)^o:0,u:1 & i != 0 & i1 = i - 1 : [2]");
    assert_eq!(b.free_vars().into_iter().collect::<Vec<_>>(), vec![v("eps"), v("i"), v("res")]);
}

#[test]
fn eval_base_points_to() {
    let s = state(&[("x", Val::Loc(1))], &[(1, "node", &[("val", Val::Int(5)), ("next", Val::Null)])]);
    assert!(eval_base(&s, &h("x->node{val:v,next:n} & v = 5")).unwrap());
    assert!(!eval_base(&s, &h("x->node{val:v,next:n} & v = 4")).unwrap());
}

#[test]
fn eval_base_emp_null() {
    let s = state(&[("x", Val::Null)], &[]);
    assert!(eval_base(&s, &h("emp & x = null")).unwrap());
}

#[test]
fn eval_base_disjointness() {
    let s = state(
        &[("x", Val::Loc(1)), ("y", Val::Loc(1))],
        &[(1, "c", &[]), (2, "c", &[])],
    );
    assert!(!eval_base(&s, &h("x->c{} * y->c{}")).unwrap());
}

#[test]
fn eval_base_rejects_predicates() {
    let s = ConcreteState::default();
    assert!(matches!(eval_base(&s, &h("P(x)^o:0,u:0")), Err(EvalError::NotBase(_))));
}

#[test]
fn eval_replays_accesses() {
    // load after store sees the stored value; access after delete fails
    let s = state(
        &[("x", Val::Loc(1)), ("a", Val::Int(1)), ("b", Val::Int(2))],
        &[(1, "node", &[("val", Val::Int(1))])],
    );
    assert!(eval_base(&s, &h("x->node{val:a} & ST(x,val,b,0) & LD(x,val,t,1) & t = 2")).unwrap());
    assert!(!eval_base(&s, &h("x->node{val:a} & DEL(x,0) & LD(x,val,t,1)")).unwrap());
    assert!(eval_base(&s, &h("x->node{val:a} & DEL(x,0) & dangl(x,1)")).unwrap());
    assert!(!eval_base(&s, &h("x->node{val:a} & DEL(x,1) & dangl(x,1)")).unwrap());
    assert!(matches!(
        eval_base(&s, &h("x->node{val:a} & DEL(x,0) & LD(x,val,t,0)")),
        Err(EvalError::MalformedSequence(_))
    ));
}

#[test]
fn eval_leak_flag() {
    let s = state(&[("x", Val::Loc(1))], &[(1, "c", &[])]);
    assert!(eval_base(&s, &h("x->c{} @NE")).unwrap());
    assert!(!eval_base(&s, &h("x->c{} & DEL(x,0) @NE")).unwrap());
    // a failed callee waives the leak requirement
    let s = state(&[("x", Val::Loc(1)), ("e", Val::Int(1))], &[(1, "c", &[])]);
    assert!(eval_base(&s, &h("x->c{} & DEL(x,0) @NE(e)")).unwrap());
    let s = state(&[("x", Val::Loc(1)), ("e", Val::Int(0))], &[(1, "c", &[])]);
    assert!(!eval_base(&s, &h("x->c{} & DEL(x,0) @NE(e)")).unwrap());
}

#[test]
fn enumerate_examples() {
    let ms = enumerate_models(&h("emp & x = null"), 1, 2).unwrap();
    assert_eq!(ms.len(), 1);
    assert_eq!(ms[0].stack[&v("x")], Val::Null);
    assert!(ms[0].heap.is_empty());

    assert!(enumerate_models(&h("x->c{} & x = null"), 3, 3).unwrap().is_empty());

    let ms = enumerate_models(&h("x->c{} * y->c{}"), 1, 2).unwrap();
    // (l1,l2) and (l2,l1)
    assert_eq!(ms.len(), 2);
    for m in &ms {
        assert_ne!(m.stack[&v("x")], m.stack[&v("y")]);
        assert!(matches!(m.stack[&v("x")], Val::Loc(_)));
    }
}

#[test]
fn text_example_parses() {
    let d = h("exists v1,v2. x->node{val:v1,next:v2} * P(v1,r)^o:0,u:1 & v1>=0 : [2;1]");
    assert_eq!(d.ex_vars.len(), 2);
    assert_eq!(d.label, vec![2, 1]);
    assert_eq!(d.spatial.len(), 2);
    assert_eq!(d.pure, vec![Pure::Le(Term::Const(0), Term::var(&v("v1")))]);
}

// ---------------------------------------------------------------------------
// properties

fn arb_var() -> impl Strategy<Value = Var> {
    (0..5usize, 0..3u32).prop_map(|(i, k)| Var::new(["a", "b", "c", "x", "y"][i], k))
}

fn arb_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![(-5i64..6).prop_map(Term::Const), arb_var().prop_map(Term::Var)];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::add(a, b)),
            inner.clone().prop_map(Term::neg),
            (-3i64..4, inner.clone()).prop_map(|(k, a)| Term::mul(k, a)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::Min(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Term::Max(Box::new(a), Box::new(b))),
        ]
    })
}

fn arb_seq() -> impl Strategy<Value = Seq> {
    prop::collection::vec(0u32..6, 1..3).prop_map(Seq)
}

fn arb_pure() -> impl Strategy<Value = Pure> {
    let atom = prop_oneof![
        (arb_term(), arb_term()).prop_map(|(a, b)| Pure::Eq(a, b)),
        (arb_term(), arb_term()).prop_map(|(a, b)| Pure::Le(a, b)),
        arb_var().prop_map(Pure::EqNull),
        (arb_var(), arb_seq()).prop_map(|(v, s)| Pure::Dangl(v, s)),
        (arb_var(), arb_var(), arb_seq()).prop_map(|(b, t, seq)| Pure::Load { base: b, field: "next".into(), target: t, seq }),
        (arb_var(), arb_seq()).prop_map(|(b, seq)| Pure::Del { base: b, seq }),
        any::<bool>().prop_map(Pure::Bool),
    ];
    atom.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Pure::not),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Pure::and),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Pure::or),
            (arb_var(), inner).prop_map(|(v, p)| Pure::Exists(v, Box::new(p))),
        ]
    })
}

fn arb_heap() -> impl Strategy<Value = SymbolicHeap> {
    let atom = prop_oneof![
        (arb_var(), arb_var(), arb_var()).prop_map(|(r, a, b)| HeapAtom::points_to(&r, "node", vec![("val", a), ("next", b)])),
        (prop::collection::vec(arb_var(), 1..4), 0u32..3, 0u32..3)
            .prop_map(|(args, o, u)| HeapAtom::Pred(PredInst::new("P", args, o, u))),
    ];
    (
        prop::collection::vec(arb_var(), 0..3),
        prop::collection::vec(atom, 0..3),
        prop::collection::vec(arb_pure(), 0..4),
        any::<bool>(),
        prop::option::of(arb_var()),
        prop::collection::vec(1u8..3, 0..3),
    )
        .prop_map(|(ex, spatial, pure, nonempty, guard, label)| {
            let mut ex_vars = ex;
            ex_vars.sort();
            ex_vars.dedup();
            SymbolicHeap { ex_vars, spatial, pure, nonempty, leak_guard: guard.filter(|_| nonempty), label }
        })
}

proptest! {
    #[test]
    fn pure_text_round_trips(p in arb_pure()) {
        let s = render_pure(&p);
        prop_assert_eq!(parse_pure(&s).unwrap(), p, "{}", s);
    }

    #[test]
    fn heap_text_round_trips(d in arb_heap()) {
        let s = render_heap(&d);
        prop_assert_eq!(parse_heap(&s).unwrap(), d, "{}", s);
    }

    #[test]
    fn canonical_form_ignores_existential_names(d in arb_heap(), shift in 10u32..20) {
        let m: HashMap<Var, Var> = d.ex_vars.iter().map(|x| (x.clone(), Var::new(&format!("q{}", x.name), x.version + shift))).collect();
        let mut renamed = d.open().rename(&m);
        renamed.ex_vars = d.ex_vars.iter().map(|x| m[x].clone()).collect();
        prop_assert_eq!(d.canonical(), renamed.canonical());
        prop_assert!(alpha_eq(&d, &renamed));
    }

    #[test]
    fn subst_idempotent_for_disjoint_maps(p in arb_pure(), a in arb_var()) {
        let target = Var::new("fresh", 99);
        let m: HashMap<Var, Var> = [(a, target)].into_iter().collect();
        let once = p.rename(&m);
        prop_assert_eq!(once.rename(&m), once);
    }

    #[test]
    fn enumerated_models_satisfy(bound in 1i64..3) {
        let d = h("x->node{val:a,next:b} & a <= 1 & (b = null | a = 0)");
        for m in enumerate_models(&d, bound, 2).unwrap() {
            prop_assert!(eval_base(&m, &d).unwrap());
        }
    }
}
