use std::collections::BTreeSet;

use hcv_core::sl::*;
use hcv_core::solver::*;
use proptest::prelude::*;

mod support;
use support::*;

fn h(s: &str) -> SymbolicHeap {
    parse_heap(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn p(s: &str) -> Pure {
    parse_pure(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn single(s: &str) -> SymbolicHeap {
    let ns = normalize(&h(s)).unwrap();
    assert_eq!(ns.len(), 1, "{s}");
    ns[0].heap.clone()
}

#[test]
fn load_binds_field() {
    let n = single("x->node{val:a,next:b} & LD(x,next,t,0) & t = null");
    assert_eq!(n, h("x->node{val:a,next:b} & t = b & t = null"));
}

#[test]
fn load_from_unknown_base_splits() {
    let ns = normalize(&h("x->node{val:a,next:b} * y->node{val:c,next:d} & LD(z,val,t,0) & t = 3")).unwrap();
    assert_eq!(ns.len(), 2);
    assert!(ns[0].heap.pure.contains(&p("z = x")));
    assert!(ns[1].heap.pure.contains(&p("z = y")));
}

#[test]
fn store_then_load() {
    assert!(check_base(&h("x->node{val:a,next:b} & ST(x,val,c,0) & LD(x,val,t,1) & t != c")).unwrap().is_none());
    assert!(check_base(&h("x->node{val:a,next:b} & ST(x,val,c,0) & LD(x,val,t,1) & t = c & a != c")).unwrap().is_some());
}

#[test]
fn use_after_delete_is_false() {
    assert!(normalize(&h("x->node{val:a,next:b} & DEL(x,0) & LD(x,val,t,1)")).unwrap().is_empty());
    assert!(normalize(&h("x->node{val:a,next:b} & DEL(x,0) & DEL(x,1)")).unwrap().is_empty());
}

#[test]
fn delete_leaves_dangling_root() {
    let n = single("exists r. x->node{val:a,next:r} & DEL(x,0) & dangl(x,1)");
    assert!(n.spatial.is_empty());
    assert!(n.pure.contains(&p("x != null")));
}

#[test]
fn leak_flag() {
    assert!(normalize(&h("emp @NE")).unwrap().is_empty());
    assert!(normalize(&h("x->c{} & DEL(x,0) @NE")).unwrap().is_empty());
    let n = single("x->c{} @NE");
    assert!(!n.nonempty);
    assert!(check_base(&h("emp & e = 1 @NE(e)")).unwrap().is_some());
    assert!(check_base(&h("emp & e = 0 @NE(e)")).unwrap().is_none());
    assert!(check_base(&h("x->c{} & e = 0 @NE(e)")).unwrap().is_some());
}

#[test]
fn duplicate_sequence_is_malformed() {
    assert!(matches!(
        normalize(&h("x->node{val:a,next:b} & LD(x,val,t,0) & DEL(x,0)")),
        Err(NormError::MalformedSequence(_))
    ));
}

#[test]
fn pending_writer_blocks_load() {
    // the load may observe a store performed by P, so nothing is concluded
    let d = h("x->node{val:a,next:b} * P(x)^o:0,u:0 & LD(x,val,t,1) & t != a");
    let mut d2 = d.clone();
    for a in d2.spatial.iter_mut() {
        if let HeapAtom::Pred(pi) = a {
            pi.stamp = Seq(vec![0]);
        }
    }
    let ns = normalize(&d2).unwrap();
    assert_eq!(ns.len(), 1);
    assert!(!ns[0].heap.pure.contains(&p("t = a")));
    let ns = normalize_with(&d2, &|_| false).unwrap();
    assert!(ns.iter().all(|n| n.heap.pure.contains(&p("t = a"))));
}

#[test]
fn expure_examples() {
    let (ex, body) = expure_parts(&h("exists n. x->node{val:a,next:n} * y->node{val:b,next:x} & a < b")).unwrap();
    assert_eq!(ex, vec![var_of("n")]);
    assert_eq!(body, vec![p("x != null"), p("x != y"), p("y != null"), p("a < b")]);
    let (_, body) = expure_parts(&h("x->c{} & dangl(z,0)")).unwrap();
    assert_eq!(body, vec![p("x != null"), p("z != null"), p("z != x")]);
    assert!(expure_parts(&h("P(x)^o:0,u:0")).is_err());
}

#[test]
fn project_examples() {
    let w: BTreeSet<Var> = [var_of("u")].into_iter().collect();
    // u = x substitutes
    assert_eq!(project(&[p("u = x"), p("u != y")], &w), vec![p("x != y")]);
    // a lonely disequality on a quantified pointer is always satisfiable
    assert_eq!(project(&[p("u != y"), p("u != null")], &w), Vec::<Pure>::new());
    assert_eq!(project(&[p("u = x"), p("u != x")], &w), vec![Pure::ff()]);
}

#[test]
fn decide_examples() {
    assert!(is_sat(&p("x = 1 & y = x + 2 & y <= 3")).unwrap());
    assert!(!is_sat(&p("2*x = 1")).unwrap());
    assert!(!is_sat(&p("x <= 3 & 4 <= x")).unwrap());
    assert!(is_sat(&p("(exists k. x = 2*k) & 3 <= x & x <= 4")).unwrap());
    assert!(implies(&p("x = 3"), &p("2 <= x")).unwrap());
    assert!(!implies(&p("2 <= x"), &p("x = 3")).unwrap());
    assert!(is_sat(&p("min(x,y) = 4 & max(x,y) = 9")).unwrap());
    let m = decide(&p("a != b & a = 0 & b <= 1 & 0 <= b")).unwrap().unwrap();
    assert_eq!((m[&var_of("a")], m[&var_of("b")]), (0, 1));
}

#[test]
fn unsat_core_on_error_flags() {
    let r = decide_base(&p("0 <= i & eps = 0 & i < 10 & eps = 1")).unwrap();
    assert_eq!(r, SatResult::Unsat(vec![1, 3]));
}

#[test]
fn smt_script_golden() {
    let s = hcv_core::solver::smtlib::script(&p("x = 1 & (y <= x | y != z#2) & min(x,y) = -3"));
    let expected = "(set-logic QF_LIA)\n(set-option :produce-models true)\n\
(declare-fun |x| () Int)\n(declare-fun |y| () Int)\n(declare-fun |z#2| () Int)\n\
(assert (and (= |x| 1) (or (<= |y| |x|) (not (= |y| |z#2|))) (= (ite (<= |x| |y|) |x| |y|) (- 3))))\n\
(check-sat)\n(get-model)\n(exit)\n";
    assert_eq!(s, expected);
    let back = hcv_core::solver::smtlib::read_script(&s).unwrap();
    assert_eq!(back, p("x = 1 & (y <= x | y != z#2) & min(x,y) = -3"));
}

#[test]
fn smt_answer_parsing() {
    let m = hcv_core::solver::smtlib::parse_answer("sat\n(model\n (define-fun |x#1| () Int (- 4))\n (define-fun y () Int 7))\n")
        .unwrap()
        .unwrap();
    assert_eq!(m[&var_of("x#1")], -4);
    assert_eq!(m[&var_of("y")], 7);
    assert_eq!(hcv_core::solver::smtlib::parse_answer("unsat\n").unwrap(), None);
}

// ---------------------------------------------------------------------------
// properties

proptest! {
    #![proptest_config(ProptestConfig::with_cases(192))]

    #[test]
    fn base_decision_matches_enumeration(s in arb_base()) {
        support::base_decision_matches_enumeration(&s).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn normalize_is_idempotent(s in arb_base()) {
        let d = parse_heap(&s).unwrap();
        for n in normalize(&d).unwrap() {
            let again = normalize(&n.heap).unwrap();
            prop_assert_eq!(again.len(), 1);
            prop_assert!(alpha_eq(&again[0].heap, &n.heap), "{} vs {}", again[0].heap, n.heap);
        }
    }

    #[test]
    fn lia_agrees_with_brute_force(cs in cube(3)) {
        support::lia_agrees_with_brute_force(&cs).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn decide_base_agrees_with_brute_force(
        point in prop::array::uniform3(-4i128..=4),
        shaped in cube(3),
        extra in cube(3),
        pick in 0usize..2,
    ) {
        let extra = if pick == 0 { &extra[..0] } else { &extra[..1.min(extra.len())] };
        let cs = support::constructed(point, &shaped, extra);
        support::decide_base_agrees_with_brute_force(&cs).map_err(TestCaseError::fail)?;
    }
}
