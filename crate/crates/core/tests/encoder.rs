use std::collections::BTreeSet;

use hcv_core::encoder::text::{parse_system, render_system};
use hcv_core::encoder::*;
use hcv_core::frontend::{load, MemErrKind, Program};
use hcv_core::sl::{alpha_eq, Pure, Seq, Var};
use proptest::prelude::*;

mod support;

fn root(rel: &str) -> String {
    let path = format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn encode(src: &str) -> ChcSystem {
    encode_program(&load(src).unwrap()).unwrap()
}

/// Every branch of `a` has an alpha-equivalent branch of the same kind in
/// `b`, one to one.
fn same_pred(a: &PredDef, b: &PredDef) -> Result<(), String> {
    if a.params != b.params {
        return Err(format!("{}: params {:?} vs {:?}", a.name, a.params, b.params));
    }
    if a.branches.len() != b.branches.len() {
        return Err(format!("{}: {} branches vs {}", a.name, a.branches.len(), b.branches.len()));
    }
    let mut used = vec![false; b.branches.len()];
    for x in &a.branches {
        let hit = b.branches.iter().enumerate().position(|(i, y)| !used[i] && x.kind == y.kind && alpha_eq(&x.heap, &y.heap));
        match hit {
            Some(i) => used[i] = true,
            None => return Err(format!("{}: no match for [{}] {}", a.name, x.kind, x.heap)),
        }
    }
    Ok(())
}

#[test]
fn list_example_matches_golden() {
    let sys = encode(&root("corpus/fig2a.hc"));
    let golden = parse_system(&root("docs/golden/fig2a.chc")).unwrap();
    assert_eq!(sys.preds.len(), 3);
    for g in &golden.preds {
        let p = sys.pred(&g.name).unwrap_or_else(|| panic!("missing {}", g.name));
        same_pred(p, g).unwrap();
    }
    assert!(alpha_eq(&sys.query, &golden.query));
    let counts: Vec<(String, usize)> = sys.preds.iter().map(|p| (p.name.clone(), p.branches.len())).collect();
    assert_eq!(counts, [("sll".into(), 2), ("main".into(), 4), ("loop_11".into(), 4)]);
}

#[test]
fn text_round_trip() {
    for f in ["corpus/fig2a.hc", "corpus/fig2a_mutant.hc", "corpus/nested_loop.hc"] {
        let sys = encode(&root(f));
        let back = parse_system(&render_system(&sys)).unwrap();
        for (a, b) in sys.preds.iter().zip(&back.preds) {
            same_pred(a, b).unwrap();
            assert_eq!(a.line, b.line);
        }
        assert_eq!(render_system(&back), render_system(&sys));
    }
}

#[test]
fn main_return_path() {
    let sys = encode(&root("corpus/fig2a.hc"));
    let main = sys.pred("main").unwrap();
    let want = hcv_core::sl::parse_heap("emp & n < 0 & res = 0 & eps = 0 : [1]").unwrap();
    assert!(main.branches.iter().any(|b| b.kind == BranchKind::Ok && alpha_eq(&b.heap, &want)));
}

#[test]
fn trivial_main() {
    let sys = encode("int main() { return 0; }");
    let main = sys.pred("main").unwrap();
    assert_eq!(main.branches.len(), 1);
    let want = hcv_core::sl::parse_heap("emp & res = 0 & eps = 0").unwrap();
    assert!(alpha_eq(&main.branches[0].heap, &want));
}

#[test]
fn leak_gets_flagged_branch() {
    let sys = encode("data c { int v; } int main() { c x = new c(0); return 0; }");
    let main = sys.pred("main").unwrap();
    let leak: Vec<_> = main.branches.iter().filter(|b| b.kind == BranchKind::Leak).collect();
    assert_eq!(leak.len(), 1);
    assert!(leak[0].heap.nonempty);
    assert!(leak[0].heap.pure.contains(&Pure::eq_const(&Var::eps(), 1)));
    // no leak branch outside main
    let sys = encode("data c { int v; } c f() { return new c(1); } int main() { c x = f(); free(x); return 0; }");
    assert!(sys.pred("f").unwrap().branches.iter().all(|b| !b.heap.nonempty));
}

#[test]
fn query_shape() {
    let sys = encode("int main(int a, int b) { return a + b; }");
    let q = hcv_core::sl::parse_heap("main(a,b,res,eps)^o:0,u:0 & eps = 1").unwrap();
    assert!(alpha_eq(&sys.query, &q));
    let no_main = Program::default();
    assert_eq!(encode_program(&no_main), Err(EncodeError::MissingMain));
    assert_eq!(make_query(&ChcSystem::default()), Err(EncodeError::MissingMain));
}

#[test]
fn memory_error_kinds() {
    let sys = encode("data c { int v; } int main() { c x = new c(1); free(x); free(x); return 0; }");
    let kinds: BTreeSet<BranchKind> = sys.pred("main").unwrap().branches.iter().map(|b| b.kind.clone()).collect();
    assert!(kinds.contains(&BranchKind::Mem { kind: MemErrKind::DoubleFree, line: 1 }));
    let sys = encode("data c { int v; } int main() { c x = null; return x->v; }");
    let kinds: Vec<BranchKind> = sys.pred("main").unwrap().branches.iter().map(|b| b.kind.clone()).collect();
    assert!(kinds.contains(&BranchKind::Mem { kind: MemErrKind::NullDeref, line: 1 }));
}

fn corpus_files() -> Vec<String> {
    let dir = format!("{}/../../corpus", env!("CARGO_MANIFEST_DIR"));
    let mut out: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("hc"))
        .map(|p| std::fs::read_to_string(p).unwrap())
        .collect();
    out.sort();
    out
}

#[test]
fn structural_invariants_on_corpus() {
    for src in corpus_files() {
        let sys = encode(&src);
        let names: BTreeSet<&str> = sys.preds.iter().map(|p| p.name.as_str()).collect();
        for p in &sys.preds {
            assert_eq!(p.params.last(), Some(&Var::eps()));
            let params: BTreeSet<Var> = p.params.iter().cloned().collect();
            for b in &p.branches {
                assert!(b.heap.free_vars().is_subset(&params), "{}: {}", p.name, b.heap);
                let mut last_k = None;
                for q in &b.heap.pure {
                    if let Some(Seq(s)) = q.seq() {
                        assert!(last_k < Some(s[0]), "{}: {}", p.name, b.heap);
                        last_k = Some(s[0]);
                    }
                }
                let orders: Vec<u32> = b.heap.preds().map(|i| i.order).collect();
                assert!(orders.windows(2).all(|w| w[0] < w[1]));
                for i in b.heap.preds() {
                    assert!(names.contains(&*i.name));
                    assert_eq!(i.args.len(), sys.pred(&i.name).unwrap().params.len());
                }
            }
        }
        let q = sys.query.preds().next().unwrap();
        assert_eq!((&*q.name, q.order, q.unfold), ("main", 0, 0));
    }
}

#[test]
fn encoding_is_deterministic() {
    for src in corpus_files() {
        let p = load(&src).unwrap();
        assert_eq!(encode_program(&p).unwrap(), encode_program(&p).unwrap());
    }
}

// ---------------------------------------------------------------------------
// memory commands: the three outcomes are disjoint and cover every state

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn memory_outcomes_partition_states((init, aliases, which, base) in support::arb_memory_case()) {
        support::memory_outcomes_partition_states(&init, &aliases, which, base).map_err(TestCaseError::fail)?;
    }
}
