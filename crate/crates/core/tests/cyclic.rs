use std::time::{Duration, Instant};

use hcv_core::cyclic::*;
use hcv_core::encoder::{encode_program, ChcSystem};
use hcv_core::frontend::{interpret_bounded, load, Outcome};
use hcv_core::invgen::{infer_invariants, prune_system};
use hcv_core::sl::text::parse_heap;
use hcv_core::sl::Var;

fn root(rel: &str) -> String {
    let path = format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn system(src: &str) -> ChcSystem {
    let mut sys = encode_program(&load(src).unwrap()).unwrap();
    infer_invariants(&mut sys);
    prune_system(&mut sys);
    sys
}

fn run(src: &str) -> Solved {
    solve(&system(src), &SolveOptions { timeout: Some(Duration::from_secs(60)), ..Default::default() })
}

fn trace(n: &Node) -> Vec<String> {
    n.trace.iter().map(|s| s.to_string()).collect()
}

#[test]
fn list_example_is_safe_with_one_back_link() {
    let t = Instant::now();
    let r = run(&root("corpus/fig2a.hc"));
    assert!(t.elapsed() < Duration::from_secs(10));
    assert_eq!(r.verdict, Verdict::Safe);
    assert!(r.tree.nodes.len() <= 12, "{} nodes", r.tree.nodes.len());
    r.tree.validate().unwrap();
    let links = r.tree.back_links();
    assert_eq!(links.len(), 1);
    let (bud, comp) = links[0];
    assert_eq!(trace(&r.tree.nodes[bud]), ["main[2]:leak", "sll[2]:pass", "loop_11[1;2]:pass"]);
    assert_eq!(trace(&r.tree.nodes[comp]), ["main[2]:leak"]);
    assert!(r.tree.ancestors(bud).contains(&comp));
    // every other leaf is refuted
    for l in r.tree.leaves().filter(|l| l.id != bud) {
        assert_eq!(l.status, NodeStatus::ClosedUnsat, "node {}", l.id);
    }
}

#[test]
fn list_mutant_bug_replays() {
    let src = root("corpus/fig2a_mutant.hc");
    let r = run(&src);
    let Verdict::Bug { leaf, model, .. } = &r.verdict else { panic!("{:?}", r.verdict) };
    assert!(matches!(r.tree.nodes[*leaf].status, NodeStatus::ClosedSat(_)));
    let n = model.get(&Var::named("n")).copied().unwrap_or(0);
    let out = interpret_bounded(&load(&src).unwrap(), &[n], 100_000).unwrap();
    assert!(matches!(out, Outcome::AssertErr { .. }), "n = {n}: {out:?}");
}

#[test]
fn program_without_errors_is_safe_at_the_root() {
    let r = run("int main(int n) { return n + 1; }\n");
    assert_eq!(r.verdict, Verdict::Safe);
    assert!(r.tree.nodes.len() <= 2);
}

#[test]
fn deep_countdown_exhausts_the_bound() {
    let r = solve(&system(&root("corpus/bound/countdown_deep.hc")), &SolveOptions::default());
    assert_eq!(r.verdict, Verdict::Unknown(UnknownReason::BoundExhausted));
    assert!(r.tree.nodes.iter().any(|n| n.status == NodeStatus::Exhausted));
    // a larger bound reaches the error
    let r = solve(&system(&root("corpus/bound/countdown_deep.hc")), &SolveOptions { bound: 60, ..Default::default() });
    assert!(matches!(r.verdict, Verdict::Bug { .. }), "{:?}", r.verdict);
}

#[test]
fn node_cap_gives_unknown() {
    let r = solve(&system(&root("corpus/bound/countdown_deep.hc")), &SolveOptions { max_nodes: 5, ..Default::default() });
    assert_eq!(r.verdict, Verdict::Unknown(UnknownReason::SolverCap));
}

#[test]
fn search_is_deterministic() {
    for f in ["corpus/fig2a.hc", "corpus/nested_bug.hc", "corpus/list_leak.hc"] {
        let a = run(&root(f));
        let b = run(&root(f));
        assert_eq!(a.verdict, b.verdict, "{f}");
        assert_eq!(render_dot(&a.tree), render_dot(&b.tree), "{f}");
    }
}

#[test]
fn dot_output_marks_back_links() {
    let r = run(&root("corpus/fig2a.hc"));
    let dot = render_dot(&r.tree);
    assert!(dot.starts_with("digraph tree {"));
    assert_eq!(dot.matches("style=dashed").count(), 1);
}

#[test]
fn corpus_agrees_with_exhaustive_interpretation() {
    let mut dirs = std::fs::read_dir(format!("{}/../../corpus", env!("CARGO_MANIFEST_DIR")))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "hc"))
        .collect::<Vec<_>>();
    dirs.sort();
    assert!(dirs.len() >= 12);
    for path in dirs {
        let src = std::fs::read_to_string(&path).unwrap();
        let expect = src.lines().find_map(|l| l.strip_prefix("// expect: ")).unwrap().trim().to_string();
        let prog = load(&src).unwrap();
        let arity = prog.main().unwrap().params.len();
        let r = run(&src);
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        match (&r.verdict, expect.as_str()) {
            (Verdict::Safe, "SAFE") => {
                // no input in a small box fails
                let mut xs = vec![-6i64; arity];
                loop {
                    let out = interpret_bounded(&prog, &xs, 100_000).unwrap();
                    assert!(!out.is_error(), "{name}: {xs:?} gives {out:?}");
                    let Some(i) = xs.iter().position(|x| *x < 6) else { break };
                    xs[i] += 1;
                    xs[..i].iter_mut().for_each(|x| *x = -6);
                }
            }
            (Verdict::Bug { model, .. }, "BUG") => {
                let params = &prog.main().unwrap().params;
                let xs: Vec<i64> = params.iter().map(|(_, v)| model.get(v).copied().unwrap_or(0)).collect();
                let out = interpret_bounded(&prog, &xs, 100_000).unwrap();
                assert!(out.is_error(), "{name}: model {xs:?} gives {out:?}");
            }
            (v, e) => panic!("{name}: expected {e}, got {v:?}"),
        }
        r.tree.validate().unwrap();
    }
}

fn link(bud: &str, comp: &str) -> Option<Vec<(Var, Var)>> {
    link_back(&parse_heap(bud).unwrap(), &parse_heap(comp).unwrap(), &|_| false, &|_| None)
}

#[test]
fn back_link_renames_bud_into_companion() {
    let theta = link("p(y, e)^o:0,u:2 & 1 <= y", "p(x, e)^o:0,u:1 & 0 <= x").unwrap();
    assert!(theta.contains(&(Var::named("y"), Var::named("x"))), "{theta:?}");
}

#[test]
fn back_link_needs_progress() {
    assert!(link("p(y, e)^o:0,u:1 & 1 <= y", "p(x, e)^o:0,u:1 & 0 <= x").is_none());
}

#[test]
fn back_link_needs_the_same_cells() {
    assert!(link("p(y, e)^o:0,u:2 * z->node{val:y,next:z}", "p(x, e)^o:0,u:1").is_none());
    assert!(link("p(y, e)^o:0,u:2", "p(x, e)^o:0,u:1 * z->node{val:x,next:z}").is_none());
}

#[test]
fn back_link_needs_pure_entailment() {
    assert!(link("p(y, e)^o:0,u:2 & y <= -3", "p(x, e)^o:0,u:1 & 0 <= x").is_none());
}

#[test]
fn back_link_eliminates_defined_companion_variables() {
    // x = n - 1 with n loose on the companion side
    assert!(link("p(y, e)^o:0,u:2 & 0 <= y", "p(x, e)^o:0,u:1 & x = n + -1 & 1 <= n").is_some());
    assert!(link("p(y, e)^o:0,u:2 & -5 <= y", "p(x, e)^o:0,u:1 & x = n + -1 & 1 <= n").is_none());
}
