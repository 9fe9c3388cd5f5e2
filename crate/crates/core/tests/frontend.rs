use hcv_core::frontend::*;
use proptest::prelude::*;

fn corpus(name: &str) -> String {
    let path = format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn run(p: &Program, inputs: &[i64]) -> Outcome {
    interpret_bounded(p, inputs, DEFAULT_STEP_BOUND).unwrap()
}

#[test]
fn parses_list_example() {
    let p = parse_program(&corpus("fig2a.hc")).unwrap();
    let names: Vec<&str> = p.procs.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["sll", "main"]);
    assert_eq!(p.datas[0].fields.len(), 2);
}

#[test]
fn parses_trivial_main() {
    let p = parse_program("int main() { return 0; }").unwrap();
    assert_eq!(p.procs.len(), 1);
    assert_eq!(run(&p, &[]), Outcome::Ok(0));
}

#[test]
fn syntax_errors_are_positioned() {
    match parse_program("int main() { return 0; ") {
        Err(FrontendError::Syntax { line: 1, .. }) => {}
        other => panic!("{other:?}"),
    }
    match parse_program("int main() {\n  int x = ;\n}") {
        Err(FrontendError::Syntax { line: 2, col: 11, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn unsupported_features() {
    for src in [
        "int main() { goto l; }",
        "int main() { switch (1) {} return 0; }",
        "data c { int v; } int main() { c p = new c(1); c q = p + 1; return 0; }",
        "int main(int a) { return a / 2; }",
        "int main(int a, int b) { return a * b; }",
        "data c { int v; } int main(c p) { return 0; }",
        "int main(int a) { while (a > 0) { return 1; } return 0; }",
    ] {
        assert!(matches!(parse_program(src), Err(FrontendError::Unsupported { .. })), "{src}");
    }
}

#[test]
fn type_errors() {
    for src in [
        "int main() { return x; }",
        "int main() { int x = 1; int x = 2; return x; }",
        "data c { int v; } int main() { c p = new c(1); return p->w; }",
        "int main() { return f(1); }",
        "int main() { bool b = 1; return 0; }",
        "int f(int a) { if (a > 0) return 1; } int main() { return f(1); }",
    ] {
        assert!(matches!(parse_program(src), Err(FrontendError::Type { .. })), "{src}");
    }
    assert_eq!(parse_program("int f() { return 0; }"), Err(FrontendError::MissingMain));
}

#[test]
fn loop_becomes_procedure() {
    let p = load(&corpus("fig2a.hc")).unwrap();
    let names: Vec<&str> = p.procs.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["sll", "main", "loop_11"]);
    let lp = p.proc("loop_11").unwrap();
    assert_eq!(lp.params.len(), 1);
    assert_eq!(&*lp.params[0].1.name, "x");
    assert_eq!(lp.ret, vec![Type::Data("node".into())]);
    assert_eq!(lp.loop_line, Some(11));
    assert!(is_normalized(&p));
    assert_eq!(ssa_violation(&p), None);
}

#[test]
fn nested_loops_become_two_procedures() {
    let p = load(&corpus("nested_loop.hc")).unwrap();
    let loops: Vec<&Proc> = p.procs.iter().filter(|p| p.loop_line.is_some()).collect();
    assert_eq!(loops.len(), 2);
    let outer = loops.iter().min_by_key(|p| p.loop_line).unwrap();
    let inner = loops.iter().max_by_key(|p| p.loop_line).unwrap();
    let mut calls_inner = false;
    walk_calls(&outer.body, &mut |n| calls_inner |= n == inner.name);
    assert!(calls_inner);
}

fn walk_calls(body: &[Stmt], f: &mut dyn FnMut(&str)) {
    hcv_core::frontend::ast::walk_stmts(body, &mut |s| {
        if let StmtKind::Assign { rhs: Expr::Call(n, _), .. } | StmtKind::Eval(Expr::Call(n, _)) = &s.kind {
            f(n)
        }
    });
}

#[test]
fn program_without_loops_keeps_its_procedures() {
    let src = "int main(int a) { int b = a + 1; if (b > 2) { b = 0; } return b; }";
    let p = load(src).unwrap();
    assert_eq!(p.procs.len(), 1);
    for a in -3..4 {
        assert_eq!(run(&p, &[a]), run(&parse_program(src).unwrap(), &[a]));
    }
}

#[test]
fn interpreter_examples() {
    let p = parse_program(&corpus("fig2a.hc")).unwrap();
    assert_eq!(run(&p, &[3]), Outcome::Ok(1));
    assert_eq!(run(&p, &[-1]), Outcome::Ok(0));
    assert_eq!(run(&p, &[0]), Outcome::Ok(1));
    let m = parse_program(&corpus("fig2a_mutant.hc")).unwrap();
    assert_eq!(run(&m, &[1]), Outcome::AssertErr { line: 13 });
    assert_eq!(run(&m, &[0]), Outcome::Ok(1));

    let df = parse_program("data c { int v; } int main() { c x = new c(0); free(x); free(x); return 0; }").unwrap();
    assert_eq!(run(&df, &[]), Outcome::MemErr { kind: MemErrKind::DoubleFree, line: 1 });
    let leak = parse_program("data c { int v; } int main() { c x = new c(0); return 0; }").unwrap();
    assert_eq!(run(&leak, &[]), Outcome::Leak);
    let nd = parse_program("data c { int v; } int main() { c x = null; return x->v; }").unwrap();
    assert_eq!(run(&nd, &[]), Outcome::MemErr { kind: MemErrKind::NullDeref, line: 1 });
    let uninit = parse_program("data c { int v; } int main() { c x; return x->v; }").unwrap();
    assert_eq!(run(&uninit, &[]), Outcome::MemErr { kind: MemErrKind::DanglingDeref, line: 1 });
    let spin = parse_program("int main() { int a = 1; while (a > 0) { a = a + 1; } return 0; }").unwrap();
    assert_eq!(interpret_bounded(&spin, &[], 1000).unwrap(), Outcome::Bound);
    assert_eq!(interpret_bounded(&p, &[1, 2], 10), Err(FrontendError::Arity { expected: 1, got: 2 }));
}

#[test]
fn interpreter_is_deterministic() {
    let p = load(&corpus("fig2a.hc")).unwrap();
    for n in -2..6 {
        assert_eq!(run(&p, &[n]), run(&p, &[n]));
    }
}

#[test]
fn normalization_preserves_corpus_outcomes() {
    let dir = format!("{}/../../corpus", env!("CARGO_MANIFEST_DIR"));
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("hc") {
            continue;
        }
        let src = std::fs::read_to_string(&path).unwrap();
        let orig = parse_program(&src).unwrap();
        let norm = to_core(&orig).unwrap();
        assert!(is_normalized(&norm), "{}", path.display());
        assert_eq!(ssa_violation(&norm), None, "{}", path.display());
        let arity = orig.main().unwrap().params.len();
        for inputs in boxes(arity, 6) {
            let a = run(&orig, &inputs);
            let b = run(&norm, &inputs);
            if a != Outcome::Bound && b != Outcome::Bound {
                assert_eq!(a, b, "{} on {inputs:?}", path.display());
            }
        }
        seen += 1;
    }
    assert!(seen >= 2);
}

/// All vectors of length `n` with entries in `[-r, r]`.
fn boxes(n: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|v| (-r..=r).map(move |x| [v.clone(), vec![x]].concat())).collect();
    }
    out
}

// ---------------------------------------------------------------------------
// random programs: the original and its normal form agree

fn arb_int() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (-3i64..4).prop_map(|k| k.to_string()),
        prop_oneof![Just("a"), Just("b"), Just("c")].prop_map(String::from),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(x, y)| format!("({x} + {y})")),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| format!("({x} - {y})")),
            (inner.clone(), -2i64..3).prop_map(|(x, k)| format!("({k} * {x})")),
        ]
    })
}

fn arb_cond() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        (arb_int(), arb_int()).prop_map(|(x, y)| format!("{x} < {y}")),
        (arb_int(), arb_int()).prop_map(|(x, y)| format!("{x} == {y}")),
        Just("p != null".to_string()),
        Just("p".to_string()),
        Just("p->val > 0".to_string()),
    ];
    atom.prop_recursive(2, 4, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(x, y)| format!("({x} && {y})")),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| format!("({x} || {y})")),
            inner.prop_map(|x| format!("!({x})")),
        ]
    })
}

fn arb_stmt() -> impl Strategy<Value = String> {
    let simple = prop_oneof![
        (prop_oneof![Just("a"), Just("b"), Just("c")], arb_int()).prop_map(|(v, e)| format!("{v} = {e};")),
        arb_int().prop_map(|e| format!("p = new node({e}, p);")),
        Just("if (p != null) { q = p->next; free(p); p = q; }".to_string()),
        Just("c = p->val;".to_string()),
        Just("p->val = a;".to_string()),
        Just("q = p; free(q);".to_string()),
        arb_cond().prop_map(|c| format!("if ({c}) ERROR();")),
        Just("a = f(a, p);".to_string()),
    ];
    simple.prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            (arb_cond(), prop::collection::vec(inner.clone(), 0..3), prop::collection::vec(inner.clone(), 0..2))
                .prop_map(|(c, t, e)| format!("if ({c}) {{ {} }} else {{ {} }}", t.join(" "), e.join(" "))),
            (prop::collection::vec(inner, 0..3))
                .prop_map(|b| format!("while (b > 0) {{ {} b = b - 1; }}", b.join(" "))),
        ]
    })
}

fn program(body: &[String], cleanup: bool) -> String {
    let clean = if cleanup { "while (p != null) { q = p->next; free(p); p = q; }" } else { "" };
    format!(
        "data node {{ int val; node next; }}\n\
         int f(int x, node r) {{ if (r != null && r->val < x) return x - 1; return x + 1; }}\n\
         int main(int a, int b) {{\n int c = 0; node p = null; node q = null;\n{}\n{clean}\n return a + c;\n}}\n",
        body.join("\n")
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn normalization_preserves_outcomes(body in prop::collection::vec(arb_stmt(), 1..6), cleanup in any::<bool>()) {
        let src = program(&body, cleanup);
        let orig = parse_program(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let norm = to_core(&orig).unwrap();
        prop_assert!(is_normalized(&norm));
        prop_assert_eq!(ssa_violation(&norm), None);
        for a in -2..3 {
            for b in [0, 1, 3] {
                let x = interpret_bounded(&orig, &[a, b], 20_000).unwrap();
                let y = interpret_bounded(&norm, &[a, b], 20_000).unwrap();
                if x != Outcome::Bound && y != Outcome::Bound {
                    prop_assert_eq!(&x, &y, "{}\ninputs {} {}\n{}", src, a, b, norm);
                }
            }
        }
    }
}
