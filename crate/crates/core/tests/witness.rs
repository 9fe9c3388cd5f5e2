use hcv_core::cyclic::{solve, SolveOptions, Verdict};
use hcv_core::encoder::{encode_program, BranchKind, ChcSystem};
use hcv_core::frontend::{interpret_bounded, load, MemErrKind, Outcome, Program};
use hcv_core::invgen::{infer_invariants, prune_system};
use hcv_core::witness::*;

fn root(rel: &str) -> String {
    let path = format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn schema() -> String {
    root("docs/witness-schema.xml")
}

fn bug_trace(src: &str) -> (Program, WitnessTrace) {
    let prog = load(src).unwrap();
    let mut sys: ChcSystem = encode_program(&prog).unwrap();
    infer_invariants(&mut sys);
    prune_system(&mut sys);
    let r = solve(&sys, &SolveOptions::default());
    let Verdict::Bug { leaf, .. } = r.verdict else { panic!("{:?}", r.verdict) };
    (prog, extract_trace(&r.tree, leaf, &sys).unwrap())
}

fn step(pred: &str, label: &[u8]) -> WitnessStep {
    WitnessStep { pred: pred.into(), label: label.to_vec(), kind: BranchKind::Ok, line: 1 }
}

fn count(xml: &str, tag: &str) -> usize {
    xml.matches(&format!("<{tag} ")).count()
}

#[test]
fn mutant_trace_has_the_expected_shape() {
    let (prog, t) = bug_trace(&root("corpus/fig2a_mutant.hc"));
    let shape: Vec<(String, Vec<u8>)> = t.steps.iter().map(|s| (s.pred.clone(), s.label.clone())).collect();
    assert_eq!(shape[0], ("main".to_string(), vec![2]));
    assert!(shape.contains(&("sll".to_string(), vec![1])));
    assert_eq!(shape.last().unwrap(), &("loop_11".to_string(), vec![1, 1]));
    assert_eq!(t.kind, ErrorKind::Assert { line: 13 });
    assert!(matches!(replay(&t, &prog, 100_000), Ok(Outcome::AssertErr { line: 13 })));
}

#[test]
fn error_at_the_root_gives_a_single_main_step() {
    let (_, t) = bug_trace("int main(int n) {\n  ERROR();\n  return 0;\n}\n");
    assert_eq!(t.steps.len(), 1);
    assert_eq!((t.steps[0].pred.as_str(), t.steps[0].label.as_slice()), ("main", &[][..]));
    assert_eq!(t.to_string(), "[(main, [])]");
}

#[test]
fn double_free_anchors_to_the_second_free() {
    let src = root("corpus/double_free.hc");
    let (prog, t) = bug_trace(&src);
    let ErrorKind::Mem { kind: MemErrKind::DoubleFree, line } = t.kind else { panic!("{:?}", t.kind) };
    assert!(src.lines().nth(line as usize - 1).unwrap().contains("free"));
    let out = interpret_bounded(&prog, &t.inputs(&prog), 100_000).unwrap();
    assert_eq!(out, Outcome::MemErr { kind: MemErrKind::DoubleFree, line });
    assert_eq!(t.steps.last().unwrap().line, line);
}

#[test]
fn three_steps_give_four_nodes_and_three_edges() {
    let t = WitnessTrace {
        steps: vec![step("main", &[2]), step("sll", &[1]), step("loop_11", &[1, 1])],
        kind: ErrorKind::Leak,
        model: Default::default(),
    };
    let xml = emit_witness(&t, "a.hc");
    assert_eq!(count(&xml, "node"), 4);
    assert_eq!(count(&xml, "edge"), 3);
    assert_eq!(xml.matches("<data key=\"entry\">true</data>").count(), 1);
    assert!(xml.contains("<data key=\"control\">condition-false</data>"));
    validate_witness(&xml, &schema()).unwrap();
}

#[test]
fn empty_trace_gives_entry_and_violation() {
    let t = WitnessTrace { steps: vec![], kind: ErrorKind::Leak, model: Default::default() };
    let xml = emit_witness(&t, "a.hc");
    assert_eq!(count(&xml, "node"), 2);
    assert_eq!(count(&xml, "edge"), 1);
    validate_witness(&xml, &schema()).unwrap();
}

#[test]
fn mutant_witness_is_bit_stable_and_valid() {
    let (_, t) = bug_trace(&root("corpus/fig2a_mutant.hc"));
    let xml = emit_witness(&t, "fig2a_mutant.hc");
    assert_eq!(xml, root("docs/golden/fig2a_mutant.graphml"));
    validate_witness(&xml, &schema()).unwrap();
}

#[test]
fn validation_rejects_broken_documents() {
    let t = WitnessTrace { steps: vec![step("main", &[1]), step("f", &[2])], kind: ErrorKind::Leak, model: Default::default() };
    let good = emit_witness(&t, "a.hc");
    validate_witness(&good, &schema()).unwrap();
    let broken = [
        good.replace("condition-true", "maybe"),
        good.replace("<data key=\"startline\">1</data>", "<data key=\"startline\">one</data>"),
        good.replace("violation_witness", "correctness_witness"),
        good.replace("target=\"N2\"", "target=\"N0\""),
        good.replace("<data key=\"programfile\">a.hc</data>\n", ""),
        good.replace("<data key=\"violation\">true</data>", "<data key=\"violation\">false</data>"),
        good.replace("<data key=\"enterFunction\">f</data>", "<data key=\"undeclared\">f</data>"),
        good.replace("</graphml>", ""),
    ];
    for (i, b) in broken.iter().enumerate() {
        assert_ne!(b, &good, "case {i} did not change the document");
        assert!(validate_witness(b, &schema()).is_err(), "case {i} accepted");
    }
}

#[test]
fn every_corpus_bug_witness_validates_and_replays() {
    let dir = format!("{}/../../corpus", env!("CARGO_MANIFEST_DIR"));
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.extension().is_none_or(|x| x != "hc") {
            continue;
        }
        let src = std::fs::read_to_string(&path).unwrap();
        if !src.contains("// expect: BUG") {
            continue;
        }
        let (prog, t) = bug_trace(&src);
        let xml = emit_witness(&t, &path.to_string_lossy());
        validate_witness(&xml, &schema()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        replay(&t, &prog, 100_000).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 6);
}

#[test]
fn replay_rejects_a_wrong_claim() {
    let (prog, mut t) = bug_trace(&root("corpus/fig2a_mutant.hc"));
    t.kind = ErrorKind::Leak;
    assert!(matches!(replay(&t, &prog, 100_000), Err(WitnessError::Replay { .. })));
}
