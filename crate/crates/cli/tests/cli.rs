use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn hcv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcv")).args(args).current_dir(root()).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_example_is_safe() {
    let o = hcv(&["verify", "corpus/fig2a.hc"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).ends_with("VERDICT: SAFE\n"), "{}", stdout(&o));
}

#[test]
fn verify_is_the_default_command() {
    let o = hcv(&["corpus/fig2a.hc", "--bound", "10"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn mutant_writes_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.graphml");
    let o = hcv(&["verify", "corpus/fig2a_mutant.hc", "--witness", w.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("assertion failure at line 13"), "{out}");
    assert!(out.ends_with("VERDICT: BUG\n"));
    let xml = std::fs::read_to_string(&w).unwrap();
    let schema = std::fs::read_to_string(root().join("docs/witness-schema.xml")).unwrap();
    hcv_core::witness::validate_witness(&xml, &schema).unwrap();
}

#[test]
fn errors_exit_with_three() {
    for args in [
        &["verify", "corpus/missing.hc"][..],
        &["verify", "corpus/fig2a.hc", "--solver", "nope"],
        &["verify", "corpus/fig2a.hc", "--solver", "smtlib:/no/such/solver"],
        &["verify", "corpus/fig2a.hc", "--bound", "x"],
        &["interp"],
    ] {
        let o = hcv(args);
        assert_eq!(o.status.code(), Some(3), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn syntax_error_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.hc");
    std::fs::write(&f, "int main( {\n").unwrap();
    assert_eq!(hcv(&[f.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn interp_runs_concrete_inputs() {
    let o = hcv(&["interp", "corpus/fig2a_mutant.hc", "--inputs", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("AssertErr"), "{}", stdout(&o));
    let o = hcv(&["interp", "corpus/fig2a.hc", "--inputs", "-3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn emit_flags_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let (chc, inv, tree) = (p("a.chc"), p("a.inv"), p("a.dot"));
    let o = hcv(&["verify", "corpus/fig2a.hc", "--emit-chc", &chc, "--emit-invariants", &inv, "--emit-tree", &tree]);
    assert_eq!(o.status.code(), Some(0));
    let chc = std::fs::read_to_string(chc).unwrap();
    hcv_core::encoder::text::parse_system(&chc).unwrap();
    let inv = std::fs::read_to_string(inv).unwrap();
    assert!(inv.lines().any(|l| l.starts_with("sll(")), "{inv}");
    assert!(std::fs::read_to_string(tree).unwrap().starts_with("digraph tree {"));
}

#[test]
fn exit_code_matches_verdict_line_on_the_corpus() {
    let mut files: Vec<PathBuf> = std::fs::read_dir(root().join("corpus"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "hc"))
        .collect();
    files.push(root().join("corpus/bound/countdown_deep.hc"));
    for f in files {
        let o = hcv(&[f.to_str().unwrap()]);
        let verdict = stdout(&o).lines().last().unwrap_or_default().to_string();
        let want = match o.status.code() {
            Some(0) => "VERDICT: SAFE",
            Some(1) => "VERDICT: BUG",
            Some(2) => "VERDICT: UNKNOWN",
            c => panic!("{}: exit {c:?}", f.display()),
        };
        assert_eq!(verdict, want, "{}", f.display());
    }
}

#[test]
fn external_solver_gives_the_same_verdicts() {
    // stand in for an SMT-LIB2 solver with the hidden `smt2` command
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("solver");
    std::fs::write(&script, format!("#!/bin/sh\nexec '{}' smt2 \"$@\"\n", env!("CARGO_BIN_EXE_hcv"))).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    }
    let solver = format!("smtlib:{}", script.display());
    for (f, code) in [("corpus/fig2a.hc", 0), ("corpus/fig2a_mutant.hc", 1), ("corpus/null_deref.hc", 1)] {
        let o = hcv(&["verify", f, "--solver", &solver]);
        assert_eq!(o.status.code(), Some(code), "{f}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn smt2_answers_a_script() {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hcv"))
        .args(["smt2", "-in"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    c.stdin
        .take()
        .unwrap()
        .write_all(b"(set-logic QF_LIA)\n(declare-const x Int)\n(assert (< x 0))\n(assert (> x 0))\n(check-sat)\n")
        .unwrap();
    let o = c.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("unsat"), "{}", stdout(&o));
}
