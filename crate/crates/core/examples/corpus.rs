//! Solve every program in a directory and compare with the interpreter.

use std::time::{Duration, Instant};

use hcv_core::{cyclic, encoder, frontend, invgen};

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "corpus".into());
    let mut paths: Vec<_> = std::fs::read_dir(&dir).unwrap().flatten().map(|e| e.path()).collect();
    paths.sort();
    for p in paths.iter().filter(|p| p.extension().is_some_and(|e| e == "hc")) {
        let src = std::fs::read_to_string(p).unwrap();
        let prog = frontend::load(&src).unwrap();
        let t = Instant::now();
        let mut sys = encoder::encode_program(&prog).unwrap();
        invgen::infer_invariants(&mut sys);
        invgen::prune_system(&mut sys);
        let opts = cyclic::SolveOptions { timeout: Some(Duration::from_secs(20)), ..Default::default() };
        let r = cyclic::solve(&sys, &opts);
        let el = t.elapsed();
        let arity = prog.main().unwrap().params.len();
        let mut err = None;
        let mut inputs = vec![-6i64; arity];
        loop {
            let o = frontend::interpret_bounded(&prog, &inputs, 100_000).unwrap();
            if o.is_error() && err.is_none() {
                err = Some((inputs.clone(), o));
            }
            let mut i = 0;
            while i < arity && inputs[i] == 6 {
                inputs[i] = -6;
                i += 1;
            }
            if i == arity {
                break;
            }
            inputs[i] += 1;
        }
        let v = match &r.verdict {
            cyclic::Verdict::Bug { model, .. } => format!("BUG {model:?}"),
            other => format!("{other:?}"),
        };
        println!("{:<22} {:>8.2?} nodes {:>5} {} | oracle {:?}", p.file_name().unwrap().to_string_lossy(), el, r.tree.nodes.len(), v, err);
    }
}
