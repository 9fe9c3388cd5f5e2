//! `hcv`: verify heap-manipulating programs written in the core language.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hcv_core::cyclic::{self, SolveOptions, Verdict};
use hcv_core::encoder::{self, text::render_system};
use hcv_core::frontend::{self, Outcome};
use hcv_core::{invgen, solver, witness};

#[derive(Parser)]
#[command(name = "hcv", version, about = "Verify heap-manipulating programs via CHCs over separation logic")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide whether the program can reach an error (the default command).
    Verify(VerifyArgs),
    /// Run the program on concrete inputs.
    Interp {
        file: PathBuf,
        /// Values of main's parameters.
        #[arg(long, num_args = 0.., allow_negative_numbers = true)]
        inputs: Vec<i64>,
        /// Statement budget before giving up.
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
    },
    /// Answer one SMT-LIB2 QF_LIA script from stdin with the internal solver.
    #[command(hide = true)]
    Smt2 {
        /// Ignored, so the command can stand in for solvers called with `-in`.
        #[arg(num_args = 0.., allow_hyphen_values = true, hide = true)]
        _flags: Vec<String>,
    },
}

#[derive(Args)]
struct VerifyArgs {
    file: PathBuf,
    /// Largest unfold number of an expanded predicate occurrence.
    #[arg(long, default_value_t = 28)]
    bound: u32,
    /// `internal` or `smtlib:PATH` (an executable reading SMT-LIB2 on stdin).
    #[arg(long, default_value = "internal")]
    solver: String,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 180)]
    timeout: u64,
    /// Write the encoded clauses to FILE (`-` for stdout).
    #[arg(long, value_name = "FILE")]
    emit_chc: Option<PathBuf>,
    /// Write inferred invariants and pruned branches to FILE (`-` for stdout).
    #[arg(long, value_name = "FILE")]
    emit_invariants: Option<PathBuf>,
    /// Write the final search tree in DOT format to FILE (`-` for stdout).
    #[arg(long, value_name = "FILE")]
    emit_tree: Option<PathBuf>,
    /// Write a GraphML violation witness to FILE when a bug is found.
    #[arg(long, value_name = "FILE")]
    witness: Option<PathBuf>,
}

fn emit(to: &Path, text: &str) -> Result<()> {
    if to == Path::new("-") {
        print!("{text}");
        Ok(())
    } else {
        std::fs::write(to, text).with_context(|| format!("cannot write {}", to.display()))
    }
}

fn read(file: &Path) -> Result<(String, frontend::Program)> {
    let src = std::fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
    let prog = frontend::load(&src).map_err(|e| anyhow!("{}: {e}", file.display()))?;
    Ok((src, prog))
}

fn verify(a: &VerifyArgs) -> Result<u8> {
    let backend = match a.solver.as_str() {
        "internal" => solver::Backend::Internal,
        s => match s.strip_prefix("smtlib:") {
            Some(path) if path.contains('/') && !Path::new(path).exists() => bail!("solver {path} not found"),
            Some(path) if !path.is_empty() => solver::Backend::SmtLib(path.to_string()),
            _ => bail!("unknown solver `{s}` (expected internal or smtlib:PATH)"),
        },
    };
    solver::set_backend(backend);
    let start = Instant::now();
    let (_, prog) = read(&a.file)?;
    let mut sys = encoder::encode_program(&prog).map_err(|e| anyhow!("{}: {e}", a.file.display()))?;
    if let Some(to) = &a.emit_chc {
        emit(to, &render_system(&sys))?;
    }
    let report = invgen::infer_invariants(&mut sys);
    let pruned = invgen::prune_system(&mut sys);
    if let Some(to) = &a.emit_invariants {
        let mut s = String::new();
        for p in &sys.preds {
            let params: Vec<String> = p.params.iter().map(|v| v.to_string()).collect();
            let inv = p.invariant.as_ref().map(|i| i.to_string()).unwrap_or_else(|| "true".into());
            s.push_str(&format!("{}({}): {inv}\n", p.name, params.join(", ")));
        }
        for x in &pruned {
            s.push_str(&format!("pruned {x}\n"));
        }
        emit(to, &s)?;
    }
    let opts = SolveOptions { bound: a.bound, timeout: Some(Duration::from_secs(a.timeout)), ..Default::default() };
    let r = cyclic::solve(&sys, &opts);
    if let Some(to) = &a.emit_tree {
        emit(to, &cyclic::render_dot(&r.tree))?;
    }
    let branches: usize = sys.preds.iter().map(|p| p.branches.len()).sum();
    println!("{}", a.file.display());
    println!(
        "  {} predicates, {branches} branches after pruning {}; invariants {} after {} rounds",
        sys.preds.len(),
        pruned.len(),
        if report.converged { "converged" } else { "gave up" },
        report.rounds
    );
    println!("  tree: {} nodes, {} back-links", r.tree.nodes.len(), r.tree.back_links().len());
    match &r.verdict {
        Verdict::Safe => println!("  no error is reachable"),
        Verdict::Bug { leaf, .. } => {
            let t = witness::extract_trace(&r.tree, *leaf, &sys).ok_or_else(|| anyhow!("bug leaf without a model"))?;
            println!("  {} with inputs {:?}", t.kind, t.inputs(&prog));
            println!("  trace {t}");
            if let Some(to) = &a.witness {
                emit(to, &witness::emit_witness(&t, &a.file.to_string_lossy()))?;
            }
        }
        Verdict::Unknown(why) => println!("  gave up: {why}"),
    }
    println!("  time {:.2}s", start.elapsed().as_secs_f64());
    println!("VERDICT: {}", r.verdict.tag());
    Ok(match r.verdict {
        Verdict::Safe => 0,
        Verdict::Bug { .. } => 1,
        Verdict::Unknown(_) => 2,
    })
}

fn interp(file: &Path, inputs: &[i64], steps: u64) -> Result<u8> {
    let (_, prog) = read(file)?;
    let out = frontend::interpret_bounded(&prog, inputs, steps).map_err(|e| anyhow!("{e}"))?;
    println!("{out:?}");
    Ok(match out {
        Outcome::Ok(_) | Outcome::Blocked => 0,
        Outcome::Bound => 2,
        _ => 1,
    })
}

fn smt2() -> Result<u8> {
    let mut src = String::new();
    std::io::stdin().read_to_string(&mut src)?;
    let p = solver::smtlib::read_script(&src).map_err(|e| anyhow!(e))?;
    let r = solver::decide(&p).map_err(|e| anyhow!("{e}"))?;
    print!("{}", solver::smtlib::write_answer(&r));
    Ok(0)
}

const COMMANDS: [&str; 7] = ["verify", "interp", "smt2", "help", "-h", "--help", "-V"];

fn main() -> ExitCode {
    let mut args: Vec<String> = std::env::args().collect();
    // `hcv FILE ...` means `hcv verify FILE ...`
    if args.get(1).is_some_and(|a| !COMMANDS.contains(&a.as_str()) && a != "--version") {
        args.insert(1, "verify".into());
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let r = match &cli.cmd {
        Cmd::Verify(a) => verify(a),
        Cmd::Interp { file, inputs, steps } => interp(file, inputs, *steps),
        Cmd::Smt2 { .. } => smt2(),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("hcv: {e:#}");
            ExitCode::from(3)
        }
    }
}
