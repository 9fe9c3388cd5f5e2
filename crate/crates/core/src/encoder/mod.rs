//! Translation of normalized programs into systems of constrained Horn
//! clauses over symbolic heaps.
//!
//! Every procedure `f(p1..pn)` becomes a predicate `f(p1..pn, res.., eps)`
//! whose branches are the feasible paths through its body. `eps` is the exit
//! status: 1 when the path ends in an error, 0 otherwise.

mod exec;
pub mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::frontend::{MemErrKind, Program};
use crate::sl::{HeapAtom, PredInst, Pure, Seq, SymbolicHeap, Var};
use crate::solver::{self, normalize::writer_preds};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("program has no main procedure")]
    MissingMain,
    #[error("line {line}: {msg}")]
    IllFormed { line: u32, msg: String },
}

/// What a branch stands for, used to report errors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchKind {
    /// Normal exit.
    Ok,
    /// Exit status taken from a callee in tail position.
    Pass,
    /// A callee failed and the caller stops.
    CalleeFail,
    /// `ERROR()` reached.
    Assert { line: u32 },
    /// Unsafe memory access or free.
    Mem { kind: MemErrKind, line: u32 },
    /// `main` returns with allocated cells (or, when guarded, a callee in
    /// tail position failed).
    Leak,
}

impl BranchKind {
    /// Kinds whose own commands raise the error.
    pub fn is_origin(&self) -> bool {
        matches!(self, BranchKind::Assert { .. } | BranchKind::Mem { .. })
    }
}

impl fmt::Display for BranchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchKind::Ok => write!(f, "ok"),
            BranchKind::Pass => write!(f, "pass"),
            BranchKind::CalleeFail => write!(f, "callee"),
            BranchKind::Assert { line } => write!(f, "assert@{line}"),
            BranchKind::Mem { kind, line } => write!(f, "{kind}@{line}"),
            BranchKind::Leak => write!(f, "leak"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    pub heap: SymbolicHeap,
    pub kind: BranchKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredDef {
    pub name: String,
    /// Procedure parameters, then result variables, then `eps`.
    pub params: Vec<Var>,
    pub branches: Vec<Branch>,
    pub invariant: Option<Pure>,
    /// Source line of the procedure or loop.
    pub line: u32,
}

impl PredDef {
    pub fn heaps(&self) -> Vec<SymbolicHeap> {
        self.branches.iter().map(|b| b.heap.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ChcSystem {
    pub preds: Vec<PredDef>,
    pub query: SymbolicHeap,
}

impl ChcSystem {
    pub fn pred(&self, name: &str) -> Option<&PredDef> {
        self.preds.iter().find(|p| p.name == name)
    }

    pub fn pred_mut(&mut self, name: &str) -> Option<&mut PredDef> {
        self.preds.iter_mut().find(|p| p.name == name)
    }

    /// Predicates whose definitions may store to or free existing cells.
    pub fn writers(&self) -> BTreeSet<String> {
        let defs: BTreeMap<String, Vec<SymbolicHeap>> =
            self.preds.iter().map(|p| (p.name.clone(), p.heaps())).collect();
        writer_preds(&defs)
    }
}

/// A memory command on a variable base, for [`memory_disjuncts`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MemCmd {
    Load { base: Var, field: String, target: Var },
    Store { base: Var, field: String, source: Var },
    Free { base: Var },
}

impl MemCmd {
    pub fn base(&self) -> &Var {
        match self {
            MemCmd::Load { base, .. } | MemCmd::Store { base, .. } | MemCmd::Free { base } => base,
        }
    }
}

/// The three outcomes of a memory command as the `k`-th access:
/// base dangling (error), base null (error), and success. The two error
/// outcomes set `eps = 1`.
pub fn memory_disjuncts(cmd: &MemCmd, k: u32) -> [Vec<Pure>; 3] {
    let y = cmd.base();
    let at = Seq::local(k);
    let eps = Pure::eq_const(&Var::eps(), 1);
    let dangl = vec![Pure::Dangl(y.clone(), at.clone()), eps.clone()];
    let null = vec![Pure::EqNull(y.clone()), eps];
    let mut ok = vec![Pure::not(Pure::Dangl(y.clone(), at.clone())), Pure::ne_null(y)];
    match cmd {
        MemCmd::Load { field, target, .. } => {
            ok.push(Pure::Load { base: y.clone(), field: field.as_str().into(), target: target.clone(), seq: at })
        }
        MemCmd::Store { field, source, .. } => {
            ok.push(Pure::Store { base: y.clone(), field: field.as_str().into(), source: source.clone(), seq: at })
        }
        MemCmd::Free { .. } => {
            ok.push(Pure::Del { base: y.clone(), seq: at });
            ok.push(Pure::Dangl(y.clone(), Seq::local(k + 1)));
        }
    }
    [dangl, null, ok]
}

/// Names of the result variables of a procedure returning `n` values.
pub fn result_vars(n: usize) -> Vec<Var> {
    match n {
        0 => vec![],
        1 => vec![Var::res()],
        _ => (1..=n as u32).map(|i| Var::new("res", i)).collect(),
    }
}

/// Encode every procedure and build the safety query.
pub fn encode_program(prog: &Program) -> Result<ChcSystem, EncodeError> {
    let main = prog.main().ok_or(EncodeError::MissingMain)?;
    if !crate::frontend::is_normalized(prog) {
        return Err(EncodeError::IllFormed { line: main.line, msg: "program is not normalized".into() });
    }
    let mut preds = Vec::new();
    for p in &prog.procs {
        let branches = exec::encode_proc(prog, p)?;
        let mut params: Vec<Var> = p.params.iter().map(|(_, v)| v.clone()).collect();
        params.extend(result_vars(p.ret.len()));
        params.push(Var::eps());
        preds.push(PredDef { name: p.name.clone(), params, branches, invariant: None, line: p.line });
    }
    let mut sys = ChcSystem { preds, query: SymbolicHeap::emp() };
    sys.query = make_query(&sys)?;
    drop_infeasible(&mut sys);
    Ok(sys)
}

/// `main(params, res, eps)^0_0 & eps = 1`
pub fn make_query(sys: &ChcSystem) -> Result<SymbolicHeap, EncodeError> {
    let main = sys.pred("main").ok_or(EncodeError::MissingMain)?;
    let inst = PredInst::new("main", main.params.clone(), 0, 0);
    let mut q = SymbolicHeap::emp();
    q.spatial.push(HeapAtom::Pred(inst));
    q.pure.push(Pure::eq_const(&Var::eps(), 1));
    Ok(q)
}

const CONTEXT: &str = "$context";

/// Is the branch, with its predicate occurrences left abstract, satisfiable?
/// Over-approximates: occurrences only ever add constraints.
pub fn branch_feasible(h: &SymbolicHeap, writers: &BTreeSet<String>) -> bool {
    if h.nonempty && h.leak_guard.is_none() && h.spatial.is_empty() {
        return false;
    }
    // cells of the calling context are unknown: a writer placed before
    // everything else keeps accesses to them unresolved
    let mut placed = h.place(&Seq::default());
    let mut ctx = PredInst::new(CONTEXT, vec![], 0, 0);
    ctx.stamp = Seq(vec![0]);
    placed.spatial.push(HeapAtom::Pred(ctx));
    let writers = |p: &str| p == CONTEXT || writers.contains(p);
    let Ok(norm) = solver::normalize_with(&placed, &writers) else { return true };
    norm.iter().any(|n| {
        let mut base = n.heap.clone();
        base.spatial.retain(|a| !matches!(a, HeapAtom::Pred(_)));
        base.nonempty = false;
        base.leak_guard = None;
        match solver::base_constraints(&base).map(|p| solver::is_sat(&p)) {
            Ok(Ok(sat)) => sat,
            _ => true,
        }
    })
}

fn drop_infeasible(sys: &mut ChcSystem) {
    let writers = sys.writers();
    for p in sys.preds.iter_mut() {
        p.branches.retain(|b| branch_feasible(&b.heap, &writers));
    }
}
