//! Bounded search for a satisfiable unfolding of the query, closing
//! branches by back-links to ancestors.
//!
//! Every node holds an open symbolic heap (no quantifier prefix: variables
//! introduced by unfolding are fresh). Nodes are checked when created:
//! base leaves are decided exactly, leaves with predicates are refuted
//! through the invariants or linked back to an ancestor they entail, and
//! whatever stays open is unfolded breadth first.

mod dot;
mod link;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::time::{Duration, Instant};

pub use dot::render_dot;
pub use link::link_back;

use crate::encoder::{BranchKind, ChcSystem};
use crate::sl::{FreshGen, HeapAtom, PredInst, Seq, SymbolicHeap, Var};
use crate::solver::{self, Model, Normalized};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub pred: String,
    pub label: Vec<u8>,
    pub kind: BranchKind,
    /// Stamp of the unfolded occurrence; ordering by it gives program order.
    pub stamp: Seq,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l: Vec<String> = self.label.iter().map(|x| x.to_string()).collect();
        write!(f, "{}[{}]:{}", self.pred, l.join(";"), self.kind)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeStatus {
    Open,
    /// Open, but its next unfolding would pass the bound.
    Exhausted,
    ClosedUnsat,
    ClosedSat(Model),
    /// Entails `target` under the renaming `theta` (bud var, companion var).
    LinkedBack { target: usize, theta: Vec<(Var, Var)> },
    /// The decision procedure gave up on this node.
    Undecided(String),
}

impl NodeStatus {
    pub fn tag(&self) -> &'static str {
        match self {
            NodeStatus::Open => "open",
            NodeStatus::Exhausted => "bound",
            NodeStatus::ClosedUnsat => "unsat",
            NodeStatus::ClosedSat(_) => "sat",
            NodeStatus::LinkedBack { .. } => "link",
            NodeStatus::Undecided(_) => "undecided",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: usize,
    pub heap: SymbolicHeap,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub status: NodeStatus,
    /// Definition branches taken from the root to here.
    pub trace: Vec<TraceStep>,
}

#[derive(Clone, Debug, Default)]
pub struct ExecTree {
    pub nodes: Vec<Node>,
}

impl ExecTree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.children.is_empty())
    }

    pub fn back_links(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.status {
                NodeStatus::LinkedBack { target, .. } => Some((n.id, *target)),
                _ => None,
            })
            .collect()
    }

    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        out
    }

    /// Structural sanity: parent and child lists agree, ids are positions,
    /// only leaves are closed or linked, links go to proper ancestors.
    pub fn validate(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(format!("node {i} has id {}", n.id));
            }
            if (i == 0) != n.parent.is_none() {
                return Err(format!("node {i}: bad parent"));
            }
            if let Some(p) = n.parent {
                if p >= i || !self.nodes[p].children.contains(&i) {
                    return Err(format!("node {i}: parent {p} does not list it"));
                }
                if n.trace.len() != self.nodes[p].trace.len() + 1 {
                    return Err(format!("node {i}: trace length"));
                }
            }
            for c in &n.children {
                if self.nodes.get(*c).and_then(|c| c.parent) != Some(i) {
                    return Err(format!("node {i}: child {c} has another parent"));
                }
            }
            let closed = !matches!(n.status, NodeStatus::Open);
            if !n.children.is_empty() && closed {
                return Err(format!("node {i}: inner node with status {}", n.status.tag()));
            }
            if let NodeStatus::LinkedBack { target, .. } = n.status {
                if !self.ancestors(i).contains(&target) {
                    return Err(format!("node {i}: link to non-ancestor {target}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnknownReason {
    /// Some leaf needs more unfoldings than the bound allows.
    BoundExhausted,
    /// The decision procedure or the node budget gave up.
    SolverCap,
    Timeout,
}

impl fmt::Display for UnknownReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnknownReason::BoundExhausted => "bound exhausted",
            UnknownReason::SolverCap => "solver limit",
            UnknownReason::Timeout => "timeout",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Safe,
    /// A satisfiable base leaf: the branches leading to it and a model.
    Bug { leaf: usize, trace: Vec<TraceStep>, model: Model },
    Unknown(UnknownReason),
}

impl Verdict {
    pub fn tag(&self) -> &'static str {
        match self {
            Verdict::Safe => "SAFE",
            Verdict::Bug { .. } => "BUG",
            Verdict::Unknown(_) => "UNKNOWN",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Largest unfold number a leaf may be expanded to.
    pub bound: u32,
    pub timeout: Option<Duration>,
    pub max_nodes: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { bound: 28, timeout: None, max_nodes: 20_000 }
    }
}

#[derive(Clone, Debug)]
pub struct Solved {
    pub verdict: Verdict,
    pub tree: ExecTree,
}

struct Search<'a> {
    sys: &'a ChcSystem,
    writers: BTreeSet<String>,
    gen: FreshGen,
    tree: ExecTree,
    undecided: bool,
    /// Normalized node heaps, kept for companion checks.
    prepared: HashMap<usize, Option<Vec<Normalized>>>,
}

/// Max variable version used anywhere in the system.
fn max_version(sys: &ChcSystem) -> u32 {
    let mut m = 0;
    let mut see = |h: &SymbolicHeap| {
        for v in h.all_vars() {
            m = m.max(v.version);
        }
        for v in &h.ex_vars {
            m = m.max(v.version);
        }
    };
    see(&sys.query);
    for p in &sys.preds {
        for b in &p.branches {
            see(&b.heap);
        }
    }
    m
}

/// Run the search on `sys.query`.
pub fn solve(sys: &ChcSystem, opts: &SolveOptions) -> Solved {
    let gen = FreshGen::new(1);
    gen.bump_past(max_version(sys));
    let mut s = Search { sys, writers: sys.writers(), gen, tree: ExecTree::default(), undecided: false, prepared: HashMap::new() };
    let deadline = opts.timeout.map(|d| Instant::now() + d);

    let root = sys.query.open().place(&Seq::default());
    let mut queue = VecDeque::new();
    if let Some(v) = s.add(None, root, None, &mut queue) {
        return Solved { verdict: v, tree: s.tree };
    }
    let mut exhausted = false;
    while let Some(id) = queue.pop_front() {
        if deadline.is_some_and(|d| Instant::now() > d) {
            return Solved { verdict: Verdict::Unknown(UnknownReason::Timeout), tree: s.tree };
        }
        if s.tree.nodes.len() > opts.max_nodes {
            return Solved { verdict: Verdict::Unknown(UnknownReason::SolverCap), tree: s.tree };
        }
        let heap = s.tree.nodes[id].heap.clone();
        let Some(occ) = select(&heap) else { continue };
        if occ.unfold >= opts.bound {
            s.tree.nodes[id].status = NodeStatus::Exhausted;
            exhausted = true;
            continue;
        }
        let def = match sys.pred(&occ.name) {
            Some(d) => d,
            None => {
                s.tree.nodes[id].status = NodeStatus::Undecided(format!("no definition for {}", occ.name));
                s.undecided = true;
                continue;
            }
        };
        let rest = without(&heap, &occ);
        for b in &def.branches {
            let body = instantiate(&b.heap, &def.params, &occ, &s.gen);
            let child = rest.star(&body);
            if !s.consistent(&child) {
                continue;
            }
            let step = TraceStep { pred: def.name.clone(), label: b.heap.label.clone(), kind: b.kind.clone(), stamp: occ.stamp.clone() };
            if let Some(v) = s.add(Some(id), child, Some(step), &mut queue) {
                return Solved { verdict: v, tree: s.tree };
            }
        }
        if s.tree.nodes[id].children.is_empty() {
            // every branch normalized to false
            s.tree.nodes[id].status = NodeStatus::ClosedUnsat;
        }
    }
    debug_assert!(s.tree.validate().is_ok(), "{:?}", s.tree.validate());
    let verdict = if exhausted {
        Verdict::Unknown(UnknownReason::BoundExhausted)
    } else if s.undecided {
        Verdict::Unknown(UnknownReason::SolverCap)
    } else {
        Verdict::Safe
    };
    Solved { verdict, tree: s.tree }
}

/// Occurrence to unfold: smallest unfold number, then order, then stamp.
pub fn select(h: &SymbolicHeap) -> Option<PredInst> {
    h.preds().min_by(|a, b| (a.unfold, a.order, &a.stamp).cmp(&(b.unfold, b.order, &b.stamp))).cloned()
}

fn without(h: &SymbolicHeap, occ: &PredInst) -> SymbolicHeap {
    let mut out = h.clone();
    let i = out.spatial.iter().position(|a| matches!(a, HeapAtom::Pred(p) if p == occ)).expect("occurrence");
    out.spatial.remove(i);
    out
}

/// A definition branch as it replaces occurrence `occ`: existentials fresh,
/// parameters renamed to the arguments, time placed below the occurrence.
pub fn instantiate(branch: &SymbolicHeap, params: &[Var], occ: &PredInst, gen: &FreshGen) -> SymbolicHeap {
    let fresh = branch.freshen_existentials(gen).open();
    let m: HashMap<Var, Var> = params.iter().cloned().zip(occ.args.iter().cloned()).collect();
    let mut body = fresh.rename(&m).place(&occ.stamp);
    for a in body.spatial.iter_mut() {
        if let HeapAtom::Pred(p) = a {
            p.order += occ.order;
            p.unfold += occ.unfold;
        }
    }
    body
}

impl Search<'_> {
    fn invariant(&self, p: &PredInst) -> Option<crate::sl::Pure> {
        invariant_of(self.sys, p)
    }

    fn writes(&self) -> impl Fn(&str) -> bool + '_ {
        |p: &str| self.writers.contains(p)
    }

    fn consistent(&self, h: &SymbolicHeap) -> bool {
        match solver::normalize_with(h, &self.writes()) {
            Ok(ns) => !ns.is_empty(),
            Err(_) => true,
        }
    }

    /// Create a node and settle what can be settled right away. Returns a
    /// verdict when the node is a satisfiable base leaf.
    fn add(
        &mut self,
        parent: Option<usize>,
        heap: SymbolicHeap,
        step: Option<TraceStep>,
        queue: &mut VecDeque<usize>,
    ) -> Option<Verdict> {
        let id = self.tree.nodes.len();
        let mut trace = parent.map(|p| self.tree.nodes[p].trace.clone()).unwrap_or_default();
        trace.extend(step);
        if let Some(p) = parent {
            self.tree.nodes[p].children.push(id);
        }
        let status = self.settle(id, &heap, parent);
        self.tree.nodes.push(Node { id, heap, parent, children: vec![], status: status.clone(), trace });
        match status {
            NodeStatus::ClosedSat(model) => {
                let trace = self.tree.nodes[id].trace.clone();
                Some(Verdict::Bug { leaf: id, trace, model })
            }
            NodeStatus::Open => {
                queue.push_back(id);
                None
            }
            NodeStatus::Undecided(_) => {
                self.undecided = true;
                None
            }
            _ => None,
        }
    }

    fn settle(&mut self, id: usize, heap: &SymbolicHeap, parent: Option<usize>) -> NodeStatus {
        if heap.is_base() {
            return match under_approx(heap) {
                Ok(Some(m)) => NodeStatus::ClosedSat(m),
                Ok(None) => NodeStatus::ClosedUnsat,
                Err(e) => NodeStatus::Undecided(e),
            };
        }
        match over_approx(self.sys, heap, &self.writes()) {
            Ok(false) => return NodeStatus::ClosedUnsat,
            Ok(true) => {}
            Err(e) => return NodeStatus::Undecided(e),
        }
        let mut mine = None;
        let mut cur = parent;
        while let Some(a) = cur {
            cur = self.tree.nodes[a].parent;
            if !link::may_link(heap, &self.tree.nodes[a].heap) {
                continue;
            }
            let Some(nb) = mine.get_or_insert_with(|| link::prepare(heap, &self.writes())).clone() else { break };
            if !self.prepared.contains_key(&a) {
                let p = link::prepare(&self.tree.nodes[a].heap, &self.writes());
                self.prepared.insert(a, p);
            }
            let Some(nc) = &self.prepared[&a] else { continue };
            let inv = |p: &PredInst| self.invariant(p);
            if let Some(theta) = link::link_prepared(&nb, nc, &inv) {
                return NodeStatus::LinkedBack { target: a, theta };
            }
        }
        if let Some(p) = mine {
            self.prepared.insert(id, p);
        }
        NodeStatus::Open
    }
}

/// Invariant of the predicate of `p`, over the arguments of `p`.
pub fn invariant_of(sys: &ChcSystem, p: &PredInst) -> Option<crate::sl::Pure> {
    let d = sys.pred(&p.name)?;
    let m: HashMap<Var, Var> = d.params.iter().cloned().zip(p.args.iter().cloned()).collect();
    d.invariant.as_ref().map(|i| i.rename(&m))
}

/// Exact check of a base heap.
fn under_approx(h: &SymbolicHeap) -> Result<Option<Model>, String> {
    solver::check_base(h).map_err(|e| e.to_string())
}

/// Can the heap still be satisfiable once its predicates are replaced by
/// their invariants? Unresolved memory facts are dropped, which only adds
/// models.
pub fn over_approx(sys: &ChcSystem, h: &SymbolicHeap, writes: &dyn Fn(&str) -> bool) -> Result<bool, String> {
    let norm = solver::normalize_with(h, writes).map_err(|e| e.to_string())?;
    for n in norm {
        let mut base = n.heap.clone();
        let extra: Vec<_> = n.heap.preds().filter_map(|p| invariant_of(sys, p)).collect();
        base.spatial.retain(|a| !matches!(a, HeapAtom::Pred(_)));
        base.nonempty = false;
        base.leak_guard = None;
        base.pure.extend(extra);
        let p = solver::base_constraints(&base).map_err(|e| e.to_string())?;
        match solver::is_sat(&p) {
            Ok(true) => return Ok(true),
            Ok(false) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(false)
}
