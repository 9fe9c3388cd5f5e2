//! Pure invariants of predicates and pruning of branches they rule out.
//!
//! The abstract domain is an interval per integer parameter plus the
//! parameter equalities common to all branches, kept separately for each
//! exit status. Bounds are taken from the
//! constants of the system (and their neighbours), which keeps the lattice
//! finite; bounds still moving after a few rounds are widened to infinity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::encoder::{BranchKind, ChcSystem, PredDef};
use crate::sl::{pointer_vars, HeapAtom, Pure, SymbolicHeap, Term, Var};
use crate::solver;

/// Rounds after which still-growing bounds jump to infinity.
const WIDEN_AFTER: usize = 3;
/// Hard cap on rounds per strongly connected component.
const MAX_ROUNDS: usize = 50;

/// One element of the abstract domain; `None` fields mean unbounded.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct AbstractValue {
    pub bounds: BTreeMap<Var, (Option<i64>, Option<i64>)>,
    pub equalities: BTreeSet<(Var, Var)>,
}

impl AbstractValue {
    pub fn to_pure(&self) -> Pure {
        let mut out = Vec::new();
        for (v, (lo, hi)) in &self.bounds {
            match (lo, hi) {
                (Some(a), Some(b)) if a == b => out.push(Pure::eq_const(v, *a)),
                _ => {
                    if let Some(a) = lo {
                        out.push(Pure::Le(Term::Const(*a), Term::var(v)));
                    }
                    if let Some(b) = hi {
                        out.push(Pure::Le(Term::var(v), Term::Const(*b)));
                    }
                }
            }
        }
        for (a, b) in &self.equalities {
            out.push(Pure::eq_vars(a, b));
        }
        Pure::and(out)
    }

    fn join(&self, other: &AbstractValue) -> AbstractValue {
        let mut bounds = BTreeMap::new();
        for (v, (lo, hi)) in &self.bounds {
            let (lo2, hi2) = other.bounds.get(v).copied().unwrap_or((None, None));
            let lo = lo.zip(lo2).map(|(a, b)| a.min(b));
            let hi = hi.zip(hi2).map(|(a, b)| a.max(b));
            bounds.insert(v.clone(), (lo, hi));
        }
        let equalities = self.equalities.intersection(&other.equalities).cloned().collect();
        AbstractValue { bounds, equalities }
    }

    /// Bounds that moved since `old` go to infinity.
    fn widen(&self, old: &AbstractValue) -> AbstractValue {
        let mut out = self.clone();
        for (v, (lo, hi)) in out.bounds.iter_mut() {
            let (olo, ohi) = old.bounds.get(v).copied().unwrap_or((None, None));
            if *lo != olo {
                *lo = None;
            }
            if *hi != ohi {
                *hi = None;
            }
        }
        out
    }
}

impl fmt::Display for AbstractValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_pure())
    }
}

/// Outcome of invariant inference over a whole system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvReport {
    pub converged: bool,
    pub rounds: usize,
}

/// A branch removed by [`prune_system`], with the conflicting conjuncts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pruned {
    pub pred: String,
    pub label: Vec<u8>,
    pub kind: BranchKind,
    pub core: Vec<Pure>,
}

impl fmt::Display for Pruned {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label: Vec<String> = self.label.iter().map(|d| d.to_string()).collect();
        let core: Vec<String> = self.core.iter().map(|p| p.to_string()).collect();
        write!(f, "{} [{}] {}: {}", self.pred, label.join(";"), self.kind, core.join(" & "))
    }
}

/// Arithmetic content of a branch with every predicate occurrence replaced
/// by `invs`, as a list of conjuncts. `None` if some occurrence has no
/// models yet.
fn abstract_branch(h: &SymbolicHeap, invs: &HashMap<String, Option<Pure>>, sys: &ChcSystem) -> Option<Vec<Pure>> {
    let mut parts = Vec::new();
    let mut roots = Vec::new();
    for a in &h.spatial {
        match a {
            HeapAtom::PointsTo { root, .. } => {
                parts.push(Pure::ne_null(root));
                roots.push(root.clone());
            }
            HeapAtom::Pred(p) => {
                let inv = match invs.get(&*p.name) {
                    Some(None) => return None,
                    Some(Some(inv)) => inv.clone(),
                    None => Pure::tt(),
                };
                let Some(def) = sys.pred(&p.name) else { continue };
                let m: HashMap<Var, Var> = def.params.iter().cloned().zip(p.args.iter().cloned()).collect();
                parts.extend(inv.rename(&m).conjuncts());
            }
        }
    }
    for (i, a) in roots.iter().enumerate() {
        for b in &roots[i + 1..] {
            parts.push(Pure::ne_vars(a, b));
        }
    }
    for p in h.pure.iter().flat_map(|p| p.conjuncts()) {
        if !p.contains_spatial_semantics() {
            parts.push(p);
        }
    }
    Some(parts)
}

fn implied(phi: &Pure, goal: Pure) -> bool {
    // a solver failure counts as "not implied", which only loses precision
    solver::implies(phi, &goal).unwrap_or(false)
}

fn sat(phi: &Pure) -> bool {
    solver::is_sat(phi).unwrap_or(true)
}

fn collect_consts(p: &Pure, out: &mut BTreeSet<i64>) {
    fn term(t: &Term, out: &mut BTreeSet<i64>) {
        match t {
            Term::Const(c) => {
                out.insert(*c);
            }
            Term::Var(_) => {}
            Term::Mul(k, a) => {
                out.insert(*k);
                term(a, out)
            }
            Term::Neg(a) => term(a, out),
            Term::Add(a, b) | Term::Min(a, b) | Term::Max(a, b) => {
                term(a, out);
                term(b, out)
            }
        }
    }
    match p {
        Pure::Eq(a, b) | Pure::Le(a, b) => {
            term(a, out);
            term(b, out)
        }
        Pure::Not(q) | Pure::Exists(_, q) => collect_consts(q, out),
        Pure::And(qs) | Pure::Or(qs) => qs.iter().for_each(|q| collect_consts(q, out)),
        _ => {}
    }
}

/// Candidate bounds: constants of the system and their neighbours.
fn thresholds(sys: &ChcSystem) -> Vec<i64> {
    let mut cs = BTreeSet::from([-1, 0, 1]);
    for p in &sys.preds {
        for b in &p.branches {
            for q in &b.heap.pure {
                collect_consts(q, &mut cs);
            }
        }
    }
    let base: Vec<i64> = cs.iter().copied().collect();
    for c in base {
        cs.insert(c.saturating_sub(1));
        cs.insert(c.saturating_add(1));
    }
    cs.into_iter().collect()
}

/// Parameters that hold pointers, propagated through predicate arguments.
fn pointer_params(sys: &ChcSystem) -> HashMap<String, BTreeSet<Var>> {
    let mut out: HashMap<String, BTreeSet<Var>> = HashMap::new();
    for p in &sys.preds {
        let params: BTreeSet<&Var> = p.params.iter().collect();
        let mut s = BTreeSet::new();
        for b in &p.branches {
            s.extend(pointer_vars(&b.heap).into_iter().filter(|v| params.contains(v)));
        }
        out.insert(p.name.clone(), s);
    }
    loop {
        let mut grew = false;
        for p in &sys.preds {
            for b in &p.branches {
                let local = pointer_vars(&b.heap);
                for i in b.heap.preds() {
                    let Some(def) = sys.pred(&i.name) else { continue };
                    for (formal, actual) in def.params.iter().zip(&i.args) {
                        let callee_ptr = out[&*i.name].contains(formal);
                        let caller_ptr = local.contains(actual) || out[&p.name].contains(actual);
                        if callee_ptr && p.params.contains(actual) && out.get_mut(&p.name).unwrap().insert(actual.clone()) {
                            grew = true;
                        }
                        if caller_ptr && out.get_mut(&*i.name).unwrap().insert(formal.clone()) {
                            grew = true;
                        }
                    }
                }
            }
        }
        if !grew {
            return out;
        }
    }
}

/// Best abstract value of one branch formula.
fn alpha(phi: &Pure, pd: &PredDef, ptrs: &BTreeSet<Var>, cs: &[i64]) -> AbstractValue {
    let mut bounds = BTreeMap::new();
    for v in pd.params.iter().filter(|v| !ptrs.contains(v)) {
        // largest c with phi => v >= c
        let lo = {
            let (mut a, mut b) = (0usize, cs.len());
            while a < b {
                let m = (a + b) / 2;
                if implied(phi, Pure::Le(Term::Const(cs[m]), Term::var(v))) {
                    a = m + 1;
                } else {
                    b = m;
                }
            }
            (a > 0).then(|| cs[a - 1])
        };
        // smallest c with phi => v <= c
        let hi = {
            let (mut a, mut b) = (0usize, cs.len());
            while a < b {
                let m = (a + b) / 2;
                if implied(phi, Pure::Le(Term::var(v), Term::Const(cs[m]))) {
                    b = m;
                } else {
                    a = m + 1;
                }
            }
            (a < cs.len()).then(|| cs[a])
        };
        bounds.insert(v.clone(), (lo, hi));
    }
    let mut equalities = BTreeSet::new();
    for (i, a) in pd.params.iter().enumerate() {
        for b in &pd.params[i + 1..] {
            if ptrs.contains(a) == ptrs.contains(b) && implied(phi, Pure::eq_vars(a, b)) {
                equalities.insert((a.clone(), b.clone()));
            }
        }
    }
    AbstractValue { bounds, equalities }
}

/// Strongly connected components of the call graph, callees first.
fn components(sys: &ChcSystem) -> Vec<Vec<String>> {
    let names: Vec<String> = sys.preds.iter().map(|p| p.name.clone()).collect();
    let calls: HashMap<&str, BTreeSet<String>> = sys
        .preds
        .iter()
        .map(|p| (p.name.as_str(), p.branches.iter().flat_map(|b| b.heap.preds().map(|i| i.name.to_string())).collect()))
        .collect();
    let reach = |from: &str| -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<String> = calls.get(from).into_iter().flatten().cloned().collect();
        while let Some(q) = stack.pop() {
            if seen.insert(q.clone()) {
                stack.extend(calls.get(q.as_str()).into_iter().flatten().cloned());
            }
        }
        seen
    };
    let reaches: HashMap<&str, BTreeSet<String>> = names.iter().map(|n| (n.as_str(), reach(n))).collect();
    let mut done: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    while done.len() < names.len() {
        for n in &names {
            if done.contains(n) {
                continue;
            }
            let comp: Vec<String> = names
                .iter()
                .filter(|m| *m == n || (reaches[n.as_str()].contains(*m) && reaches[m.as_str()].contains(n)))
                .cloned()
                .collect();
            let ready = comp.iter().all(|c| reaches[c.as_str()].iter().all(|d| done.contains(d) || comp.contains(d)));
            if ready {
                done.extend(comp.iter().cloned());
                out.push(comp);
            }
        }
    }
    out
}

/// Abstract values for exit status 0 and 1.
type Split = [Option<AbstractValue>; 2];

/// One disjunct per exit status, merged when they only differ in it.
fn split_pure(s: &Split, eps: &Var) -> Option<Pure> {
    match s {
        [None, None] => None,
        [Some(a), None] | [None, Some(a)] => Some(a.to_pure()),
        [Some(a), Some(b)] => {
            let strip = |x: &AbstractValue| {
                let mut x = x.clone();
                x.bounds.remove(eps);
                x.equalities.retain(|(p, q)| p != eps && q != eps);
                x
            };
            if strip(a) == strip(b) {
                Some(a.join(b).to_pure())
            } else {
                Some(Pure::Or(vec![a.to_pure(), b.to_pure()]))
            }
        }
    }
}

/// Infer invariants for every predicate and store them in the system.
pub fn infer_invariants(sys: &mut ChcSystem) -> InvReport {
    let cs = thresholds(sys);
    let ptrs = pointer_params(sys);
    let mut invs: HashMap<String, Option<Pure>> = HashMap::new();
    let mut report = InvReport { converged: true, rounds: 0 };
    for comp in components(sys) {
        let mut vals: HashMap<String, Split> = comp.iter().map(|n| (n.clone(), [None, None])).collect();
        for n in &comp {
            invs.insert(n.clone(), None);
        }
        let mut round = 0;
        loop {
            round += 1;
            let mut changed = false;
            for n in &comp {
                let pd = sys.pred(n).expect("component member");
                let eps = pd.params.last().expect("exit status parameter");
                let mut acc: Split = [None, None];
                for b in &pd.branches {
                    let Some(parts) = abstract_branch(&b.heap, &invs, sys) else { continue };
                    for (k, slot) in acc.iter_mut().enumerate() {
                        let mut parts = parts.clone();
                        parts.push(Pure::eq_const(eps, k as i64));
                        let phi = Pure::and(parts);
                        if !sat(&phi) {
                            continue;
                        }
                        let a = alpha(&phi, pd, &ptrs[n], &cs);
                        *slot = Some(match slot.take() {
                            None => a,
                            Some(x) => x.join(&a),
                        });
                    }
                }
                let old = vals[n].clone();
                let mut new: Split = [None, None];
                for k in 0..2 {
                    new[k] = match (&old[k], acc[k].take()) {
                        (Some(o), Some(a)) if round > WIDEN_AFTER => Some(a.join(o).widen(o)),
                        (Some(o), Some(a)) => Some(a.join(o)),
                        (_, a) => a,
                    };
                }
                if new != old {
                    changed = true;
                    invs.insert(n.clone(), split_pure(&new, eps));
                    vals.insert(n.clone(), new);
                }
            }
            if !changed {
                break;
            }
            if round >= MAX_ROUNDS {
                report.converged = false;
                for n in &comp {
                    invs.insert(n.clone(), Some(Pure::tt()));
                }
                break;
            }
        }
        report.rounds = report.rounds.max(round);
    }
    for p in sys.preds.iter_mut() {
        p.invariant = Some(invs.get(&p.name).cloned().flatten().unwrap_or_else(Pure::ff));
    }
    report
}

/// Invariant of one predicate (inference runs over the whole system).
pub fn infer_invariant(pd: &PredDef, sys: &ChcSystem) -> Pure {
    let mut s = sys.clone();
    infer_invariants(&mut s);
    s.pred(&pd.name).and_then(|p| p.invariant.clone()).unwrap_or_else(Pure::tt)
}

/// Remove branches whose body is unsatisfiable once every predicate
/// occurrence is replaced by its invariant.
pub fn prune_system(sys: &mut ChcSystem) -> Vec<Pruned> {
    let invs: HashMap<String, Option<Pure>> =
        sys.preds.iter().map(|p| (p.name.clone(), Some(p.invariant.clone().unwrap_or_else(Pure::tt)))).collect();
    let mut log = Vec::new();
    let snapshot = sys.clone();
    for p in sys.preds.iter_mut() {
        let mut keep = Vec::new();
        for b in p.branches.drain(..) {
            let parts = abstract_branch(&b.heap, &invs, &snapshot).unwrap_or_default();
            match solver::decide(&Pure::and(parts.clone())) {
                Ok(None) => {
                    let core = solver::unsat_core(&parts).unwrap_or_default().into_iter().map(|i| parts[i].clone()).collect();
                    log.push(Pruned { pred: p.name.clone(), label: b.heap.label.clone(), kind: b.kind.clone(), core });
                }
                _ => keep.push(b),
            }
        }
        p.branches = keep;
    }
    log
}
