//! Back-links: a leaf may be closed when every model of it is, after
//! renaming, a model of an ancestor with strictly fewer unfoldings behind
//! its occurrences.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::sl::{HeapAtom, PredInst, Pure, SymbolicHeap, Term, Var};
use crate::solver::{self, Normalized};

/// Steps allowed to the atom matcher per pair of normalized heaps.
const MATCH_BUDGET: usize = 2_000;

/// Try to link `bud` back to `comp`. On success returns the renaming from
/// bud variables to companion variables.
pub fn link_back(
    bud: &SymbolicHeap,
    comp: &SymbolicHeap,
    writes: &dyn Fn(&str) -> bool,
    inv: InvOf,
) -> Option<Vec<(Var, Var)>> {
    if !may_link(bud, comp) {
        return None;
    }
    let nb = prepare(bud, writes)?;
    let nc = prepare(comp, writes)?;
    link_prepared(&nb, &nc, inv)
}

/// Cheap conditions checked before any normalization.
pub(super) fn may_link(bud: &SymbolicHeap, comp: &SymbolicHeap) -> bool {
    progress(bud, comp) && bud.nonempty == comp.nonempty && bud.leak_guard.is_some() == comp.leak_guard.is_some()
}

/// Normalized disjuncts with aliases collapsed; `None` when normalization
/// fails.
pub(super) fn prepare(h: &SymbolicHeap, writes: &dyn Fn(&str) -> bool) -> Option<Vec<Normalized>> {
    let n = solver::normalize_with(h, writes).ok()?;
    Some(n.into_iter().map(collapse).collect())
}

pub(super) fn link_prepared(nb: &[Normalized], nc: &[Normalized], inv: InvOf) -> Option<Vec<(Var, Var)>> {
    // a companion with unresolved memory facts is weaker than it looks
    if nb.is_empty() || nc.iter().any(|n| !n.residual.is_empty()) {
        return None;
    }
    let mut first = None;
    for b in nb {
        let theta = nc.iter().find_map(|c| match_pair(b, c, inv))?;
        first.get_or_insert(theta);
    }
    first
}

/// Substitute variable equalities away so that aliases share one name.
/// Existentials are replaced first, so free variables survive.
fn collapse(mut n: Normalized) -> Normalized {
    let ex: BTreeSet<Var> = n.heap.ex_vars.iter().cloned().collect();
    loop {
        let pick = n.heap.pure.iter().find_map(|p| match p {
            Pure::Eq(Term::Var(a), Term::Var(b)) if a != b => Some((a.clone(), b.clone())),
            _ => None,
        });
        let Some((a, b)) = pick else { break };
        let (gone, keep) = if ex.contains(&a) && !ex.contains(&b) { (a, b) } else { (b, a) };
        let m: HashMap<Var, Var> = [(gone, keep)].into_iter().collect();
        n.heap = n.heap.rename(&m);
        n.heap.pure.retain(|p| !matches!(p, Pure::Eq(Term::Var(x), Term::Var(y)) if x == y));
    }
    n.heap.normalize_order();
    n
}

/// Necessary condition for [`pairs_progress`]: same predicates, and some
/// bud occurrence unfolded past the least unfolded companion occurrence.
fn progress(bud: &SymbolicHeap, comp: &SymbolicHeap) -> bool {
    let Some(min) = comp.preds().map(|p| p.unfold).min() else { return false };
    let mut a: Vec<&str> = bud.preds().map(|p| &*p.name).collect();
    let mut b: Vec<&str> = comp.preds().map(|p| &*p.name).collect();
    a.sort();
    b.sort();
    a == b && bud.preds().any(|p| p.unfold > min)
}

/// Matched occurrences never go back in unfold number and at least one
/// went forward.
fn pairs_progress(b: &SymbolicHeap, c: &SymbolicHeap, theta: &Theta) -> bool {
    let mut used = vec![false; c.spatial.len()];
    let mut forward = false;
    for p in b.preds() {
        let args: Vec<Option<&Var>> = p.args.iter().map(|v| theta.get(v)).collect();
        let hit = c.spatial.iter().enumerate().find(|(j, a)| {
            !used[*j]
                && matches!(a, HeapAtom::Pred(q) if q.name == p.name
                    && q.args.iter().zip(&args).all(|(x, y)| Some(x) == *y))
        });
        let Some((j, HeapAtom::Pred(q))) = hit else { return false };
        used[j] = true;
        if p.unfold < q.unfold {
            return false;
        }
        forward |= p.unfold > q.unfold;
    }
    forward
}

/// Invariant of a predicate occurrence, over its arguments.
pub type InvOf<'a> = &'a dyn Fn(&PredInst) -> Option<Pure>;

struct Matcher<'a> {
    bud: &'a Normalized,
    comp: &'a Normalized,
    inv: InvOf<'a>,
    budget: usize,
}

type Theta = HashMap<Var, Var>;

fn bind(theta: &mut Theta, range: &mut BTreeSet<Var>, b: &Var, c: &Var) -> bool {
    match theta.get(b) {
        Some(x) => x == c,
        None => {
            if !range.insert(c.clone()) {
                return false;
            }
            theta.insert(b.clone(), c.clone());
            true
        }
    }
}

fn unify(a: &HeapAtom, b: &HeapAtom, theta: &mut Theta, range: &mut BTreeSet<Var>) -> bool {
    match (a, b) {
        (HeapAtom::PointsTo { ty: t1, fields: f1, .. }, HeapAtom::PointsTo { ty: t2, fields: f2, .. }) => {
            if t1 != t2 || f1.len() != f2.len() || f1.iter().zip(f2).any(|(x, y)| x.0 != y.0) {
                return false;
            }
        }
        (HeapAtom::Pred(p), HeapAtom::Pred(q)) => {
            if p.name != q.name || p.args.len() != q.args.len() {
                return false;
            }
        }
        _ => return false,
    }
    a.vars().iter().zip(b.vars().iter()).all(|(x, y)| bind(theta, range, x, y))
}

impl Matcher<'_> {
    fn search(&mut self, i: usize, used: &mut Vec<bool>, theta: &Theta, range: &BTreeSet<Var>) -> Option<Theta> {
        if self.budget == 0 {
            return None;
        }
        self.budget -= 1;
        let atoms = &self.bud.heap.spatial;
        if i == atoms.len() {
            return self.finish(theta.clone(), range.clone());
        }
        for (j, c) in self.comp.heap.spatial.iter().enumerate() {
            if used[j] {
                continue;
            }
            let (mut t, mut r) = (theta.clone(), range.clone());
            if !unify(&atoms[i], c, &mut t, &mut r) {
                continue;
            }
            used[j] = true;
            let found = self.search(i + 1, used, &t, &r);
            used[j] = false;
            if found.is_some() {
                return found;
            }
        }
        None
    }

    fn finish(&self, mut theta: Theta, mut range: BTreeSet<Var>) -> Option<Theta> {
        let (b, c) = (&self.bud.heap, &self.comp.heap);
        if !pairs_progress(b, c, &theta) || !same_pred_order(b, c, &theta) {
            return None;
        }
        // companion variables outside the matching are existential: drop
        // the ones an equality defines, witness the rest by the bud
        // variable of the same name
        let bud_vars = b.all_vars();
        let mut cpure = c.pure.clone();
        let mut loose: BTreeSet<Var> = c.all_vars().into_iter().filter(|v| !range.contains(v)).collect();
        while let Some((i, u, t)) = definition(&cpure, &loose) {
            let p: Option<Vec<Pure>> =
                cpure.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| q.subst(&u, &t)).collect();
            let Some(p) = p else { break };
            cpure = p;
            loose.remove(&u);
        }
        let mentioned: BTreeSet<Var> = cpure.iter().flat_map(|q| q.free_vars()).collect();
        for v in loose.iter().filter(|v| mentioned.contains(*v) || c.leak_guard.as_ref() == Some(*v)) {
            if !bud_vars.contains(v) || theta.contains_key(v) {
                return None;
            }
            theta.insert(v.clone(), v.clone());
            range.insert(v.clone());
        }
        match (&b.leak_guard, &c.leak_guard) {
            (Some(g), Some(h)) if theta.get(g) != Some(h) => return None,
            _ => {}
        }
        // remaining bud variables are local to the bud
        let mut full = theta.clone();
        for v in &bud_vars {
            if !full.contains_key(v) {
                full.insert(v.clone(), Var::new(&format!("{}~b", v.name), v.version));
            }
        }
        let mut lhs: Vec<Pure> = b.pure.iter().map(|p| p.rename(&full)).collect();
        lhs.extend(b.preds().filter_map(|p| (self.inv)(p)).map(|p| p.rename(&full)));
        let have: BTreeSet<&Pure> = lhs.iter().collect();
        let lhs_all = Pure::and(lhs.clone());
        for q in &cpure {
            if have.contains(q) {
                continue;
            }
            if !matches!(solver::implies(&lhs_all, q), Ok(true)) {
                return None;
            }
        }
        Some(theta)
    }
}

/// Matched occurrences must come in the same time order on both sides.
fn same_pred_order(b: &SymbolicHeap, c: &SymbolicHeap, theta: &Theta) -> bool {
    let key = |p: &PredInst, th: Option<&Theta>| -> (String, Vec<Var>) {
        let args = p.args.iter().map(|v| th.and_then(|t| t.get(v)).cloned().unwrap_or_else(|| v.clone())).collect();
        (p.name.to_string(), args)
    };
    let mut bp: Vec<&PredInst> = b.preds().collect();
    let mut cp: Vec<&PredInst> = c.preds().collect();
    bp.sort_by(|x, y| x.stamp.cmp(&y.stamp));
    cp.sort_by(|x, y| x.stamp.cmp(&y.stamp));
    bp.iter().map(|p| key(p, Some(theta))).eq(cp.iter().map(|p| key(p, None)))
}

fn match_pair(b: &Normalized, c: &Normalized, inv: InvOf) -> Option<Vec<(Var, Var)>> {
    if b.heap.spatial.len() != c.heap.spatial.len() {
        return None;
    }
    let mut m = Matcher { bud: b, comp: c, inv, budget: MATCH_BUDGET };
    let mut used = vec![false; c.heap.spatial.len()];
    let theta = m.search(0, &mut used, &HashMap::new(), &BTreeSet::new())?;
    let mut out: Vec<(Var, Var)> = theta.into_iter().collect();
    out.sort();
    Some(out)
}

type Linear = (BTreeMap<Var, i64>, i64);

fn linear(t: &Term) -> Option<Linear> {
    Some(match t {
        Term::Const(c) => (BTreeMap::new(), *c),
        Term::Var(v) => ([(v.clone(), 1)].into_iter().collect(), 0),
        Term::Mul(k, a) => {
            let (m, c) = linear(a)?;
            (m.into_iter().map(|(v, x)| (v, x * k)).collect(), c * k)
        }
        Term::Neg(a) => linear(&Term::Mul(-1, a.clone()))?,
        Term::Add(a, b) => {
            let (mut m, c) = linear(a)?;
            let (n, d) = linear(b)?;
            for (v, x) in n {
                *m.entry(v).or_insert(0) += x;
            }
            (m, c + d)
        }
        Term::Min(..) | Term::Max(..) => return None,
    })
}

fn term_of((m, c): &Linear) -> Term {
    let mut t = Term::Const(*c);
    for (v, k) in m.iter().filter(|(_, k)| **k != 0) {
        t = Term::add(t, Term::mul(*k, Term::var(v)));
    }
    t
}

/// A conjunct `u = t` (after moving terms around) for some loose `u` with
/// a unit coefficient.
fn definition(conj: &[Pure], loose: &BTreeSet<Var>) -> Option<(usize, Var, Term)> {
    for (i, p) in conj.iter().enumerate() {
        let Pure::Eq(a, b) = p else { continue };
        let (Some((mut m, c)), Some((n, d))) = (linear(a), linear(b)) else { continue };
        for (v, x) in n {
            *m.entry(v).or_insert(0) -= x;
        }
        let c = c - d;
        // sum m.v + c = 0
        for (u, k) in m.clone() {
            if !loose.contains(&u) || (k != 1 && k != -1) {
                continue;
            }
            let mut rest = m.clone();
            rest.remove(&u);
            // u = -(rest + c) / k
            let rest: BTreeMap<Var, i64> = rest.into_iter().map(|(v, x)| (v, -x * k)).collect();
            return Some((i, u, term_of(&(rest, -c * k))));
        }
    }
    None
}
