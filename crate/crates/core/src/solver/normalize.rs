//! Normalization of symbolic heaps.
//!
//! Memory accesses (`LD`/`ST`/`DEL`) and dangling checks are replayed in
//! time order against the points-to cells. Loads bind their target to the
//! field variable, stores overwrite the field, deletes drop the cell. What
//! comes out is a heap whose pure part no longer mentions any of them.
//!
//! Base heaps (no predicate occurrences) are resolved completely, splitting
//! into several heaps when an access could hit more than one cell. Heaps
//! with pending predicates are over-approximated: anything that cannot be
//! decided yet is returned as residue and left out of the pure part.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::sl::{HeapAtom, PredInst, Pure, Seq, SymbolicHeap, Term, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormError {
    #[error("two memory accesses share sequence number {0}")]
    MalformedSequence(Seq),
    #[error("spatial pure atom below a connective: {0}")]
    Nested(String),
}

/// A normalized heap plus what could not be resolved (only for heaps with
/// pending predicates).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Normalized {
    pub heap: SymbolicHeap,
    pub residual: Vec<Pure>,
}

fn null_node() -> Var {
    Var::new("$null", 0)
}

#[derive(Clone, Debug)]
struct Uf {
    parent: HashMap<Var, Var>,
}

impl Uf {
    fn find(&mut self, v: &Var) -> Var {
        let p = match self.parent.get(v) {
            None => return v.clone(),
            Some(p) => p.clone(),
        };
        if &p == v {
            return p;
        }
        let r = self.find(&p);
        self.parent.insert(v.clone(), r.clone());
        r
    }

    fn union(&mut self, a: &Var, b: &Var) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // keep the null node as representative
            if rb == null_node() {
                self.parent.insert(ra, rb);
            } else {
                self.parent.insert(rb, ra);
            }
        }
    }
}

#[derive(Clone, Debug)]
struct CellSt {
    root: Var,
    ty: Arc<str>,
    fields: Vec<(Arc<str>, Var)>,
    dead_at: Option<Seq>,
    /// Earliest time at which an unresolved delete may have hit this cell.
    maybe_dead_from: Option<Seq>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum EvKind {
    Dangl(Var),
    NotDangl(Var),
    Access(Pure),
}

#[derive(Clone, Debug)]
struct State {
    uf: Uf,
    diseq: Vec<(Var, Var)>,
    cells: Vec<CellSt>,
    out: Vec<Pure>,
    residual: Vec<Pure>,
    extra_ex: Vec<Var>,
    facts: Vec<(Var, Seq, bool)>,
    unresolved_dels: Vec<(Var, Seq)>,
}

struct Ctx<'a> {
    over: bool,
    pending: Vec<&'a PredInst>,
    writes: &'a dyn Fn(&str) -> bool,
    fresh: std::cell::Cell<u32>,
}

impl Ctx<'_> {
    fn writer_before(&self, t: &Seq) -> Option<Seq> {
        self.pending
            .iter()
            .filter(|p| (self.writes)(&p.name) && &p.stamp < t)
            .map(|p| p.stamp.clone())
            .min()
    }

    fn writer_between(&self, a: &Seq, b: &Seq) -> bool {
        self.pending.iter().any(|p| (self.writes)(&p.name) && &p.stamp >= a && &p.stamp < b)
    }

    fn havoc(&self) -> Var {
        let n = self.fresh.get() + 1;
        self.fresh.set(n);
        Var::new("~h", n)
    }
}

impl State {
    fn same(&mut self, a: &Var, b: &Var) -> bool {
        self.uf.find(a) == self.uf.find(b)
    }

    fn distinct(&mut self, a: &Var, b: &Var) -> bool {
        let ra = self.uf.find(a);
        let rb = self.uf.find(b);
        if ra == rb {
            return false;
        }
        let ds = self.diseq.clone();
        ds.iter().any(|(x, y)| {
            let rx = self.uf.find(x);
            let ry = self.uf.find(y);
            (rx == ra && ry == rb) || (rx == rb && ry == ra)
        })
    }

    fn is_null(&mut self, v: &Var) -> bool {
        self.same(v, &null_node())
    }

    /// Merge two classes, emitting the equality. Returns false on conflict.
    fn merge(&mut self, a: &Var, b: &Var) -> bool {
        if self.same(a, b) {
            return true;
        }
        if self.distinct(a, b) {
            return false;
        }
        let ra = self.uf.find(a);
        let rb = self.uf.find(b);
        // two cell roots may never meet
        let root_a = self.cells.iter().any(|c| self.uf.clone().find(&c.root) == ra);
        let root_b = self.cells.iter().any(|c| self.uf.clone().find(&c.root) == rb);
        if (root_a && root_b) || (root_a && rb == null_node()) || (root_b && ra == null_node()) {
            return false;
        }
        self.uf.union(a, b);
        self.out.push(eq_lit(a, b));
        true
    }

    fn add_diseq(&mut self, a: &Var, b: &Var) -> bool {
        if self.same(a, b) {
            return false;
        }
        if !self.distinct(a, b) {
            self.diseq.push((a.clone(), b.clone()));
            self.out.push(Pure::not(eq_lit(a, b)));
        }
        true
    }

    fn cell_of(&mut self, v: &Var) -> Option<usize> {
        let r = self.uf.find(v);
        (0..self.cells.len()).find(|i| {
            let root = self.cells[*i].root.clone();
            self.uf.find(&root) == r
        })
    }
}

fn eq_lit(a: &Var, b: &Var) -> Pure {
    if *b == null_node() {
        Pure::EqNull(a.clone())
    } else if *a == null_node() {
        Pure::EqNull(b.clone())
    } else {
        Pure::eq_vars(a, b)
    }
}

fn base_of(p: &Pure) -> &Var {
    match p {
        Pure::Load { base, .. } | Pure::Store { base, .. } | Pure::Del { base, .. } => base,
        _ => unreachable!(),
    }
}

fn nested_spatial(p: &Pure) -> bool {
    match p {
        Pure::Not(q) => !matches!(**q, Pure::Dangl(..)) && q.contains_spatial_semantics(),
        Pure::And(_) | Pure::Or(_) | Pure::Exists(..) => p.contains_spatial_semantics(),
        _ => false,
    }
}

/// Normalize a heap whose predicates are all treated as possible writers.
pub fn normalize(h: &SymbolicHeap) -> Result<Vec<Normalized>, NormError> {
    normalize_with(h, &|_| true)
}

/// Normalize; `writes(p)` tells whether predicate `p` may store to or free
/// existing cells.
pub fn normalize_with(h: &SymbolicHeap, writes: &dyn Fn(&str) -> bool) -> Result<Vec<Normalized>, NormError> {
    let mut rest = Vec::new();
    let mut events: Vec<(Seq, u8, EvKind)> = Vec::new();
    let mut seen_seq = BTreeSet::new();
    for p in h.pure.iter().flat_map(|p| p.conjuncts()) {
        match &p {
            Pure::Dangl(v, t) => events.push((t.clone(), 0, EvKind::Dangl(v.clone()))),
            Pure::Not(q) if matches!(**q, Pure::Dangl(..)) => {
                if let Pure::Dangl(v, t) = &**q {
                    events.push((t.clone(), 0, EvKind::NotDangl(v.clone())));
                }
            }
            Pure::Load { seq, .. } | Pure::Store { seq, .. } | Pure::Del { seq, .. } => {
                if !seen_seq.insert(seq.clone()) {
                    return Err(NormError::MalformedSequence(seq.clone()));
                }
                events.push((seq.clone(), 1, EvKind::Access(p.clone())));
            }
            Pure::Bool(false) => return Ok(Vec::new()),
            other => {
                if nested_spatial(other) {
                    return Err(NormError::Nested(other.to_string()));
                }
                rest.push(other.clone());
            }
        }
    }
    events.sort();

    let pending: Vec<&PredInst> = h.preds().collect();
    let cx = Ctx { over: !pending.is_empty(), pending, writes, fresh: std::cell::Cell::new(0) };

    let mut st = State {
        uf: Uf { parent: HashMap::new() },
        diseq: Vec::new(),
        cells: Vec::new(),
        out: Vec::new(),
        residual: Vec::new(),
        extra_ex: Vec::new(),
        facts: Vec::new(),
        unresolved_dels: Vec::new(),
    };
    for p in &rest {
        match p {
            Pure::Eq(Term::Var(a), Term::Var(b)) => st.uf.union(a, b),
            Pure::EqNull(v) => st.uf.union(v, &null_node()),
            _ => {}
        }
    }
    for p in &rest {
        match p {
            Pure::Not(q) => match &**q {
                Pure::Eq(Term::Var(a), Term::Var(b)) => st.diseq.push((a.clone(), b.clone())),
                Pure::EqNull(v) => st.diseq.push((v.clone(), null_node())),
                _ => {}
            },
            _ => {}
        }
    }
    // the pure part alone may already clash
    let ds = st.diseq.clone();
    for (a, b) in &ds {
        if st.same(a, b) {
            return Ok(Vec::new());
        }
    }
    let mut others = Vec::new();
    for a in &h.spatial {
        match a {
            HeapAtom::PointsTo { root, ty, fields } => {
                if st.is_null(root) || st.cell_of(root).is_some() {
                    return Ok(Vec::new());
                }
                st.cells.push(CellSt {
                    root: root.clone(),
                    ty: ty.clone(),
                    fields: fields.clone(),
                    dead_at: None,
                    maybe_dead_from: None,
                });
            }
            other => others.push(other.clone()),
        }
    }

    let mut results = Vec::new();
    run(&cx, st, &events, 0, &mut |st: State| {
        results.push(finish(h, &cx, st, &rest, &others));
    });
    Ok(results.into_iter().flatten().collect())
}

fn run(cx: &Ctx, mut st: State, events: &[(Seq, u8, EvKind)], i: usize, k: &mut dyn FnMut(State)) {
    if i == events.len() {
        k(st);
        return;
    }
    let (t, _, ev) = &events[i];
    match ev {
        EvKind::Access(a) => {
            let b = base_of(a).clone();
            if st.is_null(&b) {
                return;
            }
            if let Some(ci) = st.cell_of(&b) {
                if let Some(next) = access(cx, st, ci, a, t) {
                    run(cx, next, events, i + 1, k);
                }
                return;
            }
            if cx.over {
                st.facts.push((b.clone(), t.clone(), true));
                match a {
                    Pure::Load { .. } => {}
                    Pure::Store { field, .. } => {
                        for ci in 0..st.cells.len() {
                            let root = st.cells[ci].root.clone();
                            if st.cells[ci].dead_at.is_none() && !st.distinct(&root, &b) {
                                let hv = cx.havoc();
                                st.extra_ex.push(hv.clone());
                                if let Some(slot) = st.cells[ci].fields.iter_mut().find(|(f, _)| f == field) {
                                    slot.1 = hv;
                                }
                            }
                        }
                    }
                    Pure::Del { .. } => {
                        for ci in 0..st.cells.len() {
                            let root = st.cells[ci].root.clone();
                            if st.cells[ci].dead_at.is_none() && !st.distinct(&root, &b) {
                                let c = &mut st.cells[ci];
                                if c.maybe_dead_from.is_none() {
                                    c.maybe_dead_from = Some(t.clone());
                                }
                            }
                        }
                        st.unresolved_dels.push((b.clone(), t.clone()));
                    }
                    _ => unreachable!(),
                }
                st.residual.push(a.clone());
                run(cx, st, events, i + 1, k);
                return;
            }
            // base heap: the access must hit one of the live cells
            let cands: Vec<usize> = (0..st.cells.len())
                .filter(|ci| st.cells[*ci].dead_at.is_none())
                .collect();
            for ci in cands {
                let mut s2 = st.clone();
                let root = s2.cells[ci].root.clone();
                if !s2.merge(&b, &root) {
                    continue;
                }
                if let Some(next) = access(cx, s2, ci, a, t) {
                    run(cx, next, events, i + 1, k);
                }
            }
        }
        EvKind::Dangl(v) => {
            if st.is_null(v) {
                return;
            }
            if let Some(ci) = st.cell_of(v) {
                let c = &st.cells[ci];
                if c.dead_at.as_ref().is_some_and(|d| d < t) {
                    run(cx, st, events, i + 1, k);
                } else if cx.over && possibly_dead(cx, c, t) {
                    st.residual.push(Pure::Dangl(v.clone(), t.clone()));
                    run(cx, st, events, i + 1, k);
                }
                return;
            }
            if !st.add_diseq(v, &null_node()) {
                return;
            }
            for ci in 0..st.cells.len() {
                let c = st.cells[ci].clone();
                let alive = c.dead_at.as_ref().map_or(true, |d| d >= t);
                if alive && !(cx.over && possibly_dead(cx, &c, t)) && !st.add_diseq(v, &c.root) {
                    return;
                }
            }
            if cx.over {
                st.facts.push((v.clone(), t.clone(), false));
                st.residual.push(Pure::Dangl(v.clone(), t.clone()));
            }
            run(cx, st, events, i + 1, k);
        }
        EvKind::NotDangl(v) => {
            if st.is_null(v) {
                run(cx, st, events, i + 1, k);
                return;
            }
            if let Some(ci) = st.cell_of(v) {
                let c = &st.cells[ci];
                let dead = c.dead_at.as_ref().is_some_and(|d| d < t);
                if !dead {
                    if cx.over && possibly_dead(cx, c, t) {
                        st.residual.push(Pure::not(Pure::Dangl(v.clone(), t.clone())));
                    }
                    run(cx, st, events, i + 1, k);
                }
                return;
            }
            if cx.over {
                if st.distinct(v, &null_node()) {
                    st.facts.push((v.clone(), t.clone(), true));
                }
                st.residual.push(Pure::not(Pure::Dangl(v.clone(), t.clone())));
                run(cx, st, events, i + 1, k);
                return;
            }
            // null, or one of the cells alive at t
            let mut s2 = st.clone();
            if s2.merge(v, &null_node()) {
                run(cx, s2, events, i + 1, k);
            }
            for ci in 0..st.cells.len() {
                if st.cells[ci].dead_at.as_ref().is_some_and(|d| d < t) {
                    continue;
                }
                let mut s2 = st.clone();
                let root = s2.cells[ci].root.clone();
                if s2.merge(v, &root) {
                    run(cx, s2, events, i + 1, k);
                }
            }
        }
    }
}

fn possibly_dead(cx: &Ctx, c: &CellSt, t: &Seq) -> bool {
    c.maybe_dead_from.as_ref().is_some_and(|m| m < t) || cx.writer_before(t).is_some()
}

/// Resolve access `a` at time `t` against cell `ci`.
fn access(cx: &Ctx, mut st: State, ci: usize, a: &Pure, t: &Seq) -> Option<State> {
    if st.cells[ci].dead_at.is_some() {
        return None;
    }
    match a {
        Pure::Load { field, target, .. } => {
            let fv = st.cells[ci].fields.iter().find(|(f, _)| f == field)?.1.clone();
            let uncertain = cx.over && (possibly_dead(cx, &st.cells[ci], t) || cx.writer_before(t).is_some());
            if uncertain {
                st.residual.push(a.clone());
            } else if !st.merge(target, &fv) {
                return None;
            }
        }
        Pure::Store { field, source, .. } => {
            let slot = st.cells[ci].fields.iter_mut().find(|(f, _)| f == field)?;
            slot.1 = source.clone();
        }
        Pure::Del { .. } => {
            st.cells[ci].dead_at = Some(t.clone());
        }
        _ => unreachable!(),
    }
    Some(st)
}

fn finish(h: &SymbolicHeap, cx: &Ctx, mut st: State, rest: &[Pure], others: &[HeapAtom]) -> Option<Normalized> {
    // allocation facts about variables without a known cell
    if cx.over {
        let facts = st.facts.clone();
        for (v1, t1, a1) in &facts {
            for (v2, t2, a2) in &facts {
                if !st.same(v1, v2) || st.cell_of(v1).is_some() {
                    continue;
                }
                if !a1 && *a2 && t1 <= t2 {
                    return None;
                }
                if *a1 && !a2 && t1 < t2 {
                    let dels = st.unresolved_dels.clone();
                    let freed = dels.iter().any(|(b, td)| td >= t1 && td < t2 && !st.distinct(b, v1))
                        || st.cells.iter().any(|c| c.dead_at.as_ref().is_some_and(|d| d >= t1 && d < t2))
                        || cx.writer_between(t1, t2);
                    if !freed {
                        return None;
                    }
                }
            }
        }
    }
    let base = !cx.over;
    let alive: Vec<&CellSt> = st.cells.iter().filter(|c| c.dead_at.is_none()).collect();
    let mut nonempty = h.nonempty;
    let mut leak_guard = h.leak_guard.clone();
    let mut pure: Vec<Pure> = rest.to_vec();
    if base && h.nonempty {
        if alive.is_empty() {
            // only a failed callee can still make this path an error
            match &h.leak_guard {
                Some(g) => pure.push(Pure::not(Pure::eq_const(g, 0))),
                None => return None,
            }
        }
        nonempty = false;
        leak_guard = None;
    }
    pure.append(&mut st.out);
    // deleted cells still occupied distinct, non-null addresses
    let all_roots: Vec<Var> = st.cells.iter().map(|c| c.root.clone()).collect();
    for c in st.cells.iter().filter(|c| c.dead_at.is_some()) {
        pure.push(Pure::ne_null(&c.root));
        for r in &all_roots {
            if *r != c.root {
                let (a, b) = if c.root < *r { (&c.root, r) } else { (r, &c.root) };
                pure.push(Pure::ne_vars(a, b));
            }
        }
    }
    let mut spatial: Vec<HeapAtom> = alive
        .iter()
        .map(|c| HeapAtom::PointsTo { root: c.root.clone(), ty: c.ty.clone(), fields: c.fields.clone() })
        .collect();
    spatial.extend(others.iter().cloned());
    let mut ex_vars = h.ex_vars.clone();
    ex_vars.extend(st.extra_ex.iter().cloned());
    let mut heap = SymbolicHeap { ex_vars, spatial, pure, nonempty, leak_guard, label: h.label.clone() };
    heap.normalize_order();
    let mut residual = st.residual;
    residual.sort();
    residual.dedup();
    Some(Normalized { heap, residual })
}

/// Names of predicates whose definitions (transitively) store or free.
pub fn writer_preds(defs: &BTreeMap<String, Vec<SymbolicHeap>>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    loop {
        let mut changed = false;
        for (name, branches) in defs {
            if out.contains(name) {
                continue;
            }
            let writes = branches.iter().any(|b| {
                b.pure.iter().flat_map(|p| p.conjuncts()).any(|p| matches!(p, Pure::Store { .. } | Pure::Del { .. }))
                    || b.preds().any(|p| out.contains(&*p.name))
            });
            if writes {
                out.insert(name.clone());
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}
