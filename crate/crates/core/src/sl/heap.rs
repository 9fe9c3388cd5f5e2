//! Spatial atoms, symbolic heaps and disjunctive formulas.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use super::pure::{Pure, Seq};
use super::var::{FreshGen, Var};

/// A predicate occurrence `P(args)` annotated with its call order `o` and
/// unfold count `u`.
///
/// `at` is the number of memory accesses that precede the call inside the
/// enclosing definition; `stamp` is the absolute position prefix assigned to
/// the occurrence once it lives in the execution tree (empty in definitions).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PredInst {
    pub name: Arc<str>,
    pub args: Vec<Var>,
    pub order: u32,
    pub unfold: u32,
    pub at: u32,
    pub stamp: Seq,
}

impl PredInst {
    pub fn new(name: &str, args: Vec<Var>, order: u32, unfold: u32) -> PredInst {
        PredInst { name: Arc::from(name), args, order, unfold, at: 0, stamp: Seq::default() }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum HeapAtom {
    PointsTo { root: Var, ty: Arc<str>, fields: Vec<(Arc<str>, Var)> },
    Pred(PredInst),
}

impl HeapAtom {
    pub fn points_to(root: &Var, ty: &str, fields: Vec<(&str, Var)>) -> HeapAtom {
        HeapAtom::PointsTo {
            root: root.clone(),
            ty: Arc::from(ty),
            fields: fields.into_iter().map(|(f, v)| (Arc::from(f), v)).collect(),
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        match self {
            HeapAtom::PointsTo { root, fields, .. } => {
                let mut out = vec![root.clone()];
                out.extend(fields.iter().map(|(_, v)| v.clone()));
                out
            }
            HeapAtom::Pred(p) => p.args.clone(),
        }
    }

    pub fn rename(&self, m: &HashMap<Var, Var>) -> HeapAtom {
        let r = |v: &Var| m.get(v).cloned().unwrap_or_else(|| v.clone());
        match self {
            HeapAtom::PointsTo { root, ty, fields } => HeapAtom::PointsTo {
                root: r(root),
                ty: ty.clone(),
                fields: fields.iter().map(|(f, v)| (f.clone(), r(v))).collect(),
            },
            HeapAtom::Pred(p) => HeapAtom::Pred(PredInst {
                args: p.args.iter().map(r).collect(),
                ..p.clone()
            }),
        }
    }

    /// Key used for canonical ordering: root var, then predicate name, then order.
    fn sort_key(&self) -> (String, String, u32) {
        match self {
            HeapAtom::PointsTo { root, .. } => (root.to_string(), String::new(), 0),
            HeapAtom::Pred(p) => (
                p.args.first().map(|v| v.to_string()).unwrap_or_default(),
                p.name.to_string(),
                p.order,
            ),
        }
    }
}

/// `exists ex_vars. spatial & pure [@NE] : label`
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct SymbolicHeap {
    pub ex_vars: Vec<Var>,
    pub spatial: Vec<HeapAtom>,
    /// Conjunction of pure formulas.
    pub pure: Vec<Pure>,
    /// The heap is required to be non-empty (leak annotation).
    pub nonempty: bool,
    /// When set, the leak annotation is also met if this variable is non-zero
    /// (a callee already failed).
    pub leak_guard: Option<Var>,
    /// Branch digits, 1 for then/enter, 2 for else/exit.
    pub label: Vec<u8>,
}

impl SymbolicHeap {
    pub fn emp() -> SymbolicHeap {
        SymbolicHeap::default()
    }

    pub fn with_pure(pure: Vec<Pure>) -> SymbolicHeap {
        SymbolicHeap { pure, ..Default::default() }
    }

    pub fn preds(&self) -> impl Iterator<Item = &PredInst> {
        self.spatial.iter().filter_map(|a| match a {
            HeapAtom::Pred(p) => Some(p),
            _ => None,
        })
    }

    pub fn is_base(&self) -> bool {
        self.preds().next().is_none()
    }

    pub fn pure_conj(&self) -> Pure {
        Pure::and(self.pure.clone())
    }

    /// All variables mentioned, bound or free.
    pub fn all_vars(&self) -> BTreeSet<Var> {
        let mut out: BTreeSet<Var> = self.ex_vars.iter().cloned().collect();
        out.extend(self.leak_guard.iter().cloned());
        for a in &self.spatial {
            out.extend(a.vars());
        }
        for p in &self.pure {
            p.collect_free(&mut out);
        }
        out
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out: BTreeSet<Var> = self.leak_guard.iter().cloned().collect();
        for a in &self.spatial {
            out.extend(a.vars());
        }
        for p in &self.pure {
            p.collect_free(&mut out);
        }
        for v in &self.ex_vars {
            out.remove(v);
        }
        out
    }

    /// Capture-avoiding simultaneous renaming of free variables.
    pub fn rename(&self, m: &HashMap<Var, Var>) -> SymbolicHeap {
        let mut m = m.clone();
        for v in &self.ex_vars {
            m.remove(v);
        }
        let range: BTreeSet<Var> = m.values().cloned().collect();
        let mut ex_vars = self.ex_vars.clone();
        if ex_vars.iter().any(|v| range.contains(v)) {
            let floor = self
                .all_vars()
                .iter()
                .chain(range.iter())
                .map(|v| v.version)
                .max()
                .unwrap_or(0);
            let gen = FreshGen::new(floor + 1);
            for v in ex_vars.iter_mut() {
                if range.contains(v) {
                    let nv = gen.fresh_like(v);
                    m.insert(v.clone(), nv.clone());
                    *v = nv;
                }
            }
        }
        SymbolicHeap {
            ex_vars,
            spatial: self.spatial.iter().map(|a| a.rename(&m)).collect(),
            pure: self.pure.iter().map(|p| p.rename(&m)).collect(),
            nonempty: self.nonempty,
            leak_guard: self.leak_guard.as_ref().map(|g| m.get(g).cloned().unwrap_or_else(|| g.clone())),
            label: self.label.clone(),
        }
    }

    /// Rename every existential to a fresh variable drawn from `gen`.
    pub fn freshen_existentials(&self, gen: &FreshGen) -> SymbolicHeap {
        let mut m = HashMap::new();
        for v in &self.ex_vars {
            m.insert(v.clone(), gen.fresh_like(v));
        }
        let body = SymbolicHeap { ex_vars: Vec::new(), ..self.clone() };
        let mut out = body.rename(&m);
        out.ex_vars = self.ex_vars.iter().map(|v| m[v].clone()).collect();
        out
    }

    /// Move a definition body to absolute time below `prefix`: local access
    /// `k` becomes `prefix.(2k+1)` and a call made after `j` accesses with
    /// local order `o` is stamped `prefix.(2j).o`, so sequence order is
    /// program order.
    pub fn place(&self, prefix: &Seq) -> SymbolicHeap {
        let at = |k: u32| {
            let mut v = prefix.0.clone();
            v.push(2 * k + 1);
            Seq(v)
        };
        let mut out = self.clone();
        out.pure = self.pure.iter().map(|p| p.map_seq(&|s: &Seq| at(s.0[0]))).collect();
        for a in out.spatial.iter_mut() {
            if let HeapAtom::Pred(p) = a {
                let mut v = prefix.0.clone();
                v.push(2 * p.at);
                v.push(p.order);
                p.stamp = Seq(v);
            }
        }
        out
    }

    /// Drop the quantifier prefix, keeping the body (skolemization in place).
    pub fn open(&self) -> SymbolicHeap {
        SymbolicHeap { ex_vars: Vec::new(), ..self.clone() }
    }

    /// Separating conjunction; existentials of `other` must already be fresh.
    pub fn star(&self, other: &SymbolicHeap) -> SymbolicHeap {
        let mut out = self.clone();
        out.ex_vars.extend(other.ex_vars.iter().cloned());
        out.spatial.extend(other.spatial.iter().cloned());
        out.pure.extend(other.pure.iter().cloned());
        out.nonempty |= other.nonempty;
        if out.leak_guard.is_none() {
            out.leak_guard = other.leak_guard.clone();
        }
        out
    }

    /// Sort spatial atoms and pure conjuncts, flatten conjunctions and drop
    /// duplicates and `true`.
    pub fn normalize_order(&mut self) {
        self.spatial.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| a.cmp(b)));
        let mut pure = Vec::new();
        for p in self.pure.drain(..) {
            pure.extend(p.conjuncts());
        }
        pure.sort();
        pure.dedup();
        if pure.iter().any(|p| *p == Pure::ff()) {
            pure = vec![Pure::ff()];
        }
        self.pure = pure;
        let fv = {
            let mut s = BTreeSet::new();
            for a in &self.spatial {
                s.extend(a.vars());
            }
            for p in &self.pure {
                p.collect_free(&mut s);
            }
            s.extend(self.leak_guard.iter().cloned());
            s
        };
        let mut seen = BTreeSet::new();
        self.ex_vars.retain(|v| fv.contains(v) && seen.insert(v.clone()));
    }

    /// Canonical representative modulo alpha-renaming of existentials and
    /// atom order. Existentials become `_0, _1, ...` in order of first
    /// occurrence after a name-blind sort.
    pub fn canonical(&self) -> SymbolicHeap {
        let mut h = self.clone();
        h.pure = h.pure.iter().flat_map(|p| p.conjuncts()).collect();
        let fv = {
            let mut b = h.clone();
            b.ex_vars.clear();
            b.free_vars()
        };
        h.ex_vars.retain(|v| fv.contains(v));
        let ex: BTreeSet<Var> = h.ex_vars.iter().cloned().collect();
        if ex.is_empty() {
            h.normalize_order();
        }
        if ex.is_empty() {
            h.ex_vars.clear();
            return h;
        }
        let blind: HashMap<Var, Var> = ex.iter().map(|v| (v.clone(), Var::named("_"))).collect();
        let mut sp: Vec<(HeapAtom, HeapAtom)> =
            h.spatial.iter().map(|a| (a.rename(&blind), a.clone())).collect();
        sp.sort_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()).then_with(|| a.0.cmp(&b.0)));
        let mut pu: Vec<(Pure, Pure)> = h.pure.iter().map(|p| (p.rename(&blind), p.clone())).collect();
        pu.sort_by(|a, b| a.0.cmp(&b.0));
        let mut order: Vec<Var> = Vec::new();
        let mut note = |v: &Var| {
            if ex.contains(v) && !order.contains(v) {
                order.push(v.clone());
            }
        };
        for (_, a) in &sp {
            for v in a.vars() {
                note(&v);
            }
        }
        for (_, p) in &pu {
            for v in ordered_vars(p) {
                note(&v);
            }
        }
        if let Some(g) = &h.leak_guard {
            note(g);
        }
        let m: HashMap<Var, Var> = order
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), Var::named(&format!("_{i}"))))
            .collect();
        let mut out = SymbolicHeap {
            ex_vars: Vec::new(),
            spatial: sp.iter().map(|(_, a)| a.rename(&m)).collect(),
            pure: pu.iter().map(|(_, p)| p.rename(&m)).collect(),
            nonempty: h.nonempty,
            leak_guard: h.leak_guard.as_ref().map(|g| m.get(g).cloned().unwrap_or_else(|| g.clone())),
            label: h.label.clone(),
        };
        out.normalize_order();
        out.ex_vars = (0..order.len()).map(|i| Var::named(&format!("_{i}"))).collect();
        out
    }
}

/// Variables of a pure formula in syntactic order (with repetitions removed).
pub fn ordered_vars(p: &Pure) -> Vec<Var> {
    fn term(t: &super::pure::Term, out: &mut Vec<Var>) {
        use super::pure::Term::*;
        match t {
            Const(_) => {}
            Var(v) => out.push(v.clone()),
            Mul(_, a) | Neg(a) => term(a, out),
            Add(a, b) | Min(a, b) | Max(a, b) => {
                term(a, out);
                term(b, out);
            }
        }
    }
    fn go(p: &Pure, out: &mut Vec<Var>) {
        match p {
            Pure::Bool(_) => {}
            Pure::BoolVar(v) | Pure::EqNull(v) | Pure::Dangl(v, _) | Pure::Del { base: v, .. } => {
                out.push(v.clone())
            }
            Pure::Eq(a, b) | Pure::Le(a, b) => {
                term(a, out);
                term(b, out);
            }
            Pure::Load { base, target, .. } => {
                out.push(base.clone());
                out.push(target.clone());
            }
            Pure::Store { base, source, .. } => {
                out.push(base.clone());
                out.push(source.clone());
            }
            Pure::Not(q) | Pure::Exists(_, q) => go(q, out),
            Pure::And(qs) | Pure::Or(qs) => qs.iter().for_each(|q| go(q, out)),
        }
    }
    let mut out = Vec::new();
    go(p, &mut out);
    let mut seen = BTreeSet::new();
    out.retain(|v| seen.insert(v.clone()));
    out
}

/// Structural equality up to renaming of existentials.
///
/// Compares canonical forms first and falls back to a permutation search
/// over the existentials when name-blind ordering is ambiguous.
pub fn alpha_eq(a: &SymbolicHeap, b: &SymbolicHeap) -> bool {
    let ca = a.canonical();
    let cb = b.canonical();
    if ca == cb {
        return true;
    }
    if ca.ex_vars.len() != cb.ex_vars.len() || ca.ex_vars.len() > 7 {
        return false;
    }
    let n = ca.ex_vars.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let target = {
        let mut t = cb.clone();
        t.ex_vars.clear();
        t.normalize_order();
        t
    };
    loop {
        let m: HashMap<Var, Var> =
            (0..n).map(|i| (ca.ex_vars[i].clone(), cb.ex_vars[perm[i]].clone())).collect();
        let mut r = SymbolicHeap { ex_vars: Vec::new(), ..ca.clone() }.rename(&m);
        r.normalize_order();
        if r.spatial == target.spatial && r.pure == target.pure && r.nonempty == target.nonempty && r.leak_guard == target.leak_guard && r.label == target.label {
            return true;
        }
        if !next_permutation(&mut perm) {
            return false;
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Disjunction of symbolic heaps.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Formula {
    pub disjuncts: Vec<SymbolicHeap>,
}

impl Formula {
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for d in &self.disjuncts {
            out.extend(d.free_vars());
        }
        out
    }

    pub fn rename(&self, m: &HashMap<Var, Var>) -> Formula {
        Formula { disjuncts: self.disjuncts.iter().map(|d| d.rename(m)).collect() }
    }
}
