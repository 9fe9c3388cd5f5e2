//! Concrete semantics of base symbolic heaps, used as a test oracle.
//!
//! A state is a stack plus the heap *before* any simulated access runs.
//! Points-to atoms describe that initial heap exactly. The `LD`/`ST`/`DEL`
//! atoms are then replayed in sequence order against it: each one needs its
//! base to be allocated at that moment, a load must read the current field
//! value, a store overwrites it and a delete deallocates the cell.
//! `dangl(v,t)` holds when `v` is a location that is not allocated just
//! before access `t`, and `@NE` asks for a non-empty heap after the replay.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::heap::{HeapAtom, SymbolicHeap};
use super::pure::{Pure, Seq, Term};
use super::var::Var;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Val {
    Int(i64),
    Null,
    Loc(u32),
}

impl Val {
    /// Integer view used by arithmetic: null is 0, locations are positive.
    pub fn as_int(self) -> i64 {
        match self {
            Val::Int(n) => n,
            Val::Null => 0,
            Val::Loc(l) => l as i64,
        }
    }
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Int(n) => write!(f, "{n}"),
            Val::Null => write!(f, "null"),
            Val::Loc(l) => write!(f, "l{l}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Cell {
    pub ty: Arc<str>,
    /// `None` marks de-allocated content.
    pub fields: Vec<(Arc<str>, Option<Val>)>,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ConcreteState {
    pub stack: BTreeMap<Var, Val>,
    pub heap: BTreeMap<u32, Cell>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("formula contains predicate occurrence {0}")]
    NotBase(String),
    #[error("two memory accesses share sequence number {0}")]
    MalformedSequence(Seq),
    #[error("memory atom below a connective is not supported")]
    NestedMemoryAtom,
    #[error("search space exceeds ceiling of {0} nodes")]
    SizeGuard(u64),
}

/// Variables that must hold pointer values, closed under variable equalities.
pub fn pointer_vars(h: &SymbolicHeap) -> BTreeSet<Var> {
    let mut seeds = BTreeSet::new();
    let mut edges = Vec::new();
    for a in &h.spatial {
        if let HeapAtom::PointsTo { root, .. } = a {
            seeds.insert(root.clone());
        }
    }
    fn walk(p: &Pure, seeds: &mut BTreeSet<Var>, edges: &mut Vec<(Var, Var)>) {
        match p {
            Pure::EqNull(v) | Pure::Dangl(v, _) | Pure::Del { base: v, .. } => {
                seeds.insert(v.clone());
            }
            Pure::Load { base, .. } | Pure::Store { base, .. } => {
                seeds.insert(base.clone());
            }
            Pure::Eq(Term::Var(a), Term::Var(b)) => edges.push((a.clone(), b.clone())),
            Pure::Not(q) | Pure::Exists(_, q) => walk(q, seeds, edges),
            Pure::And(qs) | Pure::Or(qs) => qs.iter().for_each(|q| walk(q, seeds, edges)),
            _ => {}
        }
    }
    for p in &h.pure {
        walk(p, &mut seeds, &mut edges);
    }
    // load targets and store sources share the sort of the field they touch
    let mut field_sorts: HashMap<Arc<str>, Vec<Var>> = HashMap::new();
    for a in &h.spatial {
        if let HeapAtom::PointsTo { fields, .. } = a {
            for (f, v) in fields {
                field_sorts.entry(f.clone()).or_default().push(v.clone());
            }
        }
    }
    for p in h.pure.iter().flat_map(|p| p.conjuncts()) {
        match &p {
            Pure::Load { field, target: v, .. } | Pure::Store { field, source: v, .. } => {
                field_sorts.entry(field.clone()).or_default().push(v.clone());
            }
            _ => {}
        }
    }
    for vs in field_sorts.values() {
        for w in vs.windows(2) {
            edges.push((w[0].clone(), w[1].clone()));
        }
    }
    let mut out = seeds;
    loop {
        let mut changed = false;
        for (a, b) in &edges {
            if out.contains(a) && out.insert(b.clone()) {
                changed = true;
            }
            if out.contains(b) && out.insert(a.clone()) {
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

struct Timeline {
    /// heap snapshots: (seq of the access that produced it, heap after it)
    steps: Vec<(Seq, BTreeMap<u32, Cell>)>,
    initial: BTreeMap<u32, Cell>,
}

impl Timeline {
    fn before(&self, t: &Seq) -> &BTreeMap<u32, Cell> {
        let mut cur = &self.initial;
        for (s, h) in &self.steps {
            if s < t {
                cur = h;
            } else {
                break;
            }
        }
        cur
    }

    fn last(&self) -> &BTreeMap<u32, Cell> {
        self.steps.last().map(|s| &s.1).unwrap_or(&self.initial)
    }
}

type Env = HashMap<Var, Val>;

fn term_val(t: &Term, env: &Env) -> Option<i64> {
    Some(match t {
        Term::Const(c) => *c,
        Term::Var(v) => env.get(v)?.as_int(),
        Term::Mul(k, a) => k.checked_mul(term_val(a, env)?)?,
        Term::Add(a, b) => term_val(a, env)?.checked_add(term_val(b, env)?)?,
        Term::Neg(a) => term_val(a, env)?.checked_neg()?,
        Term::Min(a, b) => term_val(a, env)?.min(term_val(b, env)?),
        Term::Max(a, b) => term_val(a, env)?.max(term_val(b, env)?),
    })
}

fn is_null(env: &Env, v: &Var) -> bool {
    matches!(env.get(v), Some(Val::Null))
}

struct Ctx<'a> {
    tl: &'a Timeline,
    domain: Vec<Val>,
}

fn eval_pure(p: &Pure, env: &mut Env, cx: &Ctx) -> bool {
    match p {
        Pure::Bool(b) => *b,
        Pure::BoolVar(v) => env.get(v).map(|x| x.as_int() != 0).unwrap_or(false),
        Pure::Eq(a, b) => match (term_val(a, env), term_val(b, env)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        },
        Pure::Le(a, b) => match (term_val(a, env), term_val(b, env)) {
            (Some(x), Some(y)) => x <= y,
            _ => false,
        },
        Pure::EqNull(v) => is_null(env, v),
        Pure::Dangl(v, t) => match env.get(v) {
            Some(Val::Loc(l)) => !cx.tl.before(t).contains_key(l),
            _ => false,
        },
        // accesses were validated by the replay
        Pure::Load { .. } | Pure::Store { .. } | Pure::Del { .. } => true,
        Pure::Not(q) => !eval_pure(q, env, cx),
        Pure::And(qs) => qs.iter().all(|q| eval_pure(q, env, cx)),
        Pure::Or(qs) => qs.iter().any(|q| eval_pure(q, env, cx)),
        Pure::Exists(v, q) => {
            let saved = env.get(v).copied();
            let mut ok = false;
            for d in &cx.domain {
                env.insert(v.clone(), *d);
                if eval_pure(q, env, cx) {
                    ok = true;
                    break;
                }
            }
            match saved {
                Some(s) => env.insert(v.clone(), s),
                None => env.remove(v),
            };
            ok
        }
    }
}

fn has_exists(p: &Pure) -> bool {
    match p {
        Pure::Exists(..) => true,
        Pure::Not(q) => has_exists(q),
        Pure::And(qs) | Pure::Or(qs) => qs.iter().any(has_exists),
        _ => false,
    }
}

fn nested_memory(p: &Pure) -> bool {
    match p {
        Pure::Not(q) | Pure::Exists(_, q) => q.is_memory_atom() || nested_memory(q),
        Pure::And(qs) | Pure::Or(qs) => qs.iter().any(|q| q.is_memory_atom() || nested_memory(q)),
        _ => false,
    }
}

/// Build the initial heap from the points-to atoms; `None` if roots are not
/// distinct locations.
fn initial_heap(h: &SymbolicHeap, env: &Env) -> Option<BTreeMap<u32, Cell>> {
    let mut heap = BTreeMap::new();
    for a in &h.spatial {
        if let HeapAtom::PointsTo { root, ty, fields } = a {
            let l = match env.get(root)? {
                Val::Loc(l) => *l,
                _ => return None,
            };
            let cell = Cell {
                ty: ty.clone(),
                fields: fields.iter().map(|(f, v)| (f.clone(), env.get(v).copied())).collect(),
            };
            if heap.insert(l, cell).is_some() {
                return None;
            }
        }
    }
    Some(heap)
}

fn memory_atoms(h: &SymbolicHeap) -> Result<Vec<Pure>, EvalError> {
    let mut acc: Vec<Pure> = Vec::new();
    for p in &h.pure {
        if nested_memory(p) {
            return Err(EvalError::NestedMemoryAtom);
        }
        for c in p.conjuncts() {
            if c.is_memory_atom() {
                acc.push(c);
            }
        }
    }
    acc.sort_by(|a, b| a.seq().cmp(&b.seq()));
    for w in acc.windows(2) {
        if w[0].seq() == w[1].seq() {
            return Err(EvalError::MalformedSequence(w[0].seq().unwrap().clone()));
        }
    }
    Ok(acc)
}

fn replay(initial: BTreeMap<u32, Cell>, accesses: &[Pure], env: &Env) -> Option<Timeline> {
    let mut cur = initial.clone();
    let mut steps = Vec::new();
    for a in accesses {
        let base = match a {
            Pure::Load { base, .. } | Pure::Store { base, .. } | Pure::Del { base, .. } => base,
            _ => unreachable!(),
        };
        let l = match env.get(base) {
            Some(Val::Loc(l)) => *l,
            _ => return None,
        };
        let cell = cur.get_mut(&l)?;
        match a {
            Pure::Load { field, target, .. } => {
                let fv = cell.fields.iter().find(|(f, _)| f == field)?.1;
                if fv.is_none() || fv != env.get(target).copied() {
                    return None;
                }
            }
            Pure::Store { field, source, .. } => {
                let slot = cell.fields.iter_mut().find(|(f, _)| f == field)?;
                slot.1 = Some(*env.get(source)?);
            }
            Pure::Del { .. } => {
                cur.remove(&l);
            }
            _ => unreachable!(),
        }
        steps.push((a.seq().unwrap().clone(), cur.clone()));
    }
    Some(Timeline { steps, initial })
}

/// Check `d` against a fully assigned environment.
fn check(h: &SymbolicHeap, env: &mut Env, accesses: &[Pure], domain_bound: i64) -> bool {
    let Some(heap) = initial_heap(h, env) else { return false };
    let Some(tl) = replay(heap, accesses, env) else { return false };
    if h.nonempty && tl.last().is_empty() {
        let waived = h.leak_guard.as_ref().is_some_and(|g| env.get(g).is_some_and(|v| v.as_int() != 0));
        if !waived {
            return false;
        }
    }
    let mut domain: Vec<Val> = (-domain_bound..=domain_bound).map(Val::Int).collect();
    domain.push(Val::Null);
    let max_loc = tl.initial.keys().copied().chain(env.values().filter_map(|v| match v {
        Val::Loc(l) => Some(*l),
        _ => None,
    }));
    let top = max_loc.max().unwrap_or(0);
    domain.extend((1..=top + 1).map(Val::Loc));
    let cx = Ctx { tl: &tl, domain };
    h.pure.iter().all(|p| eval_pure(p, env, &cx))
}

fn domain_for(v: &Var, ptrs: &BTreeSet<Var>, bound: i64, locs: u32) -> Vec<Val> {
    if ptrs.contains(v) {
        let mut d = vec![Val::Null];
        d.extend((1..=locs).map(Val::Loc));
        d
    } else {
        (-bound..=bound).map(Val::Int).collect()
    }
}

/// Does `state` satisfy the base heap `d`?
///
/// Existentials and free variables missing from the stack are searched over
/// a small domain (`[-4,4]`, null, and the heap's locations plus one).
pub fn eval_base(state: &ConcreteState, d: &SymbolicHeap) -> Result<bool, EvalError> {
    eval_base_with(state, d, 4)
}

pub fn eval_base_with(state: &ConcreteState, d: &SymbolicHeap, bound: i64) -> Result<bool, EvalError> {
    if let Some(p) = d.preds().next() {
        return Err(EvalError::NotBase(p.name.to_string()));
    }
    let accesses = memory_atoms(d)?;
    let mut env: Env = state.stack.iter().map(|(k, v)| (k.clone(), *v)).collect();
    for v in &d.ex_vars {
        if !state.stack.contains_key(v) {
            env.remove(v);
        }
    }
    let missing: Vec<Var> = d.all_vars().into_iter().filter(|v| !env.contains_key(v)).collect();
    // the initial heap is fixed by the state
    let roots_ok = |env: &Env| -> bool {
        match initial_heap(d, env) {
            Some(h) => h == state.heap,
            None => false,
        }
    };
    let ptrs = pointer_vars(d);
    let locs = state.heap.keys().copied().max().unwrap_or(0) + 1;
    // values already present in the state are always candidates
    let mut seen: Vec<Val> = state.stack.values().copied().collect();
    for c in state.heap.values() {
        seen.extend(c.fields.iter().filter_map(|(_, v)| *v));
    }
    seen.sort();
    seen.dedup();
    let mut budget: u64 = 5_000_000;
    #[allow(clippy::too_many_arguments)]
    fn go(
        i: usize,
        missing: &[Var],
        env: &mut Env,
        d: &SymbolicHeap,
        acc: &[Pure],
        ptrs: &BTreeSet<Var>,
        bound: i64,
        locs: u32,
        seen: &[Val],
        roots_ok: &dyn Fn(&Env) -> bool,
        budget: &mut u64,
    ) -> Result<bool, EvalError> {
        if *budget == 0 {
            return Err(EvalError::SizeGuard(5_000_000));
        }
        *budget -= 1;
        if i == missing.len() {
            return Ok(roots_ok(env) && check(d, env, acc, bound));
        }
        // any kind of value: the stack fixes sorts only loosely
        let mut dom = domain_for(&missing[i], ptrs, bound, locs);
        if ptrs.contains(&missing[i]) {
            dom.extend((-bound..=bound).map(Val::Int));
        } else {
            dom.push(Val::Null);
            dom.extend((1..=locs).map(Val::Loc));
        }
        for x in seen {
            if !dom.contains(x) {
                dom.insert(0, *x);
            }
        }
        for val in dom {
            env.insert(missing[i].clone(), val);
            if go(i + 1, missing, env, d, acc, ptrs, bound, locs, seen, roots_ok, budget)? {
                return Ok(true);
            }
        }
        env.remove(&missing[i]);
        Ok(false)
    }
    go(0, &missing, &mut env, d, &accesses, &ptrs, bound, locs, &seen, &roots_ok, &mut budget)
}

/// Default ceiling on search nodes for [`enumerate_models`].
pub const ENUM_CEILING: u64 = 20_000_000;

/// All states (stack over every variable of `d`, including existentials)
/// satisfying `d`, with integers in `[-bound, bound]` and locations
/// `l1..l{heap_size}`.
pub fn enumerate_models(d: &SymbolicHeap, bound: i64, heap_size: u32) -> Result<Vec<ConcreteState>, EvalError> {
    enumerate_models_limited(d, bound, heap_size, usize::MAX)
}

/// Like [`enumerate_models`] but stops after `limit` models.
pub fn enumerate_models_limited(
    d: &SymbolicHeap,
    bound: i64,
    heap_size: u32,
    limit: usize,
) -> Result<Vec<ConcreteState>, EvalError> {
    if let Some(p) = d.preds().next() {
        return Err(EvalError::NotBase(p.name.to_string()));
    }
    let accesses = memory_atoms(d)?;
    let ptrs = pointer_vars(d);
    // order: pointer roots first, then by first syntactic occurrence
    let mut vars: Vec<Var> = Vec::new();
    for a in &d.spatial {
        for v in a.vars() {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
    }
    for p in &d.pure {
        for v in super::heap::ordered_vars(p) {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
    }
    // simple top-level literals usable for early pruning
    let prunable: Vec<(Pure, BTreeSet<Var>)> = d
        .pure
        .iter()
        .flat_map(|p| p.conjuncts())
        .filter(|p| !p.contains_spatial_semantics() && !has_exists(p))
        .map(|p| {
            let fv = p.free_vars();
            (p, fv)
        })
        .collect();
    let roots: Vec<Var> = d
        .spatial
        .iter()
        .filter_map(|a| match a {
            HeapAtom::PointsTo { root, .. } => Some(root.clone()),
            _ => None,
        })
        .collect();
    let empty_tl = Timeline { steps: Vec::new(), initial: BTreeMap::new() };
    let mut out = Vec::new();
    let mut budget = ENUM_CEILING;
    let mut env: Env = HashMap::new();

    #[allow(clippy::too_many_arguments)]
    fn go(
        i: usize,
        vars: &[Var],
        env: &mut Env,
        d: &SymbolicHeap,
        acc: &[Pure],
        ptrs: &BTreeSet<Var>,
        bound: i64,
        heap_size: u32,
        prunable: &[(Pure, BTreeSet<Var>)],
        roots: &[Var],
        empty_tl: &Timeline,
        out: &mut Vec<ConcreteState>,
        limit: usize,
        budget: &mut u64,
    ) -> Result<(), EvalError> {
        if out.len() >= limit {
            return Ok(());
        }
        if *budget == 0 {
            return Err(EvalError::SizeGuard(ENUM_CEILING));
        }
        *budget -= 1;
        if i == vars.len() {
            let mut e = env.clone();
            if check(d, &mut e, acc, bound) {
                let heap = initial_heap(d, env).unwrap_or_default();
                out.push(ConcreteState { stack: env.iter().map(|(k, v)| (k.clone(), *v)).collect(), heap });
            }
            return Ok(());
        }
        let v = &vars[i];
        for val in domain_for(v, ptrs, bound, heap_size) {
            env.insert(v.clone(), val);
            // roots must be distinct locations
            if roots.contains(v) {
                if !matches!(val, Val::Loc(_)) {
                    continue;
                }
                if roots.iter().any(|r| r != v && env.get(r) == Some(&val)) {
                    continue;
                }
            }
            let cx = Ctx { tl: empty_tl, domain: Vec::new() };
            let ok = prunable.iter().all(|(p, fv)| {
                !fv.contains(v) || !fv.iter().all(|w| env.contains_key(w)) || eval_pure(p, env, &cx)
            });
            if ok {
                go(i + 1, vars, env, d, acc, ptrs, bound, heap_size, prunable, roots, empty_tl, out, limit, budget)?;
            }
        }
        env.remove(v);
        Ok(())
    }
    go(
        0, &vars, &mut env, d, &accesses, &ptrs, bound, heap_size, &prunable, &roots, &empty_tl, &mut out, limit,
        &mut budget,
    )?;
    Ok(out)
}
