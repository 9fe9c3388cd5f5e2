//! Generators and oracle checks shared by the property tests and the
//! acceptance run.

#![allow(dead_code)]

use std::collections::BTreeMap;

use hcv_core::encoder::{memory_disjuncts, MemCmd};
use hcv_core::sl::*;
use hcv_core::solver::lia::{self, Constraint, Kind};
use hcv_core::solver::{self, check_base, Model, SatResult};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// random base formulas

pub const PTRS: [&str; 4] = ["x", "y", "z", "w"];
pub const INTS: [&str; 4] = ["a", "b", "c", "t"];

#[derive(Clone, Debug)]
pub enum Lit {
    PtrEq(usize, usize, bool),
    PtrNull(usize, bool),
    IntLe(usize, i64),
    IntEq(usize, i64),
    IntNe(usize, usize),
    LdNext(usize, usize),
    LdVal(usize, usize),
    StVal(usize, usize),
    StNext(usize, usize),
    Del(usize),
    Dangl(usize, u32, bool),
}

pub fn arb_lit() -> impl Strategy<Value = Lit> {
    prop_oneof![
        (0..4usize, 0..4usize, any::<bool>()).prop_map(|(a, b, e)| Lit::PtrEq(a, b, e)),
        (0..4usize, any::<bool>()).prop_map(|(a, e)| Lit::PtrNull(a, e)),
        (0..4usize, -2i64..3).prop_map(|(a, k)| Lit::IntLe(a, k)),
        (0..4usize, -2i64..3).prop_map(|(a, k)| Lit::IntEq(a, k)),
        (0..4usize, 0..4usize).prop_map(|(a, b)| Lit::IntNe(a, b)),
        (0..4usize, 0..4usize).prop_map(|(a, b)| Lit::LdNext(a, b)),
        (0..4usize, 0..4usize).prop_map(|(a, b)| Lit::LdVal(a, b)),
        (0..4usize, 0..4usize).prop_map(|(a, b)| Lit::StVal(a, b)),
        (0..4usize, 0..4usize).prop_map(|(a, b)| Lit::StNext(a, b)),
        (0..4usize).prop_map(Lit::Del),
        (0..4usize, 0..8u32, any::<bool>()).prop_map(|(a, t, pos)| Lit::Dangl(a, t, pos)),
    ]
}

pub fn arb_base() -> impl Strategy<Value = String> {
    (
        prop::collection::vec((0..4usize, 0..4usize, 0..4usize), 0..3),
        prop::collection::vec(arb_lit(), 0..6),
        any::<bool>(),
    )
        .prop_map(|(cells, lits, ne)| {
            let spatial: Vec<String> = cells
                .iter()
                .map(|(r, v, n)| format!("{}->node{{val:{},next:{}}}", PTRS[*r], INTS[*v], PTRS[*n]))
                .collect();
            let mut seq = 0;
            let mut pure = Vec::new();
            for l in lits {
                let mut next = || {
                    seq += 1;
                    seq - 1
                };
                pure.push(match l {
                    Lit::PtrEq(a, b, e) => format!("{} {} {}", PTRS[a], if e { "=" } else { "!=" }, PTRS[b]),
                    Lit::PtrNull(a, e) => format!("{} {} null", PTRS[a], if e { "=" } else { "!=" }),
                    Lit::IntLe(a, k) => format!("{} <= {k}", INTS[a]),
                    Lit::IntEq(a, k) => format!("{} = {k}", INTS[a]),
                    Lit::IntNe(a, b) => format!("{} != {}", INTS[a], INTS[b]),
                    Lit::LdNext(a, b) => format!("LD({},next,{},{})", PTRS[a], PTRS[b], next()),
                    Lit::LdVal(a, b) => format!("LD({},val,{},{})", PTRS[a], INTS[b], next()),
                    Lit::StVal(a, b) => format!("ST({},val,{},{})", PTRS[a], INTS[b], next()),
                    Lit::StNext(a, b) => format!("ST({},next,{},{})", PTRS[a], PTRS[b], next()),
                    Lit::Del(a) => format!("DEL({},{})", PTRS[a], next()),
                    Lit::Dangl(a, t, pos) => {
                        format!("{}dangl({},{t})", if pos { "" } else { "!" }, PTRS[a])
                    }
                });
            }
            let body = if spatial.is_empty() { "emp".to_string() } else { spatial.join(" * ") };
            let mut s = body;
            for q in pure {
                s.push_str(" & ");
                s.push_str(&q);
            }
            if ne {
                s.push_str(" @NE");
            }
            s
        })
}

/// Read an integer model back as a concrete state.
pub fn state_of(d: &SymbolicHeap, m: &Model) -> ConcreteState {
    let mut locs: BTreeMap<i64, u32> = BTreeMap::new();
    let mut stack = BTreeMap::new();
    for v in d.all_vars() {
        let x = m.get(&v).copied();
        let val = if PTRS.contains(&&*v.name) {
            match x.unwrap_or(0) {
                0 => Val::Null,
                n => {
                    let k = locs.len() as u32 + 1;
                    Val::Loc(*locs.entry(n).or_insert(k))
                }
            }
        } else {
            Val::Int(x.unwrap_or(0))
        };
        stack.insert(v, val);
    }
    let mut heap = BTreeMap::new();
    for a in &d.spatial {
        if let HeapAtom::PointsTo { root, ty, fields } = a {
            if let Val::Loc(l) = stack[root] {
                heap.insert(
                    l,
                    Cell { ty: ty.clone(), fields: fields.iter().map(|(f, v)| (f.clone(), Some(stack[v]))).collect() },
                );
            }
        }
    }
    ConcreteState { stack, heap }
}

pub fn cube(n: usize) -> impl Strategy<Value = Vec<Constraint>> {
    let c = (prop::collection::vec(-3i128..4, n), -6i128..7, 0..3u8).prop_map(|(coef, c, k)| Constraint {
        coef,
        c,
        kind: [Kind::Eq, Kind::Geq, Kind::Neq][k as usize],
    });
    prop::collection::vec(c, 0..5)
}

// ---------------------------------------------------------------------------
// memory commands

#[derive(Clone, Debug)]
pub enum Init {
    Cell,
    Null,
    Dangling,
    Freed,
    Free,
}

pub fn pre_state(init: &[Init], aliases: &[(usize, usize)]) -> SymbolicHeap {
    let vs = ["x", "y", "z"];
    let mut h = SymbolicHeap::emp();
    let mut k = 0;
    for (i, s) in init.iter().enumerate() {
        let v = Var::named(vs[i]);
        match s {
            Init::Cell => h.spatial.push(HeapAtom::points_to(&v, "c", vec![("f", Var::named(&format!("v{i}")))])),
            Init::Null => h.pure.push(Pure::EqNull(v)),
            Init::Dangling => h.pure.push(Pure::Dangl(v, Seq::local(0))),
            Init::Freed => {
                h.spatial.push(HeapAtom::points_to(&v, "c", vec![("f", Var::named(&format!("v{i}")))]));
                h.pure.push(Pure::Del { base: v, seq: Seq::local(k) });
                k += 1;
            }
            Init::Free => {}
        }
    }
    for (a, b) in aliases {
        if a != b {
            h.pure.push(Pure::eq_vars(&Var::named(vs[*a]), &Var::named(vs[*b])));
        }
    }
    h
}

pub fn with(pre: &SymbolicHeap, extra: &[Pure], ex: &[Var]) -> SymbolicHeap {
    let mut h = pre.clone();
    h.pure.extend(extra.iter().cloned());
    h.ex_vars.extend(ex.iter().cloned());
    h
}

pub fn symbolic_sat(h: &SymbolicHeap) -> bool {
    check_base(h).unwrap().is_some()
}

pub fn arb_init() -> impl Strategy<Value = Init> {
    prop_oneof![Just(Init::Cell), Just(Init::Null), Just(Init::Dangling), Just(Init::Freed), Just(Init::Free)]
}


// ---------------------------------------------------------------------------
// oracle checks

macro_rules! ensure {
    ($c:expr, $($fmt:tt)*) => {
        if !$c {
            return Err(format!($($fmt)*));
        }
    };
}

/// The decision pipeline agrees with model enumeration on one base formula:
/// a returned model evaluates to true, and "unsat" means no small model.
pub fn base_decision_matches_enumeration(s: &str) -> Result<(), String> {
    let d = parse_heap(s).map_err(|e| e.to_string())?;
    match check_base(&d).map_err(|e| e.to_string())? {
        Some(m) => {
            let st = state_of(&d, &m);
            ensure!(eval_base_with(&st, &d, 6).map_err(|e| e.to_string())?, "{s}: model {m:?} does not evaluate to true");
        }
        None => {
            let ms = enumerate_models_limited(&d, 2, 4, 1).map_err(|e| e.to_string())?;
            ensure!(ms.is_empty(), "{s}: unsat but has model {:?}", ms[0]);
        }
    }
    Ok(())
}

/// Box constraints keeping every variable in [-4, 4].
pub fn boxed(n: usize, cs: &[Constraint]) -> Vec<Constraint> {
    let mut all = cs.to_vec();
    for i in 0..n {
        let mut up = vec![0; n];
        up[i] = -1;
        all.push(Constraint { coef: up, c: 4, kind: Kind::Geq });
        let mut lo = vec![0; n];
        lo[i] = 1;
        all.push(Constraint { coef: lo, c: 4, kind: Kind::Geq });
    }
    all
}

fn brute(n: usize, all: &[Constraint]) -> bool {
    let mut x = vec![-4i128; n];
    loop {
        if all.iter().all(|c| c.holds(&x)) {
            return true;
        }
        let Some(i) = x.iter().position(|v| *v < 4) else { return false };
        x[i] += 1;
        x[..i].iter_mut().for_each(|v| *v = -4);
    }
}

/// The integer core agrees with brute force over the box.
pub fn lia_agrees_with_brute_force(cs: &[Constraint]) -> Result<(), String> {
    let all = boxed(3, cs);
    let want = brute(3, &all);
    let r = lia::solve(3, &all).map_err(|e| e.to_string())?;
    ensure!(r.is_some() == want, "{cs:?}: solver {:?}, brute force {want}", r);
    if let Some(m) = r {
        ensure!(all.iter().all(|c| c.holds(&m)), "{cs:?}: model {m:?} violates a constraint");
    }
    Ok(())
}

const LIA_VARS: [&str; 3] = ["a", "b", "c"];

fn to_pure(c: &Constraint) -> Pure {
    let mut t = Term::Const(c.c as i64);
    for (i, k) in c.coef.iter().enumerate() {
        if *k != 0 {
            t = Term::add(t, Term::mul(*k as i64, Term::var(&Var::named(LIA_VARS[i]))));
        }
    }
    match c.kind {
        Kind::Eq => Pure::Eq(t, Term::Const(0)),
        Kind::Geq => Pure::Le(Term::Const(0), t),
        Kind::Neq => Pure::not(Pure::Eq(t, Term::Const(0))),
    }
}

/// Constraints that all hold at `point` (each constant shifted so that it
/// does), then a few unconstrained ones.
pub fn constructed(point: [i128; 3], shaped: &[Constraint], extra: &[Constraint]) -> Vec<Constraint> {
    let mut out = Vec::new();
    for c in shaped {
        let lhs: i128 = c.coef.iter().zip(point).map(|(k, x)| k * x).sum();
        let c2 = match c.kind {
            Kind::Eq => -lhs,
            // slack from the random constant
            Kind::Geq => -lhs + c.c.abs(),
            Kind::Neq if lhs + c.c == 0 => c.c + 1,
            Kind::Neq => c.c,
        };
        out.push(Constraint { coef: c.coef.clone(), c: c2, kind: c.kind });
    }
    out.extend(extra.iter().cloned());
    out
}

/// The full decision entry point agrees with brute force, with a model
/// that satisfies the formula or an unsatisfiable core.
pub fn decide_base_agrees_with_brute_force(cs: &[Constraint]) -> Result<(), String> {
    let all = boxed(3, cs);
    let want = brute(3, &all);
    let p = Pure::and(all.iter().map(to_pure).collect());
    match solver::decide_base(&p).map_err(|e| e.to_string())? {
        SatResult::Sat(m) => {
            ensure!(want, "{p}: solver says sat, brute force finds nothing");
            let x: Vec<i128> = LIA_VARS.iter().map(|v| m.get(&Var::named(v)).copied().unwrap_or(0) as i128).collect();
            ensure!(all.iter().all(|c| c.holds(&x)), "{p}: model {m:?} violates a constraint");
        }
        SatResult::Unsat(core) => {
            ensure!(!want, "{p}: solver says unsat, brute force finds a solution");
            let parts = p.conjuncts();
            let sub = Pure::and(core.iter().map(|i| parts[*i].clone()).collect());
            ensure!(!solver::is_sat(&sub).map_err(|e| e.to_string())?, "{p}: core {sub} is satisfiable");
        }
    }
    Ok(())
}

/// Random memory-command scenario: initial pointer states, aliasing,
/// command and base.
pub fn arb_memory_case() -> impl Strategy<Value = (Vec<Init>, Vec<(usize, usize)>, usize, usize)> {
    (prop::collection::vec(arb_init(), 1..4), prop::collection::vec((0usize..3, 0usize..3), 0..2), 0usize..3, 0usize..3)
}

/// The three outcomes of a memory command are pairwise unsatisfiable, and
/// every concrete state of the pre-heap satisfies exactly the outcome its
/// pointer state calls for.
pub fn memory_outcomes_partition_states(
    init: &[Init],
    aliases: &[(usize, usize)],
    which: usize,
    base: usize,
) -> Result<(), String> {
    let n = init.len();
    let aliases: Vec<(usize, usize)> = aliases.iter().copied().filter(|(a, b)| *a < n && *b < n).collect();
    let pre = pre_state(init, &aliases);
    let y = Var::named(["x", "y", "z"][base % n]);
    let t = Var::named("t");
    let cmd = match which {
        0 => MemCmd::Load { base: y.clone(), field: "f".into(), target: t.clone() },
        1 => MemCmd::Store { base: y.clone(), field: "f".into(), source: Var::named("s") },
        _ => MemCmd::Free { base: y.clone() },
    };
    let ds = memory_disjuncts(&cmd, 3);
    for i in 0..3 {
        for j in i + 1..3 {
            let both: Vec<Pure> = ds[i].iter().chain(&ds[j]).cloned().collect();
            ensure!(!symbolic_sat(&with(&pre, &both, &[])), "{i} and {j} overlap on {pre}");
        }
    }
    let models = enumerate_models_limited(&pre, 1, 3, 200).map_err(|e| e.to_string())?;
    ensure!(!models.is_empty() || !symbolic_sat(&pre), "{pre}: satisfiable but no concrete state");
    let live = |m: &ConcreteState, l: u32| {
        // cells deleted before the command are no longer allocated
        let gone = pre.pure.iter().any(|q| match q {
            Pure::Del { base, .. } => m.stack.get(base) == Some(&Val::Loc(l)),
            _ => false,
        });
        m.heap.contains_key(&l) && !gone
    };
    // a base the pre-state says nothing about may be anything
    let mut states = Vec::new();
    for m in &models {
        match m.stack.get(&y) {
            // untyped equalities also admit integer models; not pointer states
            Some(Val::Int(_)) => continue,
            Some(_) => {
                states.push(m.clone());
                continue;
            }
            None => {}
        }
        let fresh = m.heap.keys().max().copied().unwrap_or(0) + 1;
        let mut vals = vec![Val::Null, Val::Loc(fresh)];
        vals.extend(m.heap.keys().map(|l| Val::Loc(*l)));
        for v in vals {
            let mut m2 = m.clone();
            m2.stack.insert(y.clone(), v);
            states.push(m2);
        }
    }
    for m in &states {
        let want = match m.stack.get(&y).copied() {
            Some(Val::Null) => 1,
            Some(Val::Loc(l)) if live(m, l) => 2,
            _ => 0,
        };
        let mut state = m.clone();
        state.stack.insert(Var::eps(), Val::Int(1));
        state.stack.insert(Var::named("s"), Val::Int(0));
        for (i, d) in ds.iter().enumerate() {
            let got = eval_base_with(&state, &with(&pre, d, &[t.clone()]), 1).map_err(|e| e.to_string())?;
            ensure!(got == (i == want), "state {m:?}, disjunct {i}, pre {pre}");
        }
    }
    Ok(())
}
