//! Satisfiability of quantifier-free pure formulas over the integers.
//!
//! Pointers are integers here: `null` is 0 and every other value stands for
//! a location. Because pointer variables only occur in (dis)equalities, any
//! integer model can be read back as a pointer model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Mutex, OnceLock};

use thiserror::Error;

use super::lia::{self, Constraint, Kind, LiaError};
use crate::sl::{Pure, Term, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecideError {
    #[error("formula still contains spatial atom {0}")]
    NotPure(String),
    #[error("existential below negation is not supported")]
    NegatedExists,
    #[error("disjunctive normal form exceeds {0} clauses")]
    DnfCap(usize),
    #[error("non-linear term {0}")]
    NonLinear(String),
    #[error("solver capacity: {0}")]
    Capacity(#[from] LiaError),
    #[error("external solver: {0}")]
    External(String),
}

pub type Model = BTreeMap<Var, i64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Model),
    /// Indices into the top-level conjuncts of the input forming an
    /// unsatisfiable subset (empty when no core was requested).
    Unsat(Vec<usize>),
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

/// Default clause cap for the DNF expansion.
pub const DNF_CAP: usize = 4096;

/// Linear expression: coefficients plus constant.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Lin {
    pub coef: BTreeMap<Var, i128>,
    pub c: i128,
}

impl Lin {
    fn konst(c: i128) -> Lin {
        Lin { coef: BTreeMap::new(), c }
    }

    fn var(v: &Var) -> Lin {
        let mut coef = BTreeMap::new();
        coef.insert(v.clone(), 1);
        Lin { coef, c: 0 }
    }

    fn scale(&self, k: i128) -> Lin {
        if k == 0 {
            return Lin::konst(0);
        }
        Lin { coef: self.coef.iter().map(|(v, a)| (v.clone(), a * k)).collect(), c: self.c * k }
    }

    fn plus(&self, o: &Lin) -> Lin {
        let mut coef = self.coef.clone();
        for (v, a) in &o.coef {
            let e = coef.entry(v.clone()).or_insert(0);
            *e += a;
            if *e == 0 {
                coef.remove(v);
            }
        }
        Lin { coef, c: self.c + o.c }
    }

    fn minus(&self, o: &Lin) -> Lin {
        self.plus(&o.scale(-1))
    }
}

/// Literal of a cube: `lin (kind) 0`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Lit {
    pub lin: Lin,
    pub kind: LitKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LitKind {
    Eq,
    Geq,
    Neq,
}

// A term linearises to a set of guarded cases because of min/max.
type Cases = Vec<(Vec<Lit>, Lin)>;

fn lin_term(t: &Term) -> Cases {
    match t {
        Term::Const(c) => vec![(Vec::new(), Lin::konst(*c as i128))],
        Term::Var(v) => vec![(Vec::new(), Lin::var(v))],
        Term::Mul(k, a) => lin_term(a).into_iter().map(|(g, l)| (g, l.scale(*k as i128))).collect(),
        Term::Neg(a) => lin_term(a).into_iter().map(|(g, l)| (g, l.scale(-1))).collect(),
        Term::Add(a, b) => {
            let mut out = Vec::new();
            for (ga, la) in lin_term(a) {
                for (gb, lb) in lin_term(b) {
                    let mut g = ga.clone();
                    g.extend(gb);
                    out.push((g, la.plus(&lb)));
                }
            }
            out
        }
        Term::Min(a, b) | Term::Max(a, b) => {
            let is_min = matches!(t, Term::Min(..));
            let mut out = Vec::new();
            for (ga, la) in lin_term(a) {
                for (gb, lb) in lin_term(b) {
                    // a <= b  <=>  b - a >= 0
                    let a_le_b = Lit { lin: lb.minus(&la), kind: LitKind::Geq };
                    // b < a  <=>  a - b - 1 >= 0
                    let b_lt_a = Lit { lin: la.minus(&lb).plus(&Lin::konst(-1)), kind: LitKind::Geq };
                    let mut g1 = ga.clone();
                    g1.extend(gb.iter().cloned());
                    let mut g2 = g1.clone();
                    g1.push(a_le_b);
                    g2.push(b_lt_a);
                    if is_min {
                        out.push((g1, la.clone()));
                        out.push((g2, lb.clone()));
                    } else {
                        out.push((g1, lb.clone()));
                        out.push((g2, la.clone()));
                    }
                }
            }
            out
        }
    }
}

/// Formula in DNF: list of cubes.
type Dnf = Vec<Vec<Lit>>;

fn cmp_atom(a: &Term, b: &Term, kind: LitKind, swap_geq: bool) -> Dnf {
    // produce a - b (kind) 0, or for Le: b - a >= 0
    let mut out = Vec::new();
    for (ga, la) in lin_term(a) {
        for (gb, lb) in lin_term(b) {
            let lin = if swap_geq { lb.minus(&la) } else { la.minus(&lb) };
            let mut cube = ga.clone();
            cube.extend(gb.iter().cloned());
            cube.push(Lit { lin, kind });
            out.push(cube);
        }
    }
    out
}

fn product(a: Dnf, b: Dnf, cap: usize) -> Result<Dnf, DecideError> {
    if a.len().saturating_mul(b.len()) > cap {
        return Err(DecideError::DnfCap(cap));
    }
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in &a {
        for y in &b {
            let mut c = x.clone();
            c.extend(y.iter().cloned());
            out.push(c);
        }
    }
    Ok(out)
}

/// Rename positive existentials apart so they can be treated as free.
fn open_exists(p: &Pure, fresh: &mut u32) -> Result<Pure, DecideError> {
    fn go(p: &Pure, pos: bool, fresh: &mut u32) -> Result<Pure, DecideError> {
        Ok(match p {
            Pure::Exists(v, q) => {
                if !pos {
                    return Err(DecideError::NegatedExists);
                }
                *fresh += 1;
                let nv = Var::new(&format!("{}!q", v.name), *fresh);
                let mut m = HashMap::new();
                m.insert(v.clone(), nv);
                go(&q.rename(&m), pos, fresh)?
            }
            Pure::Not(q) => Pure::Not(Box::new(go(q, !pos, fresh)?)),
            Pure::And(qs) => Pure::And(qs.iter().map(|q| go(q, pos, fresh)).collect::<Result<_, _>>()?),
            Pure::Or(qs) => Pure::Or(qs.iter().map(|q| go(q, pos, fresh)).collect::<Result<_, _>>()?),
            other => other.clone(),
        })
    }
    go(p, true, fresh)
}

fn to_dnf(p: &Pure, neg: bool, cap: usize) -> Result<Dnf, DecideError> {
    match p {
        Pure::Bool(b) => Ok(if *b != neg { vec![Vec::new()] } else { Vec::new() }),
        Pure::BoolVar(v) => Ok(vec![vec![Lit { lin: Lin::var(v), kind: if neg { LitKind::Eq } else { LitKind::Neq } }]]),
        Pure::EqNull(v) => Ok(vec![vec![Lit { lin: Lin::var(v), kind: if neg { LitKind::Neq } else { LitKind::Eq } }]]),
        Pure::Eq(a, b) => Ok(cmp_atom(a, b, if neg { LitKind::Neq } else { LitKind::Eq }, false)),
        Pure::Le(a, b) => {
            if neg {
                // a > b  <=>  a - b - 1 >= 0
                let mut d = cmp_atom(a, b, LitKind::Geq, false);
                for cube in d.iter_mut() {
                    let last = cube.last_mut().unwrap();
                    last.lin = last.lin.plus(&Lin::konst(-1));
                }
                Ok(d)
            } else {
                Ok(cmp_atom(a, b, LitKind::Geq, true))
            }
        }
        Pure::Not(q) => to_dnf(q, !neg, cap),
        Pure::And(qs) | Pure::Or(qs) => {
            let conj = matches!(p, Pure::And(_)) != neg;
            if conj {
                let mut acc: Dnf = vec![Vec::new()];
                for q in qs {
                    let d = to_dnf(q, neg, cap)?;
                    acc = product(acc, d, cap)?;
                    if acc.is_empty() {
                        break;
                    }
                }
                Ok(acc)
            } else {
                let mut acc = Vec::new();
                for q in qs {
                    acc.extend(to_dnf(q, neg, cap)?);
                    if acc.len() > cap {
                        return Err(DecideError::DnfCap(cap));
                    }
                }
                Ok(acc)
            }
        }
        Pure::Exists(..) => Err(DecideError::NegatedExists),
        other => Err(DecideError::NotPure(other.to_string())),
    }
}

fn solve_cube(cube: &[Lit]) -> Result<Option<Model>, DecideError> {
    let mut vars: BTreeSet<Var> = BTreeSet::new();
    for l in cube {
        vars.extend(l.lin.coef.keys().cloned());
    }
    let idx: BTreeMap<Var, usize> = vars.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let n = idx.len();
    let cs: Vec<Constraint> = cube
        .iter()
        .map(|l| {
            let mut coef = vec![0; n];
            for (v, a) in &l.lin.coef {
                coef[idx[v]] = *a;
            }
            Constraint {
                coef,
                c: l.lin.c,
                kind: match l.kind {
                    LitKind::Eq => Kind::Eq,
                    LitKind::Geq => Kind::Geq,
                    LitKind::Neq => Kind::Neq,
                },
            }
        })
        .collect();
    let res = lia::solve(n, &cs)?;
    Ok(res.and_then(|m| {
        if !cs.iter().all(|c| c.holds(&m)) {
            return None;
        }
        Some(vars.iter().cloned().zip(m.iter().map(|x| *x as i64)).collect())
    }))
}

/// Reject atoms that only make sense for spatial reasoning.
pub fn check_pure(p: &Pure) -> Result<(), DecideError> {
    match p {
        Pure::Dangl(..) | Pure::Load { .. } | Pure::Store { .. } | Pure::Del { .. } => {
            Err(DecideError::NotPure(p.to_string()))
        }
        Pure::Not(q) | Pure::Exists(_, q) => check_pure(q),
        Pure::And(qs) | Pure::Or(qs) => qs.iter().try_for_each(check_pure),
        _ => Ok(()),
    }
}

fn decide_uncached(p: &Pure) -> Result<Option<Model>, DecideError> {
    check_pure(p)?;
    let mut fresh = 0;
    let p = open_exists(p, &mut fresh)?;
    let dnf = to_dnf(&p, false, DNF_CAP)?;
    for cube in dnf {
        if let Some(mut m) = solve_cube(&cube)? {
            // variables not constrained by this cube
            for v in p.free_vars() {
                m.entry(v).or_insert(0);
            }
            m.retain(|v, _| !v.name.ends_with("!q"));
            return Ok(Some(m));
        }
    }
    Ok(None)
}

fn memo() -> &'static Mutex<HashMap<String, Option<Model>>> {
    static MEMO: OnceLock<Mutex<HashMap<String, Option<Model>>>> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Decide `p`; results are cached by the rendered formula.
pub fn decide(p: &Pure) -> Result<Option<Model>, DecideError> {
    let key = p.to_string();
    if let Some(r) = memo().lock().unwrap().get(&key) {
        return Ok(r.clone());
    }
    let r = match super::backend() {
        super::Backend::Internal => decide_uncached(p)?,
        super::Backend::SmtLib(exe) => {
            check_pure(p)?;
            super::smtlib::run_external(&exe, p)?
        }
    };
    let mut g = memo().lock().unwrap();
    if g.len() > 200_000 {
        g.clear();
    }
    g.insert(key, r.clone());
    Ok(r)
}

pub fn is_sat(p: &Pure) -> Result<bool, DecideError> {
    Ok(decide(p)?.is_some())
}

/// Decide `p` and, when unsatisfiable, shrink its top-level conjuncts to a
/// minimal unsatisfiable subset by deletion.
pub fn decide_base(p: &Pure) -> Result<SatResult, DecideError> {
    match decide(p)? {
        Some(m) => Ok(SatResult::Sat(m)),
        None => Ok(SatResult::Unsat(unsat_core(&p.conjuncts())?)),
    }
}

/// Deletion-based minimal unsatisfiable subset of `parts` (assumed UNSAT).
pub fn unsat_core(parts: &[Pure]) -> Result<Vec<usize>, DecideError> {
    let mut keep: Vec<usize> = (0..parts.len()).collect();
    let mut i = 0;
    while i < keep.len() {
        let trial: Vec<Pure> =
            keep.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, k)| parts[*k].clone()).collect();
        if !is_sat(&Pure::and(trial))? {
            keep.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(keep)
}

/// Does `a` imply `b`?
pub fn implies(a: &Pure, b: &Pure) -> Result<bool, DecideError> {
    Ok(!is_sat(&Pure::and(vec![a.clone(), Pure::not(b.clone())]))?)
}
