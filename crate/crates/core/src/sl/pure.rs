//! Pure (non-spatial) formulas and arithmetic terms.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use super::var::Var;

/// Linear-ish integer terms. `min`/`max` are kept; the decision procedure
/// removes them by case split.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Term {
    Const(i64),
    Var(Var),
    Mul(i64, Box<Term>),
    Add(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    Min(Box<Term>, Box<Term>),
    Max(Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(v: &Var) -> Term {
        Term::Var(v.clone())
    }

    pub fn add(a: Term, b: Term) -> Term {
        match (&a, &b) {
            (Term::Const(0), _) => b,
            (_, Term::Const(0)) => a,
            (Term::Const(x), Term::Const(y)) => Term::Const(x + y),
            _ => Term::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Term, b: Term) -> Term {
        Term::add(a, Term::neg(b))
    }

    pub fn neg(a: Term) -> Term {
        match a {
            Term::Const(c) => Term::Const(-c),
            Term::Neg(inner) => *inner,
            other => Term::Neg(Box::new(other)),
        }
    }

    pub fn mul(k: i64, a: Term) -> Term {
        match (k, a) {
            (0, _) => Term::Const(0),
            (1, a) => a,
            (-1, a) => Term::neg(a),
            (k, Term::Const(c)) => Term::Const(k * c),
            (k, a) => Term::Mul(k, Box::new(a)),
        }
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Const(_) => {}
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Mul(_, a) | Term::Neg(a) => a.collect_vars(out),
            Term::Add(a, b) | Term::Min(a, b) | Term::Max(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Replace variable `v` by term `t`.
    pub fn subst(&self, v: &Var, t: &Term) -> Term {
        match self {
            Term::Var(x) if x == v => t.clone(),
            Term::Const(_) | Term::Var(_) => self.clone(),
            Term::Mul(k, a) => Term::mul(*k, a.subst(v, t)),
            Term::Neg(a) => Term::neg(a.subst(v, t)),
            Term::Add(a, b) => Term::add(a.subst(v, t), b.subst(v, t)),
            Term::Min(a, b) => Term::Min(Box::new(a.subst(v, t)), Box::new(b.subst(v, t))),
            Term::Max(a, b) => Term::Max(Box::new(a.subst(v, t)), Box::new(b.subst(v, t))),
        }
    }

    pub fn rename(&self, m: &HashMap<Var, Var>) -> Term {
        match self {
            Term::Const(c) => Term::Const(*c),
            Term::Var(v) => Term::Var(m.get(v).cloned().unwrap_or_else(|| v.clone())),
            Term::Mul(k, a) => Term::Mul(*k, Box::new(a.rename(m))),
            Term::Neg(a) => Term::Neg(Box::new(a.rename(m))),
            Term::Add(a, b) => Term::Add(Box::new(a.rename(m)), Box::new(b.rename(m))),
            Term::Min(a, b) => Term::Min(Box::new(a.rename(m)), Box::new(b.rename(m))),
            Term::Max(a, b) => Term::Max(Box::new(a.rename(m)), Box::new(b.rename(m))),
        }
    }
}

/// Position in the global memory-access order.
///
/// Inside a predicate definition a sequence number is a single local counter
/// `[k]`. When a definition is instantiated in the execution tree, the
/// occurrence's call-site path is prepended, so sequence numbers from
/// different procedure activations compare in program order
/// (lexicographically).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Seq(pub Vec<u32>);

impl Seq {
    pub fn local(k: u32) -> Seq {
        Seq(vec![k])
    }
}

impl fmt::Display for Seq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "-");
        }
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Pure {
    Bool(bool),
    /// Boolean-valued variable used as an atom (true iff non-zero).
    BoolVar(Var),
    Eq(Term, Term),
    Le(Term, Term),
    EqNull(Var),
    /// `v` holds a location that is not allocated just before access `at`.
    Dangl(Var, Seq),
    Load { base: Var, field: Arc<str>, target: Var, seq: Seq },
    Store { base: Var, field: Arc<str>, source: Var, seq: Seq },
    Del { base: Var, seq: Seq },
    Not(Box<Pure>),
    And(Vec<Pure>),
    Or(Vec<Pure>),
    Exists(Var, Box<Pure>),
}

static BINDER_GEN: AtomicU32 = AtomicU32::new(1 << 30);

impl Pure {
    pub fn tt() -> Pure {
        Pure::Bool(true)
    }

    pub fn ff() -> Pure {
        Pure::Bool(false)
    }

    pub fn not(p: Pure) -> Pure {
        match p {
            Pure::Bool(b) => Pure::Bool(!b),
            Pure::Not(inner) => *inner,
            other => Pure::Not(Box::new(other)),
        }
    }

    pub fn and(ps: Vec<Pure>) -> Pure {
        let mut out = Vec::new();
        for p in ps {
            match p {
                Pure::Bool(true) => {}
                Pure::Bool(false) => return Pure::ff(),
                Pure::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Pure::tt(),
            1 => out.pop().unwrap(),
            _ => Pure::And(out),
        }
    }

    pub fn or(ps: Vec<Pure>) -> Pure {
        let mut out = Vec::new();
        for p in ps {
            match p {
                Pure::Bool(false) => {}
                Pure::Bool(true) => return Pure::tt(),
                Pure::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Pure::ff(),
            1 => out.pop().unwrap(),
            _ => Pure::Or(out),
        }
    }

    pub fn eq_vars(a: &Var, b: &Var) -> Pure {
        Pure::Eq(Term::var(a), Term::var(b))
    }

    pub fn eq_const(a: &Var, k: i64) -> Pure {
        Pure::Eq(Term::var(a), Term::Const(k))
    }

    pub fn ne_vars(a: &Var, b: &Var) -> Pure {
        Pure::not(Pure::eq_vars(a, b))
    }

    pub fn ne_null(a: &Var) -> Pure {
        Pure::not(Pure::EqNull(a.clone()))
    }

    /// `a < b`
    pub fn lt(a: Term, b: Term) -> Pure {
        Pure::not(Pure::Le(b, a))
    }

    /// `a >= b`
    pub fn ge(a: Term, b: Term) -> Pure {
        Pure::Le(b, a)
    }

    pub fn is_memory_atom(&self) -> bool {
        matches!(self, Pure::Load { .. } | Pure::Store { .. } | Pure::Del { .. })
    }

    pub fn seq(&self) -> Option<&Seq> {
        match self {
            Pure::Load { seq, .. } | Pure::Store { seq, .. } | Pure::Del { seq, .. } => Some(seq),
            _ => None,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    pub fn collect_free(&self, out: &mut BTreeSet<Var>) {
        match self {
            Pure::Bool(_) => {}
            Pure::BoolVar(v) | Pure::EqNull(v) | Pure::Dangl(v, _) | Pure::Del { base: v, .. } => {
                out.insert(v.clone());
            }
            Pure::Eq(a, b) | Pure::Le(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Pure::Load { base, target, .. } => {
                out.insert(base.clone());
                out.insert(target.clone());
            }
            Pure::Store { base, source, .. } => {
                out.insert(base.clone());
                out.insert(source.clone());
            }
            Pure::Not(p) => p.collect_free(out),
            Pure::And(ps) | Pure::Or(ps) => ps.iter().for_each(|p| p.collect_free(out)),
            Pure::Exists(v, p) => {
                let mut inner = BTreeSet::new();
                p.collect_free(&mut inner);
                inner.remove(v);
                out.extend(inner);
            }
        }
    }

    /// Replace integer variable `v` by term `t`. `None` when `v` occurs in
    /// a pointer position, where only a variable could stand.
    pub fn subst(&self, v: &Var, t: &Term) -> Option<Pure> {
        if !self.free_vars().contains(v) {
            return Some(self.clone());
        }
        if let Term::Var(w) = t {
            return Some(self.rename(&[(v.clone(), w.clone())].into_iter().collect()));
        }
        let mut fv = BTreeSet::new();
        t.collect_vars(&mut fv);
        Some(match self {
            Pure::Eq(a, b) => Pure::Eq(a.subst(v, t), b.subst(v, t)),
            Pure::Le(a, b) => Pure::Le(a.subst(v, t), b.subst(v, t)),
            Pure::Not(p) => Pure::Not(Box::new(p.subst(v, t)?)),
            Pure::And(ps) => Pure::And(ps.iter().map(|p| p.subst(v, t)).collect::<Option<_>>()?),
            Pure::Or(ps) => Pure::Or(ps.iter().map(|p| p.subst(v, t)).collect::<Option<_>>()?),
            Pure::Exists(w, p) if w != v && !fv.contains(w) => Pure::Exists(w.clone(), Box::new(p.subst(v, t)?)),
            _ => return None,
        })
    }

    /// Simultaneous capture-avoiding renaming of free variables.
    pub fn rename(&self, m: &HashMap<Var, Var>) -> Pure {
        if m.is_empty() {
            return self.clone();
        }
        let r = |v: &Var| m.get(v).cloned().unwrap_or_else(|| v.clone());
        match self {
            Pure::Bool(b) => Pure::Bool(*b),
            Pure::BoolVar(v) => Pure::BoolVar(r(v)),
            Pure::Eq(a, b) => Pure::Eq(a.rename(m), b.rename(m)),
            Pure::Le(a, b) => Pure::Le(a.rename(m), b.rename(m)),
            Pure::EqNull(v) => Pure::EqNull(r(v)),
            Pure::Dangl(v, s) => Pure::Dangl(r(v), s.clone()),
            Pure::Load { base, field, target, seq } => Pure::Load {
                base: r(base),
                field: field.clone(),
                target: r(target),
                seq: seq.clone(),
            },
            Pure::Store { base, field, source, seq } => Pure::Store {
                base: r(base),
                field: field.clone(),
                source: r(source),
                seq: seq.clone(),
            },
            Pure::Del { base, seq } => Pure::Del { base: r(base), seq: seq.clone() },
            Pure::Not(p) => Pure::Not(Box::new(p.rename(m))),
            Pure::And(ps) => Pure::And(ps.iter().map(|p| p.rename(m)).collect()),
            Pure::Or(ps) => Pure::Or(ps.iter().map(|p| p.rename(m)).collect()),
            Pure::Exists(v, p) => {
                let mut inner = m.clone();
                inner.remove(v);
                let captures = inner.values().any(|t| t == v);
                if captures {
                    let nv = Var::new(&v.name, BINDER_GEN.fetch_add(1, Ordering::Relaxed));
                    inner.insert(v.clone(), nv.clone());
                    Pure::Exists(nv, Box::new(p.rename(&inner)))
                } else {
                    Pure::Exists(v.clone(), Box::new(p.rename(&inner)))
                }
            }
        }
    }

    /// Apply `f` to every sequence number (memory atoms and dangling atoms).
    pub fn map_seq(&self, f: &dyn Fn(&Seq) -> Seq) -> Pure {
        match self {
            Pure::Dangl(v, s) => Pure::Dangl(v.clone(), f(s)),
            Pure::Load { base, field, target, seq } => Pure::Load {
                base: base.clone(),
                field: field.clone(),
                target: target.clone(),
                seq: f(seq),
            },
            Pure::Store { base, field, source, seq } => Pure::Store {
                base: base.clone(),
                field: field.clone(),
                source: source.clone(),
                seq: f(seq),
            },
            Pure::Del { base, seq } => Pure::Del { base: base.clone(), seq: f(seq) },
            Pure::Not(p) => Pure::Not(Box::new(p.map_seq(f))),
            Pure::And(ps) => Pure::And(ps.iter().map(|p| p.map_seq(f)).collect()),
            Pure::Or(ps) => Pure::Or(ps.iter().map(|p| p.map_seq(f)).collect()),
            Pure::Exists(v, p) => Pure::Exists(v.clone(), Box::new(p.map_seq(f))),
            other => other.clone(),
        }
    }

    /// Flatten top-level conjunctions.
    pub fn conjuncts(&self) -> Vec<Pure> {
        match self {
            Pure::And(ps) => ps.iter().flat_map(|p| p.conjuncts()).collect(),
            Pure::Bool(true) => Vec::new(),
            other => vec![other.clone()],
        }
    }

    pub fn contains_spatial_semantics(&self) -> bool {
        match self {
            Pure::Dangl(..) | Pure::Load { .. } | Pure::Store { .. } | Pure::Del { .. } => true,
            Pure::Not(p) | Pure::Exists(_, p) => p.contains_spatial_semantics(),
            Pure::And(ps) | Pure::Or(ps) => ps.iter().any(|p| p.contains_spatial_semantics()),
            _ => false,
        }
    }
}
