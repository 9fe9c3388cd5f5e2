//! Reduction of normalized base heaps to pure arithmetic, and projection of
//! existential pointer variables.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::sl::{HeapAtom, Pure, SymbolicHeap, Term, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExpureError {
    #[error("heap is not normalized: {0}")]
    NotNormalized(String),
}

/// Pure constraints equisatisfiable with a normalized base heap, together
/// with the existentials that scope over them.
pub fn expure_parts(h: &SymbolicHeap) -> Result<(Vec<Var>, Vec<Pure>), ExpureError> {
    if let Some(p) = h.preds().next() {
        return Err(ExpureError::NotNormalized(format!("predicate {}", p.name)));
    }
    if h.nonempty {
        return Err(ExpureError::NotNormalized("leak annotation".into()));
    }
    let roots: Vec<Var> = h
        .spatial
        .iter()
        .filter_map(|a| match a {
            HeapAtom::PointsTo { root, .. } => Some(root.clone()),
            _ => None,
        })
        .collect();
    let mut out = Vec::new();
    for (i, r) in roots.iter().enumerate() {
        out.push(Pure::ne_null(r));
        for s in &roots[i + 1..] {
            out.push(Pure::ne_vars(r, s));
        }
    }
    for p in h.pure.iter().flat_map(|p| p.conjuncts()) {
        match &p {
            Pure::Dangl(v, _) => {
                out.push(Pure::ne_null(v));
                for r in &roots {
                    out.push(Pure::ne_vars(v, r));
                }
            }
            Pure::Not(q) if matches!(**q, Pure::Dangl(..)) => {
                let Pure::Dangl(v, _) = &**q else { unreachable!() };
                let mut alts = vec![Pure::EqNull(v.clone())];
                alts.extend(roots.iter().map(|r| Pure::eq_vars(v, r)));
                out.push(Pure::or(alts));
            }
            q if q.is_memory_atom() || q.contains_spatial_semantics() => {
                return Err(ExpureError::NotNormalized(q.to_string()));
            }
            q => out.push(q.clone()),
        }
    }
    Ok((h.ex_vars.clone(), out))
}

/// `exists w. constraints` as a single formula.
pub fn expure(h: &SymbolicHeap) -> Result<Pure, ExpureError> {
    let (ex, body) = expure_parts(h)?;
    let mut f = Pure::and(body);
    for v in ex.into_iter().rev() {
        f = Pure::Exists(v, Box::new(f));
    }
    Ok(f)
}

fn null_var() -> Var {
    Var::new("$null", 0)
}

/// View a literal as a pointer (dis)equality between two "nodes", with null
/// standing in as a node of its own.
fn ptr_lit(p: &Pure) -> Option<(Var, Var, bool)> {
    match p {
        Pure::Eq(Term::Var(a), Term::Var(b)) => Some((a.clone(), b.clone(), true)),
        Pure::EqNull(a) => Some((a.clone(), null_var(), true)),
        Pure::Not(q) => match &**q {
            Pure::Eq(Term::Var(a), Term::Var(b)) => Some((a.clone(), b.clone(), false)),
            Pure::EqNull(a) => Some((a.clone(), null_var(), false)),
            _ => None,
        },
        _ => None,
    }
}

fn mk_lit(a: &Var, b: &Var, eq: bool) -> Pure {
    let atom = if *b == null_var() {
        Pure::EqNull(a.clone())
    } else if *a == null_var() {
        Pure::EqNull(b.clone())
    } else {
        Pure::eq_vars(a, b)
    };
    if eq {
        atom
    } else {
        Pure::not(atom)
    }
}

/// Eliminate the quantified pointer variables `w` from a conjunction.
///
/// Equalities `v = u` with `v` in `w` substitute `v` away (equalities are
/// processed before disequalities). A disequality that still mentions a
/// quantified variable is dropped when that variable occurs nowhere else
/// except in pointer (dis)equalities; there are infinitely many addresses,
/// so such a disequality can always be met. `v != v` becomes `false`.
pub fn project(conj: &[Pure], w: &BTreeSet<Var>) -> Vec<Pure> {
    let mut lits: Vec<Pure> = conj.iter().flat_map(|p| p.conjuncts()).collect();
    let mut quantified: BTreeSet<Var> = w.clone();
    // equalities first
    loop {
        let mut hit = None;
        for (i, p) in lits.iter().enumerate() {
            if let Some((a, b, true)) = ptr_lit(p) {
                if a == b {
                    hit = Some((i, None));
                    break;
                }
                if quantified.contains(&a) && b != null_var() {
                    hit = Some((i, Some((a, b))));
                    break;
                }
                if quantified.contains(&b) {
                    hit = Some((i, Some((b, a))));
                    break;
                }
                if quantified.contains(&a) && b == null_var() {
                    hit = Some((i, Some((a, b))));
                    break;
                }
            }
        }
        let Some((i, sub)) = hit else { break };
        lits.remove(i);
        let Some((v, by)) = sub else { continue };
        quantified.remove(&v);
        lits = lits
            .into_iter()
            .map(|p| match ptr_lit(&p) {
                Some((a, b, eq)) if a == v || b == v => {
                    let a2 = if a == v { by.clone() } else { a };
                    let b2 = if b == v { by.clone() } else { b };
                    if a2 == b2 {
                        Pure::Bool(eq)
                    } else {
                        mk_lit(&a2, &b2, eq)
                    }
                }
                _ => {
                    if by == null_var() {
                        // substituting null into arithmetic means 0
                        let mut m = HashMap::new();
                        m.insert(v.clone(), Var::new("$zero", 0));
                        let q = p.rename(&m);
                        if q.free_vars().contains(&Var::new("$zero", 0)) {
                            return Pure::and(vec![q, Pure::eq_const(&Var::new("$zero", 0), 0)]);
                        }
                        q
                    } else {
                        let mut m = HashMap::new();
                        m.insert(v.clone(), by.clone());
                        p.rename(&m)
                    }
                }
            })
            .collect();
    }
    // disequalities
    let only_ptr = |v: &Var, lits: &[Pure]| {
        lits.iter().all(|p| ptr_lit(p).is_some() || !p.free_vars().contains(v))
    };
    let snapshot = lits.clone();
    let mut out = Vec::new();
    for p in lits {
        match ptr_lit(&p) {
            Some((a, b, false)) if a == b => return vec![Pure::ff()],
            Some((a, b, false))
                if (quantified.contains(&a) && only_ptr(&a, &snapshot))
                    || (quantified.contains(&b) && only_ptr(&b, &snapshot)) => {}
            _ => out.push(p),
        }
    }
    Pure::and(out).conjuncts()
}
