//! Integer linear feasibility: equality elimination, Fourier–Motzkin with
//! exact/dark shadows and splinters (the omega test), lazy disequalities.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LiaError {
    #[error("integer solver budget exhausted")]
    Budget,
    #[error("arithmetic overflow in integer solver")]
    Overflow,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Kind {
    /// `expr = 0`
    Eq,
    /// `expr >= 0`
    Geq,
    /// `expr != 0`
    Neq,
}

/// `sum coef[i] * x_i + c  (kind)  0` over dense variable indices.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Constraint {
    pub coef: Vec<i128>,
    pub c: i128,
    pub kind: Kind,
}

impl Constraint {
    pub fn eval(&self, m: &[i128]) -> Option<i128> {
        let mut s = self.c;
        for (a, x) in self.coef.iter().zip(m) {
            s = s.checked_add(a.checked_mul(*x)?)?;
        }
        Some(s)
    }

    pub fn holds(&self, m: &[i128]) -> bool {
        match self.eval(m) {
            Some(v) => match self.kind {
                Kind::Eq => v == 0,
                Kind::Geq => v >= 0,
                Kind::Neq => v != 0,
            },
            None => false,
        }
    }
}

type R<T> = Result<T, LiaError>;

fn add(a: i128, b: i128) -> R<i128> {
    a.checked_add(b).ok_or(LiaError::Overflow)
}

fn mul(a: i128, b: i128) -> R<i128> {
    a.checked_mul(b).ok_or(LiaError::Overflow)
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn floor_div(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -floor_div(-a, b)
}

/// Symmetric remainder used by the equality-elimination step.
fn mod_hat(a: i128, m: i128) -> i128 {
    a - m * floor_div(2 * a + m, 2 * m)
}

#[derive(Clone, Debug)]
struct Row {
    coef: Vec<i128>,
    c: i128,
}

impl Row {
    fn is_const(&self) -> bool {
        self.coef.iter().all(|a| *a == 0)
    }

    fn eval(&self, m: &[i128]) -> R<i128> {
        let mut s = self.c;
        for (a, x) in self.coef.iter().zip(m) {
            if *a != 0 {
                s = add(s, mul(*a, *x)?)?;
            }
        }
        Ok(s)
    }

    /// Replace `x_k` by the affine expression `sub`.
    fn substitute(&mut self, k: usize, sub: &Row) -> R<()> {
        let a = self.coef[k];
        if a == 0 {
            return Ok(());
        }
        self.coef[k] = 0;
        for (i, s) in sub.coef.iter().enumerate() {
            if *s != 0 {
                self.coef[i] = add(self.coef[i], mul(a, *s)?)?;
            }
        }
        self.c = add(self.c, mul(a, sub.c)?)?;
        Ok(())
    }

    fn grow(&mut self, n: usize) {
        self.coef.resize(n, 0);
    }
}

#[derive(Clone, Debug)]
struct Problem {
    n: usize,
    eqs: Vec<Row>,
    geqs: Vec<Row>,
}

struct Solver {
    budget: u64,
}

enum Norm {
    Unsat,
    Ok,
}

impl Solver {
    fn tick(&mut self) -> R<()> {
        if self.budget == 0 {
            return Err(LiaError::Budget);
        }
        self.budget -= 1;
        Ok(())
    }

    fn normalize(&self, p: &mut Problem) -> Norm {
        let mut eqs = Vec::new();
        for mut e in p.eqs.drain(..) {
            let g = e.coef.iter().fold(0, |g, a| gcd(g, *a));
            if g == 0 {
                if e.c != 0 {
                    return Norm::Unsat;
                }
                continue;
            }
            if e.c % g != 0 {
                return Norm::Unsat;
            }
            e.coef.iter_mut().for_each(|a| *a /= g);
            e.c /= g;
            eqs.push(e);
        }
        p.eqs = eqs;
        let mut geqs: Vec<Row> = Vec::new();
        for mut e in p.geqs.drain(..) {
            let g = e.coef.iter().fold(0, |g, a| gcd(g, *a));
            if g == 0 {
                if e.c < 0 {
                    return Norm::Unsat;
                }
                continue;
            }
            e.coef.iter_mut().for_each(|a| *a /= g);
            e.c = floor_div(e.c, g);
            geqs.push(e);
        }
        // keep the tightest constraint per coefficient vector
        geqs.sort_by(|a, b| a.coef.cmp(&b.coef).then(a.c.cmp(&b.c)));
        geqs.dedup_by(|a, b| a.coef == b.coef);
        // opposite pairs: tight ones become equalities, crossing ones are unsat
        let mut keep = vec![true; geqs.len()];
        for i in 0..geqs.len() {
            if !keep[i] {
                continue;
            }
            let neg: Vec<i128> = geqs[i].coef.iter().map(|a| -a).collect();
            if let Ok(j) = geqs.binary_search_by(|r| r.coef.cmp(&neg)) {
                if !keep[j] {
                    continue;
                }
                let s = geqs[i].c + geqs[j].c;
                if s < 0 {
                    return Norm::Unsat;
                }
                if s == 0 {
                    keep[i] = false;
                    keep[j] = false;
                    p.eqs.push(geqs[i].clone());
                }
            }
        }
        p.geqs = geqs.into_iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).collect();
        Norm::Ok
    }

    fn solve(&mut self, mut p: Problem) -> R<Option<Vec<i128>>> {
        self.tick()?;
        loop {
            if let Norm::Unsat = self.normalize(&mut p) {
                return Ok(None);
            }
            if p.eqs.is_empty() {
                break;
            }
            // equality elimination
            let e = p.eqs[0].clone();
            if let Some(k) = e.coef.iter().position(|a| a.abs() == 1) {
                let a = e.coef[k];
                // x_k = -(rest + c) / a
                let mut sub = Row { coef: e.coef.iter().map(|x| -x * a).collect(), c: -e.c * a };
                sub.coef[k] = 0;
                let mut q = p.clone();
                q.eqs.remove(0);
                for r in q.eqs.iter_mut().chain(q.geqs.iter_mut()) {
                    r.substitute(k, &sub)?;
                }
                let Some(mut m) = self.solve(q)? else { return Ok(None) };
                m[k] = 0;
                m[k] = sub.eval(&m)?;
                return Ok(Some(m));
            }
            // no unit coefficient: introduce sigma and shrink
            let k = (0..p.n)
                .filter(|i| e.coef[*i] != 0)
                .min_by_key(|i| e.coef[*i].abs())
                .expect("non-constant equality");
            let ak = e.coef[k];
            let m = ak.abs() + 1;
            let sign = ak.signum();
            let sigma = p.n;
            p.n += 1;
            for r in p.eqs.iter_mut().chain(p.geqs.iter_mut()) {
                r.grow(p.n);
            }
            // x_k = -sign*m*sigma + sum_{i != k} sign*mod_hat(a_i,m) x_i + sign*mod_hat(c,m)
            let mut sub = Row { coef: vec![0; p.n], c: mul(sign, mod_hat(e.c, m))? };
            for i in 0..sigma {
                if i != k && e.coef[i] != 0 {
                    sub.coef[i] = mul(sign, mod_hat(e.coef[i], m))?;
                }
            }
            sub.coef[sigma] = mul(-sign, m)?;
            for r in p.eqs.iter_mut().chain(p.geqs.iter_mut()) {
                r.substitute(k, &sub)?;
            }
            let Some(mut model) = self.solve(p)? else { return Ok(None) };
            model[k] = 0;
            model[k] = sub.eval(&model)?;
            model.truncate(sigma);
            return Ok(Some(model));
        }
        self.eliminate(p)
    }

    fn eliminate(&mut self, p: Problem) -> R<Option<Vec<i128>>> {
        if p.geqs.iter().all(|r| r.is_const()) {
            return Ok(Some(vec![0; p.n]));
        }
        // pick a variable
        let mut best: Option<(usize, bool, usize)> = None; // (var, exact, cost)
        for x in 0..p.n {
            let (mut lo, mut up, mut lo_unit, mut up_unit) = (0usize, 0usize, true, true);
            for r in &p.geqs {
                let a = r.coef[x];
                if a > 0 {
                    lo += 1;
                    lo_unit &= a == 1;
                } else if a < 0 {
                    up += 1;
                    up_unit &= a == -1;
                }
            }
            if lo + up == 0 {
                continue;
            }
            if lo == 0 || up == 0 {
                best = Some((x, true, 0));
                break;
            }
            let exact = lo_unit || up_unit;
            let cost = lo * up;
            let better = match best {
                None => true,
                Some((_, be, bc)) => (exact && !be) || (exact == be && cost < bc),
            };
            if better {
                best = Some((x, exact, cost));
            }
        }
        let (x, exact, _) = best.expect("some variable occurs");
        let (lowers, uppers, others): (Vec<&Row>, Vec<&Row>, Vec<&Row>) = {
            let mut l = Vec::new();
            let mut u = Vec::new();
            let mut o = Vec::new();
            for r in &p.geqs {
                if r.coef[x] > 0 {
                    l.push(r);
                } else if r.coef[x] < 0 {
                    u.push(r);
                } else {
                    o.push(r);
                }
            }
            (l, u, o)
        };
        let base: Vec<Row> = others.iter().map(|r| (*r).clone()).collect();
        if lowers.is_empty() || uppers.is_empty() {
            let q = Problem { n: p.n, eqs: Vec::new(), geqs: base };
            let Some(m) = self.solve(q)? else { return Ok(None) };
            return self.back_substitute(&p, x, m).map(Some);
        }
        let combine = |l: &Row, u: &Row, dark: bool| -> R<Row> {
            let b = l.coef[x];
            let a = -u.coef[x];
            let mut coef = vec![0; p.n];
            for i in 0..p.n {
                coef[i] = add(mul(a, l.coef[i])?, mul(b, u.coef[i])?)?;
            }
            coef[x] = 0;
            let mut c = add(mul(a, l.c)?, mul(b, u.c)?)?;
            if dark {
                c = add(c, -mul(a - 1, b - 1)?)?;
            }
            Ok(Row { coef, c })
        };
        let shadow = |dark: bool| -> R<Problem> {
            let mut g = base.clone();
            for l in &lowers {
                for u in &uppers {
                    g.push(combine(l, u, dark)?);
                }
            }
            Ok(Problem { n: p.n, eqs: Vec::new(), geqs: g })
        };
        if exact {
            let Some(m) = self.solve(shadow(false)?)? else { return Ok(None) };
            return self.back_substitute(&p, x, m).map(Some);
        }
        if let Some(m) = self.solve(shadow(true)?)? {
            return self.back_substitute(&p, x, m).map(Some);
        }
        if self.solve(shadow(false)?)?.is_none() {
            return Ok(None);
        }
        // splinters
        let amax = uppers.iter().map(|u| -u.coef[x]).max().unwrap();
        for l in &lowers {
            let b = l.coef[x];
            let top = floor_div(mul(amax, b)? - amax - b, amax);
            for i in 0..=top.max(0) {
                let mut eq = (*l).clone();
                eq.c = add(eq.c, -i)?;
                let q = Problem { n: p.n, eqs: vec![eq], geqs: p.geqs.clone() };
                if let Some(m) = self.solve(q)? {
                    return Ok(Some(m));
                }
            }
        }
        Ok(None)
    }

    /// Pick a value of `x` within the bounds implied by `p` under `m`.
    fn back_substitute(&self, p: &Problem, x: usize, mut m: Vec<i128>) -> R<Vec<i128>> {
        m[x] = 0;
        let mut lo: Option<i128> = None;
        let mut hi: Option<i128> = None;
        for r in &p.geqs {
            let a = r.coef[x];
            if a == 0 {
                continue;
            }
            let rest = r.eval(&m)?;
            if a > 0 {
                let b = ceil_div(-rest, a);
                lo = Some(lo.map_or(b, |l| l.max(b)));
            } else {
                let b = floor_div(rest, -a);
                hi = Some(hi.map_or(b, |h| h.min(b)));
            }
        }
        m[x] = match (lo, hi) {
            (Some(l), _) => l,
            (None, Some(h)) => h.min(0),
            (None, None) => 0,
        };
        Ok(m)
    }
}

/// Default number of solver steps before giving up.
pub const DEFAULT_BUDGET: u64 = 200_000;

/// Decide a conjunction of constraints over `n` integer variables.
pub fn solve(n: usize, cs: &[Constraint]) -> R<Option<Vec<i128>>> {
    solve_with_budget(n, cs, DEFAULT_BUDGET)
}

pub fn solve_with_budget(n: usize, cs: &[Constraint], budget: u64) -> R<Option<Vec<i128>>> {
    let mut s = Solver { budget };
    let mut eqs = Vec::new();
    let mut geqs = Vec::new();
    let mut neqs = Vec::new();
    for c in cs {
        let r = Row { coef: c.coef.clone(), c: c.c };
        match c.kind {
            Kind::Eq => eqs.push(r),
            Kind::Geq => geqs.push(r),
            Kind::Neq => neqs.push(r),
        }
    }
    with_diseqs(&mut s, Problem { n, eqs, geqs }, &neqs)
}

fn with_diseqs(s: &mut Solver, p: Problem, neqs: &[Row]) -> R<Option<Vec<i128>>> {
    let Some(m) = s.solve(p.clone())? else { return Ok(None) };
    debug_assert!(p.eqs.iter().all(|r| r.eval(&m).map(|v| v == 0).unwrap_or(false)));
    debug_assert!(p.geqs.iter().all(|r| r.eval(&m).map(|v| v >= 0).unwrap_or(false)));
    let violated = neqs.iter().position(|r| r.eval(&m).map(|v| v == 0).unwrap_or(true));
    let Some(i) = violated else { return Ok(Some(m)) };
    let r = &neqs[i];
    let rest: Vec<Row> = neqs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| r.clone()).collect();
    // r >= 1
    let mut up = p.clone();
    up.geqs.push(Row { coef: r.coef.clone(), c: add(r.c, -1)? });
    if let Some(m) = with_diseqs(s, up, &rest)? {
        return Ok(Some(m));
    }
    // -r >= 1
    let mut down = p;
    down.geqs.push(Row { coef: r.coef.iter().map(|a| -a).collect(), c: add(-r.c, -1)? });
    with_diseqs(s, down, &rest)
}
