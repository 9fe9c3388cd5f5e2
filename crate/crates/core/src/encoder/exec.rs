//! Forward symbolic execution of one normalized procedure. Each complete
//! path becomes one branch of the procedure's predicate.

use std::collections::{BTreeSet, HashMap};

use super::{memory_disjuncts, result_vars, Branch, BranchKind, EncodeError, MemCmd};
use crate::frontend::ast::walk_stmts;
use crate::frontend::{BinOp, Expr, MemErrKind, Proc, Program, Stmt, StmtKind, Type, UnOp};
use crate::sl::{FreshGen, HeapAtom, PredInst, Pure, Seq, SymbolicHeap, Term, Var};

#[derive(Clone)]
struct Path {
    spatial: Vec<HeapAtom>,
    pure: Vec<Pure>,
    /// Memory accesses so far.
    k: u32,
    /// Calls so far.
    n: u32,
    /// Exit status variable of a callee in tail position.
    pass: Option<Var>,
    label: Vec<u8>,
    /// Truth condition of boolean variables.
    defs: HashMap<Var, Pure>,
}

struct Exec<'a> {
    prog: &'a Program,
    proc: &'a Proc,
    is_main: bool,
    gen: FreshGen,
    results: Vec<Var>,
    keep: BTreeSet<Var>,
    /// Variables read somewhere in the body.
    read: BTreeSet<Var>,
    /// Boolean variables whose 0/1 value is needed, not just their truth.
    valued: BTreeSet<Var>,
    out: Vec<Branch>,
}

pub(super) fn encode_proc(prog: &Program, proc: &Proc) -> Result<Vec<Branch>, EncodeError> {
    let results = result_vars(proc.ret.len());
    let mut keep: BTreeSet<Var> = proc.params.iter().map(|(_, v)| v.clone()).collect();
    keep.extend(results.iter().cloned());
    keep.insert(Var::eps());
    let mut ex = Exec {
        prog,
        proc,
        is_main: proc.name == "main",
        gen: FreshGen::new(1),
        results,
        keep,
        read: BTreeSet::new(),
        valued: BTreeSet::new(),
        out: Vec::new(),
    };
    ex.scan();
    let start = Path { spatial: vec![], pure: vec![], k: 0, n: 0, pass: None, label: vec![], defs: HashMap::new() };
    ex.run(start, vec![&proc.body])?;
    Ok(ex.out)
}

fn atom_vars(e: &Expr, out: &mut Vec<Var>) {
    match e {
        Expr::Var(v) => out.push(v.clone()),
        Expr::Field(b, _) | Expr::Un(_, b) => atom_vars(b, out),
        Expr::Bin(_, a, b) => {
            atom_vars(a, out);
            atom_vars(b, out);
        }
        Expr::Call(_, args) | Expr::New(_, args) => args.iter().for_each(|a| atom_vars(a, out)),
        _ => {}
    }
}

/// Statements that can end a path with an error.
fn may_fail(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::Store { .. } | StmtKind::Free(_) | StmtKind::Error | StmtKind::Assume(_) => true,
        StmtKind::Assign { rhs, .. } | StmtKind::Eval(rhs) => matches!(rhs, Expr::Field(..) | Expr::Call(..)),
        StmtKind::If { then, els, .. } => then.iter().chain(els).any(may_fail),
        StmtKind::While { body, .. } | StmtKind::Block(body) => body.iter().any(may_fail),
        _ => false,
    }
}

fn ill(line: u32, msg: &str) -> EncodeError {
    EncodeError::IllFormed { line, msg: msg.into() }
}

impl<'a> Exec<'a> {
    fn ty(&self, v: &Var) -> Type {
        if let Some(i) = self.results.iter().position(|r| r == v) {
            return self.proc.ret[i].clone();
        }
        self.proc.type_of(v).cloned().unwrap_or(Type::Int)
    }

    fn is_bool(&self, v: &Var) -> bool {
        self.ty(v) == Type::Bool
    }

    fn scan(&mut self) {
        let mut read = Vec::new();
        let mut valued = Vec::new();
        let bools = |vs: Vec<Var>, out: &mut Vec<Var>| out.extend(vs);
        walk_stmts(&self.proc.body, &mut |s| match &s.kind {
            StmtKind::Assign { rhs, .. } | StmtKind::Eval(rhs) => {
                atom_vars(rhs, &mut read);
                let mut vs = Vec::new();
                match rhs {
                    Expr::Call(_, args) | Expr::New(_, args) => args.iter().for_each(|a| atom_vars(a, &mut vs)),
                    Expr::Bin(BinOp::Eq | BinOp::Ne, a, b) => {
                        atom_vars(a, &mut vs);
                        atom_vars(b, &mut vs);
                    }
                    _ => {}
                }
                bools(vs, &mut valued);
            }
            StmtKind::Store { base, rhs, .. } => {
                atom_vars(base, &mut read);
                atom_vars(rhs, &mut read);
                atom_vars(rhs, &mut valued);
            }
            StmtKind::Free(e) | StmtKind::Assume(e) | StmtKind::If { cond: e, .. } => atom_vars(e, &mut read),
            StmtKind::Return(es) => {
                for e in es {
                    atom_vars(e, &mut read);
                    atom_vars(e, &mut valued);
                }
            }
            _ => {}
        });
        self.read = read.into_iter().collect();
        self.valued = valued.into_iter().filter(|v| self.is_bool(v)).collect();
        // a copy of a valued boolean must carry its value too
        loop {
            let mut grew = false;
            walk_stmts(&self.proc.body, &mut |s| {
                if let StmtKind::Assign { lhs, rhs: Expr::Var(y) } = &s.kind {
                    if lhs.len() == 1 && self.valued.contains(&lhs[0]) && self.is_bool(y) && !self.valued.contains(y) {
                        grew = true;
                    }
                }
            });
            if !grew {
                break;
            }
            let mut add = Vec::new();
            walk_stmts(&self.proc.body, &mut |s| {
                if let StmtKind::Assign { lhs, rhs: Expr::Var(y) } = &s.kind {
                    if lhs.len() == 1 && self.valued.contains(&lhs[0]) && self.is_bool(y) {
                        add.push(y.clone());
                    }
                }
            });
            self.valued.extend(add);
        }
    }

    fn fresh(&self, name: &str) -> Var {
        self.gen.fresh(name)
    }

    /// Arithmetic value of an atom.
    fn term(&self, e: &Expr, line: u32) -> Result<Term, EncodeError> {
        Ok(match e {
            Expr::Int(k) => Term::Const(*k),
            Expr::Bool(b) => Term::Const(*b as i64),
            Expr::Null => Term::Const(0),
            Expr::Var(v) => Term::var(v),
            _ => return Err(ill(line, "operand is not atomic")),
        })
    }

    /// Variable holding the value of an atom; constants get a fresh one.
    fn atom_var(&self, p: &mut Path, e: &Expr, line: u32) -> Result<Var, EncodeError> {
        Ok(match e {
            Expr::Var(v) => v.clone(),
            Expr::Null => {
                let k = self.fresh("_k");
                p.pure.push(Pure::EqNull(k.clone()));
                k
            }
            Expr::Int(_) | Expr::Bool(_) => {
                let k = self.fresh("_k");
                p.pure.push(Pure::Eq(Term::var(&k), self.term(e, line)?));
                k
            }
            _ => return Err(ill(line, "operand is not atomic")),
        })
    }

    /// Condition under which an atom is true.
    fn truth(&self, p: &Path, e: &Expr) -> Pure {
        match e {
            Expr::Bool(b) => Pure::Bool(*b),
            Expr::Int(k) => Pure::Bool(*k != 0),
            Expr::Null => Pure::ff(),
            Expr::Var(v) => match p.defs.get(v) {
                Some(d) => d.clone(),
                None if self.ty(v).is_ptr() => Pure::ne_null(v),
                None => Pure::not(Pure::eq_const(v, 0)),
            },
            _ => Pure::tt(),
        }
    }

    fn is_ptr_atom(&self, e: &Expr) -> bool {
        match e {
            Expr::Null => true,
            Expr::Var(v) => self.ty(v).is_ptr(),
            _ => false,
        }
    }

    fn is_bool_atom(&self, e: &Expr) -> bool {
        match e {
            Expr::Bool(_) => true,
            Expr::Var(v) => self.is_bool(v),
            _ => false,
        }
    }

    fn compare(&self, p: &Path, op: BinOp, a: &Expr, b: &Expr, line: u32) -> Result<Pure, EncodeError> {
        let eq = if matches!(op, BinOp::Eq | BinOp::Ne) {
            let e = if self.is_ptr_atom(a) || self.is_ptr_atom(b) {
                match (a, b) {
                    (Expr::Null, Expr::Null) => Pure::tt(),
                    (Expr::Var(v), Expr::Null) | (Expr::Null, Expr::Var(v)) => Pure::EqNull(v.clone()),
                    (Expr::Var(x), Expr::Var(y)) => Pure::eq_vars(x, y),
                    _ => return Err(ill(line, "bad pointer comparison")),
                }
            } else if self.is_bool_atom(a) && self.is_bool_atom(b) {
                let (x, y) = (self.truth(p, a), self.truth(p, b));
                Pure::or(vec![
                    Pure::and(vec![x.clone(), y.clone()]),
                    Pure::and(vec![Pure::not(x), Pure::not(y)]),
                ])
            } else {
                Pure::Eq(self.term(a, line)?, self.term(b, line)?)
            };
            Some(e)
        } else {
            None
        };
        let (x, y) = (|| Ok::<_, EncodeError>((self.term(a, line)?, self.term(b, line)?)))()?;
        Ok(match op {
            BinOp::Eq => eq.unwrap(),
            BinOp::Ne => Pure::not(eq.unwrap()),
            BinOp::Lt => Pure::lt(x, y),
            BinOp::Le => Pure::Le(x, y),
            BinOp::Gt => Pure::lt(y, x),
            BinOp::Ge => Pure::ge(x, y),
            _ => return Err(ill(line, "not a comparison")),
        })
    }

    /// Record the truth condition of boolean `x`, with its 0/1 value when
    /// something reads it as a value.
    fn define_bool(&self, p: &mut Path, x: &Var, c: Pure) {
        if self.valued.contains(x) {
            p.pure.push(Pure::or(vec![
                Pure::and(vec![Pure::eq_const(x, 1), c.clone()]),
                Pure::and(vec![Pure::eq_const(x, 0), Pure::not(c.clone())]),
            ]));
        }
        p.defs.insert(x.clone(), c);
    }

    fn run(&mut self, mut p: Path, mut stack: Vec<&'a [Stmt]>) -> Result<(), EncodeError> {
        loop {
            let Some(top) = stack.last_mut() else {
                self.finish(p);
                return Ok(());
            };
            let Some((s, rest)) = top.split_first() else {
                stack.pop();
                continue;
            };
            *top = rest;
            let line = s.line;
            match &s.kind {
                StmtKind::Decl { ty, var, init: None } => {
                    if self.read.contains(var) {
                        match ty {
                            t if t.is_ptr() => p.pure.push(Pure::Dangl(var.clone(), Seq::local(p.k))),
                            Type::Bool => self.define_bool(&mut p, var, Pure::ff()),
                            _ => p.pure.push(Pure::eq_const(var, 0)),
                        }
                    }
                }
                StmtKind::Decl { .. } => return Err(ill(line, "initialized declaration")),
                StmtKind::Assign { lhs, rhs } => match rhs {
                    Expr::Call(f, args) => {
                        let tail = !stack.iter().any(|sl| sl.iter().any(may_fail));
                        match self.call(&mut p, lhs, f, args, tail, line)? {
                            Some(p2) => p = p2,
                            None => return Ok(()),
                        }
                    }
                    Expr::Field(base, f) => {
                        let [x] = lhs.as_slice() else { return Err(ill(line, "load into several variables")) };
                        match self.load(&p, base, f, x, line)? {
                            Some(p2) => p = p2,
                            None => return Ok(()),
                        }
                    }
                    _ => {
                        let [x] = lhs.as_slice() else { return Err(ill(line, "several targets")) };
                        self.assign(&mut p, x, rhs, line)?;
                    }
                },
                StmtKind::Eval(Expr::Call(f, args)) => {
                    let tail = !stack.iter().any(|sl| sl.iter().any(may_fail));
                    match self.call(&mut p, &[], f, args, tail, line)? {
                        Some(p2) => p = p2,
                        None => return Ok(()),
                    }
                }
                StmtKind::Eval(Expr::Field(base, f)) => {
                    let x = self.fresh("_v");
                    match self.load(&p, base, f, &x, line)? {
                        Some(p2) => p = p2,
                        None => return Ok(()),
                    }
                }
                StmtKind::Eval(_) => {}
                StmtKind::Store { base, field, rhs } => {
                    let Expr::Var(y) = base else { return Err(ill(line, "store through a non-variable")) };
                    let source = self.atom_var(&mut p, rhs, line)?;
                    let cmd = MemCmd::Store { base: y.clone(), field: field.clone(), source };
                    p = self.access(p, &cmd, MemErrKind::NullDeref, MemErrKind::DanglingDeref, line);
                }
                StmtKind::Free(e) => {
                    let Expr::Var(y) = e else { return Err(ill(line, "free of a non-variable")) };
                    let cmd = MemCmd::Free { base: y.clone() };
                    p = self.access(p, &cmd, MemErrKind::NullFree, MemErrKind::DoubleFree, line);
                }
                StmtKind::If { cond, then, els } => {
                    let c = self.truth(&p, cond);
                    for (digit, body, guard) in [(1u8, then, c.clone()), (2u8, els, Pure::not(c))] {
                        if guard == Pure::ff() {
                            continue;
                        }
                        let mut q = p.clone();
                        if guard != Pure::tt() {
                            q.pure.push(guard);
                        }
                        q.label.push(digit);
                        let mut st = stack.clone();
                        st.push(body);
                        self.run(q, st)?;
                    }
                    return Ok(());
                }
                StmtKind::Assume(c) => {
                    let g = self.truth(&p, c);
                    if g == Pure::ff() {
                        return Ok(());
                    }
                    p.pure.push(g);
                }
                StmtKind::Return(es) => {
                    if es.len() != self.results.len() {
                        return Err(ill(line, "wrong number of return values"));
                    }
                    for (r, e) in self.results.clone().iter().zip(es) {
                        self.assign(&mut p, r, e, line)?;
                    }
                    self.finish(p);
                    return Ok(());
                }
                StmtKind::Error => {
                    p.pure.push(Pure::eq_const(&Var::eps(), 1));
                    self.emit(p, BranchKind::Assert { line }, false, None);
                    return Ok(());
                }
                StmtKind::While { .. } | StmtKind::Block(_) => return Err(ill(line, "loop or block in normalized code")),
            }
        }
    }

    /// Emit the error outcomes of a memory command and return the path
    /// that continues.
    fn access(&mut self, p: Path, cmd: &MemCmd, null: MemErrKind, dangl: MemErrKind, line: u32) -> Path {
        let [d, n, ok] = memory_disjuncts(cmd, p.k);
        for (extra, kind) in [(d, dangl), (n, null)] {
            let mut q = p.clone();
            q.pure.extend(extra);
            self.emit(q, BranchKind::Mem { kind, line }, false, None);
        }
        let mut q = p;
        q.pure.extend(ok);
        q.k += 1;
        q
    }

    fn load(&mut self, p: &Path, base: &Expr, f: &str, x: &Var, line: u32) -> Result<Option<Path>, EncodeError> {
        let Expr::Var(y) = base else { return Err(ill(line, "load through a non-variable")) };
        let cmd = MemCmd::Load { base: y.clone(), field: f.into(), target: x.clone() };
        let mut q = self.access(p.clone(), &cmd, MemErrKind::NullDeref, MemErrKind::DanglingDeref, line);
        q.defs.remove(x);
        Ok(Some(q))
    }

    fn assign(&mut self, p: &mut Path, x: &Var, rhs: &Expr, line: u32) -> Result<(), EncodeError> {
        let xt = self.ty(x);
        match rhs {
            Expr::Int(_) | Expr::Bool(_) | Expr::Null | Expr::Var(_) => {
                if xt == Type::Bool {
                    let c = self.truth(p, rhs);
                    self.define_bool(p, x, c);
                } else if xt.is_ptr() {
                    match rhs {
                        Expr::Null => p.pure.push(Pure::EqNull(x.clone())),
                        Expr::Var(y) => p.pure.push(Pure::eq_vars(x, y)),
                        _ => return Err(ill(line, "non-pointer assigned to a pointer")),
                    }
                } else {
                    p.pure.push(Pure::Eq(Term::var(x), self.term(rhs, line)?));
                }
            }
            Expr::Bin(op, a, b) if op.is_cmp() => {
                let c = self.compare(p, *op, a, b, line)?;
                self.define_bool(p, x, c);
            }
            Expr::Bin(op, a, b) => {
                let (ta, tb) = (self.term(a, line)?, self.term(b, line)?);
                let t = match op {
                    BinOp::Add => Term::add(ta, tb),
                    BinOp::Sub => Term::sub(ta, tb),
                    BinOp::Mul => match (ta, tb) {
                        (Term::Const(k), t) | (t, Term::Const(k)) => Term::mul(k, t),
                        _ => return Err(ill(line, "non-linear multiplication")),
                    },
                    _ => return Err(ill(line, "unexpected operator")),
                };
                p.pure.push(Pure::Eq(Term::var(x), t));
            }
            Expr::Un(UnOp::Neg, a) => {
                let t = Term::neg(self.term(a, line)?);
                p.pure.push(Pure::Eq(Term::var(x), t));
            }
            Expr::Un(UnOp::Not, a) => {
                let c = Pure::not(self.truth(p, a));
                self.define_bool(p, x, c);
            }
            Expr::New(c, args) => {
                let d = self.prog.data(c).ok_or_else(|| ill(line, "unknown data type"))?;
                let mut fields = Vec::new();
                for ((_, f), a) in d.fields.iter().zip(args) {
                    fields.push((f.as_str(), self.atom_var(p, a, line)?));
                }
                p.spatial.push(HeapAtom::points_to(x, c, fields));
            }
            Expr::Field(..) | Expr::Call(..) => return Err(ill(line, "nested memory access or call")),
        }
        Ok(())
    }

    /// Encode a call. Returns the path that continues after a successful
    /// return, or `None` when the call ends every path.
    fn call(&mut self, p: &mut Path, lhs: &[Var], f: &str, args: &[Expr], tail: bool, line: u32) -> Result<Option<Path>, EncodeError> {
        let callee = self.prog.proc(f).ok_or_else(|| ill(line, "unknown procedure"))?;
        let mut actuals = Vec::new();
        for a in args {
            actuals.push(self.atom_var(p, a, line)?);
        }
        let mut outs: Vec<Var> = lhs.to_vec();
        while outs.len() < callee.ret.len() {
            outs.push(self.fresh("_r"));
        }
        let e = if tail && !self.is_main { Var::eps() } else { self.fresh("_e") };
        actuals.extend(outs.iter().cloned());
        actuals.push(e.clone());
        // one more unfolding below the occurrence being expanded
        let mut inst = PredInst::new(f, actuals, p.n, 1);
        inst.at = p.k;
        p.n += 1;
        p.spatial.push(HeapAtom::Pred(inst));
        for x in &outs {
            p.defs.remove(x);
        }
        if tail {
            p.pass = Some(e);
            return Ok(Some(p.clone()));
        }
        let mut err = p.clone();
        err.pure.push(Pure::eq_const(&e, 1));
        err.pure.push(Pure::eq_const(&Var::eps(), 1));
        self.emit(err, BranchKind::CalleeFail, false, None);
        p.pure.push(Pure::eq_const(&e, 0));
        Ok(Some(p.clone()))
    }

    fn finish(&mut self, p: Path) {
        let eps = Var::eps();
        match (p.pass.clone(), self.is_main) {
            (Some(_), false) => self.emit(p, BranchKind::Pass, false, None),
            (Some(e), true) => {
                let mut ok = p.clone();
                ok.pure.push(Pure::eq_const(&e, 0));
                ok.pure.push(Pure::eq_const(&eps, 0));
                self.emit(ok, BranchKind::Ok, false, None);
                let mut bad = p;
                bad.pure.push(Pure::eq_const(&eps, 1));
                self.emit(bad, BranchKind::Leak, true, Some(e));
            }
            (None, main) => {
                let mut ok = p.clone();
                ok.pure.push(Pure::eq_const(&eps, 0));
                self.emit(ok, BranchKind::Ok, false, None);
                if main {
                    let mut bad = p;
                    bad.pure.push(Pure::eq_const(&eps, 1));
                    self.emit(bad, BranchKind::Leak, true, None);
                }
            }
        }
    }

    fn emit(&mut self, p: Path, kind: BranchKind, nonempty: bool, guard: Option<Var>) {
        let h = SymbolicHeap { ex_vars: vec![], spatial: p.spatial, pure: p.pure, nonempty, leak_guard: guard, label: p.label };
        let heap = close(h, &self.keep);
        self.out.push(Branch { heap, kind });
    }
}

/// Eliminate variable-variable equalities that involve a local and
/// quantify every variable that is not an interface variable.
fn close(mut h: SymbolicHeap, keep: &BTreeSet<Var>) -> SymbolicHeap {
    loop {
        let mut seen = BTreeSet::new();
        h.pure.retain(|q| seen.insert(q.clone()));
        h.pure.retain(|q| !matches!(q, Pure::Eq(a, b) if a == b));
        let hit = h.pure.iter().position(|q| match q {
            Pure::Eq(Term::Var(a), Term::Var(b)) => !keep.contains(a) || !keep.contains(b),
            _ => false,
        });
        let Some(i) = hit else { break };
        let Pure::Eq(Term::Var(a), Term::Var(b)) = h.pure.remove(i) else { unreachable!() };
        let (gone, stays) = if !keep.contains(&b) { (b, a) } else { (a, b) };
        h = h.rename(&HashMap::from([(gone, stays)]));
    }
    let mut order = Vec::new();
    for a in &h.spatial {
        order.extend(a.vars());
    }
    for q in &h.pure {
        order.extend(crate::sl::heap::ordered_vars(q));
    }
    order.extend(h.leak_guard.iter().cloned());
    let mut seen = BTreeSet::new();
    h.ex_vars = order.into_iter().filter(|v| !keep.contains(v) && seen.insert(v.clone())).collect();
    h
}
