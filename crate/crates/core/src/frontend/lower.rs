//! Normalization to the analyzable form.
//!
//! Two passes. The first turns every `while` at line `L` into a tail
//! recursive procedure `loop_L` whose parameters are the outer variables the
//! loop touches and whose return tuple holds the ones it modifies. The
//! second flattens expressions into three-address statements over fresh
//! temporaries, hoists conditions into boolean variables, and renames every
//! assignment target to a new version. Where an `if` joins, each live branch
//! ends with a copy into a common version, so every version is assigned at
//! most once along any path.

use std::collections::{BTreeMap, HashMap};

use super::ast::*;
use super::check::{field_type, signatures, Sig};
use super::FrontendError;
use crate::sl::Var;

pub fn to_core(prog: &Program) -> Result<Program, FrontendError> {
    let mut staged = Vec::new();
    let mut taken: Vec<String> = prog.procs.iter().map(|p| p.name.clone()).collect();
    for p in &prog.procs {
        let mut loops = Vec::new();
        let body = extract(p, &p.body, &mut loops, &mut taken)?;
        staged.push(Proc { body, ..p.clone() });
        staged.extend(loops);
    }
    let staged = Program { datas: prog.datas.clone(), procs: staged };
    let sigs = signatures(&staged);
    let mut procs = Vec::new();
    for p in &staged.procs {
        procs.push(Ssa::run(&staged, &sigs, p)?);
    }
    Ok(Program { datas: prog.datas.clone(), procs })
}

// ---------------------------------------------------------------------------
// loop extraction

#[derive(Default)]
struct Touch {
    /// Names in order of first occurrence.
    order: Vec<String>,
    written: Vec<String>,
    declared: Vec<String>,
}

impl Touch {
    fn note(&mut self, n: &str) {
        if !self.order.iter().any(|o| o == n) {
            self.order.push(n.into());
        }
    }

    fn write(&mut self, n: &str) {
        self.note(n);
        if !self.written.iter().any(|o| o == n) {
            self.written.push(n.into());
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Var(v) => self.note(&v.name),
            Expr::Int(_) | Expr::Bool(_) | Expr::Null => {}
            Expr::Field(b, _) | Expr::Un(_, b) => self.expr(b),
            Expr::Bin(_, a, b) => {
                self.expr(a);
                self.expr(b);
            }
            Expr::Call(_, args) | Expr::New(_, args) => args.iter().for_each(|a| self.expr(a)),
        }
    }

    fn stmts(&mut self, body: &[Stmt]) {
        for s in body {
            match &s.kind {
                StmtKind::Decl { var, init, .. } => {
                    if let Some(e) = init {
                        self.expr(e);
                    }
                    self.declared.push(var.name.to_string());
                    self.note(&var.name);
                }
                StmtKind::Assign { lhs, rhs } => {
                    self.expr(rhs);
                    lhs.iter().for_each(|v| self.write(&v.name));
                }
                StmtKind::Store { base, rhs, .. } => {
                    self.expr(base);
                    self.expr(rhs);
                }
                StmtKind::Free(e) | StmtKind::Assume(e) | StmtKind::Eval(e) => self.expr(e),
                StmtKind::Return(es) => es.iter().for_each(|e| self.expr(e)),
                StmtKind::If { cond, then, els } => {
                    self.expr(cond);
                    self.stmts(then);
                    self.stmts(els);
                }
                StmtKind::While { cond, body } => {
                    self.expr(cond);
                    self.stmts(body);
                }
                StmtKind::Block(b) => self.stmts(b),
                StmtKind::Error => {}
            }
        }
    }
}

fn extract(owner: &Proc, body: &[Stmt], out: &mut Vec<Proc>, taken: &mut Vec<String>) -> Result<Vec<Stmt>, FrontendError> {
    let mut res = Vec::new();
    for s in body {
        let kind = match &s.kind {
            StmtKind::If { cond, then, els } => StmtKind::If {
                cond: cond.clone(),
                then: extract(owner, then, out, taken)?,
                els: extract(owner, els, out, taken)?,
            },
            StmtKind::Block(b) => StmtKind::Block(extract(owner, b, out, taken)?),
            StmtKind::While { cond, body } => {
                // inner loops first, so the outer body sees their calls
                let mut inner = Vec::new();
                let body = extract(owner, body, &mut inner, taken)?;
                let mut t = Touch::default();
                t.expr(cond);
                t.stmts(&body);
                let local = |n: &String| t.declared.contains(n);
                let ins: Vec<String> = t.order.iter().filter(|n| !local(n)).cloned().collect();
                let outs: Vec<String> = t.written.iter().filter(|n| !local(n)).cloned().collect();
                let mut name = format!("loop_{}", s.line);
                let mut k = 2;
                while taken.contains(&name) {
                    name = format!("loop_{}_{k}", s.line);
                    k += 1;
                }
                taken.push(name.clone());
                let var = |n: &String| Var::named(n);
                let call = Expr::Call(name.clone(), ins.iter().map(|n| Expr::Var(var(n))).collect());
                let invoke = if outs.is_empty() {
                    StmtKind::Eval(call)
                } else {
                    StmtKind::Assign { lhs: outs.iter().map(var).collect(), rhs: call }
                };
                let ret = StmtKind::Return(outs.iter().map(|n| Expr::Var(var(n))).collect());
                let at = |kind| Stmt { kind, line: s.line };
                let mut then = body;
                then.push(at(invoke.clone()));
                then.push(at(ret.clone()));
                let lp = Proc {
                    ret: outs.iter().map(|n| owner.types[n].clone()).collect(),
                    name,
                    params: ins.iter().map(|n| (owner.types[n].clone(), var(n))).collect(),
                    body: vec![at(StmtKind::If { cond: cond.clone(), then, els: vec![at(ret)] })],
                    line: s.line,
                    types: owner.types.clone(),
                    loop_line: Some(s.line),
                };
                out.push(lp);
                out.extend(inner);
                invoke
            }
            k => k.clone(),
        };
        res.push(Stmt { kind, line: s.line });
    }
    Ok(res)
}

// ---------------------------------------------------------------------------
// flattening and renaming

struct Ssa<'a> {
    prog: &'a Program,
    sigs: &'a BTreeMap<String, Sig>,
    types: BTreeMap<String, Type>,
    counters: HashMap<String, u32>,
    env: HashMap<String, Var>,
    temps: u32,
    line: u32,
}

impl<'a> Ssa<'a> {
    fn run(prog: &'a Program, sigs: &'a BTreeMap<String, Sig>, p: &Proc) -> Result<Proc, FrontendError> {
        let mut s = Ssa {
            prog,
            sigs,
            types: p.types.clone(),
            counters: HashMap::new(),
            env: HashMap::new(),
            temps: 0,
            line: p.line,
        };
        for (_, v) in &p.params {
            s.counters.insert(v.name.to_string(), 0);
            s.env.insert(v.name.to_string(), v.clone());
        }
        let mut body = Vec::new();
        s.block(&p.body, &mut body)?;
        Ok(Proc { body, types: s.types, ..p.clone() })
    }

    fn fresh(&mut self, name: &str) -> Var {
        let c = self.counters.entry(name.to_string()).or_insert(0);
        *c += 1;
        let v = Var::new(name, *c);
        self.env.insert(name.to_string(), v.clone());
        v
    }

    fn temp(&mut self, prefix: &str, ty: Type) -> Var {
        self.temps += 1;
        let name = format!("_{prefix}{}", self.temps);
        self.types.insert(name.clone(), ty);
        self.fresh(&name)
    }

    fn emit(&self, out: &mut Vec<Stmt>, kind: StmtKind) {
        out.push(Stmt { kind, line: self.line });
    }

    fn ty(&self, e: &Expr) -> Type {
        match e {
            Expr::Int(_) | Expr::Un(UnOp::Neg, _) => Type::Int,
            Expr::Bool(_) | Expr::Un(UnOp::Not, _) => Type::Bool,
            Expr::Null => Type::Data(String::new()),
            Expr::Var(v) => self.types[&*v.name].clone(),
            Expr::Field(b, f) => match self.ty(b) {
                Type::Data(d) => field_type(self.prog, &d, f).expect("checked field"),
                _ => unreachable!("checked field access"),
            },
            Expr::Bin(op, _, _) if op.is_cmp() || matches!(op, BinOp::And | BinOp::Or) => Type::Bool,
            Expr::Bin(..) => Type::Int,
            Expr::Call(f, _) => self.sigs[f].ret.first().cloned().unwrap_or(Type::Void),
            Expr::New(c, _) => Type::Data(c.clone()),
        }
    }

    fn cur(&self, v: &Var) -> Var {
        self.env.get(&*v.name).cloned().unwrap_or_else(|| v.clone())
    }

    /// Lower `e` to an atom, spilling into a temporary when needed.
    fn atom(&mut self, e: &Expr, out: &mut Vec<Stmt>) -> Result<Expr, FrontendError> {
        Ok(match e {
            Expr::Int(_) | Expr::Bool(_) | Expr::Null => e.clone(),
            Expr::Var(v) => Expr::Var(self.cur(v)),
            _ => {
                let ty = self.ty(e);
                let rhs = self.rhs(e, out)?;
                if let Expr::Var(v) = &rhs {
                    return Ok(Expr::Var(v.clone()));
                }
                let t = self.temp("t", ty);
                self.emit(out, StmtKind::Assign { lhs: vec![t.clone()], rhs });
                Expr::Var(t)
            }
        })
    }

    fn var_of(&mut self, e: &Expr, out: &mut Vec<Stmt>) -> Result<Var, FrontendError> {
        match self.atom(e, out)? {
            Expr::Var(v) => Ok(v),
            a => {
                let t = self.temp("t", self.ty(e));
                self.emit(out, StmtKind::Assign { lhs: vec![t.clone()], rhs: a });
                Ok(t)
            }
        }
    }

    /// Lower `e` to a right-hand side with atomic operands.
    fn rhs(&mut self, e: &Expr, out: &mut Vec<Stmt>) -> Result<Expr, FrontendError> {
        Ok(match e {
            Expr::Int(_) | Expr::Bool(_) | Expr::Null | Expr::Var(_) => self.atom(e, out)?,
            Expr::Field(b, f) => Expr::Field(Box::new(Expr::Var(self.var_of(b, out)?)), f.clone()),
            Expr::Bin(BinOp::And | BinOp::Or, ..) => Expr::Var(self.cond(e, out)?),
            Expr::Bin(op, a, b) => {
                let a = self.atom(a, out)?;
                let b = self.atom(b, out)?;
                Expr::Bin(*op, Box::new(a), Box::new(b))
            }
            Expr::Un(UnOp::Neg, a) => Expr::Un(UnOp::Neg, Box::new(self.atom(a, out)?)),
            Expr::Un(UnOp::Not, a) => Expr::Un(UnOp::Not, Box::new(Expr::Var(self.cond(a, out)?))),
            Expr::Call(f, args) => {
                let args = args.iter().map(|a| self.atom(a, out)).collect::<Result<_, _>>()?;
                Expr::Call(f.clone(), args)
            }
            Expr::New(c, args) => {
                let args = args.iter().map(|a| self.atom(a, out)).collect::<Result<_, _>>()?;
                Expr::New(c.clone(), args)
            }
        })
    }

    /// Pointers and integers used as conditions compare against null or 0.
    fn as_bool(&self, e: &Expr) -> Expr {
        match self.ty(e) {
            Type::Data(_) => Expr::Bin(BinOp::Ne, Box::new(e.clone()), Box::new(Expr::Null)),
            Type::Int => Expr::Bin(BinOp::Ne, Box::new(e.clone()), Box::new(Expr::Int(0))),
            _ => e.clone(),
        }
    }

    /// Lower a condition to a boolean variable.
    fn cond(&mut self, e: &Expr, out: &mut Vec<Stmt>) -> Result<Var, FrontendError> {
        let e = self.as_bool(e);
        match &e {
            Expr::Var(v) => Ok(self.cur(v)),
            Expr::Bin(op @ (BinOp::And | BinOp::Or), a, b) => {
                // short circuit: c = a; if (c) c = b;   or   if (!c) c = b
                let c = self.temp("c", Type::Bool);
                let cname = Var::named(&c.name);
                let a_var = self.cond(a, out)?;
                self.emit(out, StmtKind::Assign { lhs: vec![c.clone()], rhs: Expr::Var(a_var) });
                let second = vec![Stmt { kind: StmtKind::Assign { lhs: vec![cname.clone()], rhs: self.as_bool(b) }, line: self.line }];
                let (then, els) = if *op == BinOp::And { (second, vec![]) } else { (vec![], second) };
                let test = Expr::Var(cname.clone());
                self.stmt(&Stmt { kind: StmtKind::If { cond: test, then, els }, line: self.line }, out)?;
                Ok(self.cur(&cname))
            }
            _ => {
                let rhs = self.rhs(&e, out)?;
                if let Expr::Var(v) = rhs {
                    return Ok(v);
                }
                let c = self.temp("c", Type::Bool);
                self.emit(out, StmtKind::Assign { lhs: vec![c.clone()], rhs });
                Ok(c)
            }
        }
    }

    /// Returns true when the block cannot fall through.
    fn block(&mut self, body: &[Stmt], out: &mut Vec<Stmt>) -> Result<bool, FrontendError> {
        for s in body {
            if self.stmt(s, out)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<Stmt>) -> Result<bool, FrontendError> {
        self.line = s.line;
        match &s.kind {
            StmtKind::Decl { ty, var, init: None } => {
                let v = self.fresh(&var.name);
                self.emit(out, StmtKind::Decl { ty: ty.clone(), var: v, init: None });
            }
            StmtKind::Decl { var, init: Some(e), .. } => {
                let rhs = self.rhs(e, out)?;
                let v = self.fresh(&var.name);
                self.emit(out, StmtKind::Assign { lhs: vec![v], rhs });
            }
            StmtKind::Assign { lhs, rhs } => {
                let rhs = self.rhs(rhs, out)?;
                let lhs = lhs.iter().map(|v| self.fresh(&v.name)).collect();
                self.emit(out, StmtKind::Assign { lhs, rhs });
            }
            StmtKind::Store { base, field, rhs } => {
                let b = self.var_of(base, out)?;
                let r = self.atom(rhs, out)?;
                self.emit(out, StmtKind::Store { base: Expr::Var(b), field: field.clone(), rhs: r });
            }
            StmtKind::Free(e) => {
                let v = self.var_of(e, out)?;
                self.emit(out, StmtKind::Free(Expr::Var(v)));
            }
            StmtKind::Assume(e) => {
                let c = self.cond(e, out)?;
                self.emit(out, StmtKind::Assume(Expr::Var(c)));
            }
            StmtKind::Eval(e) => {
                let rhs = self.rhs(e, out)?;
                if self.ty(e) == Type::Void {
                    self.emit(out, StmtKind::Eval(rhs));
                } else {
                    let t = self.temp("t", self.ty(e));
                    self.emit(out, StmtKind::Assign { lhs: vec![t], rhs });
                }
            }
            StmtKind::Return(es) => {
                let vals = es.iter().map(|e| self.atom(e, out)).collect::<Result<_, _>>()?;
                self.emit(out, StmtKind::Return(vals));
                return Ok(true);
            }
            StmtKind::Error => {
                self.emit(out, StmtKind::Error);
                return Ok(true);
            }
            StmtKind::Block(b) => return self.block(b, out),
            StmtKind::If { cond, then, els } => {
                let c = self.cond(cond, out)?;
                self.line = s.line;
                let before = self.env.clone();
                let mut tb = Vec::new();
                let t_done = self.block(then, &mut tb)?;
                let t_env = std::mem::replace(&mut self.env, before.clone());
                let mut eb = Vec::new();
                let e_done = self.block(els, &mut eb)?;
                let e_env = std::mem::replace(&mut self.env, before.clone());
                self.line = s.line;
                let mut names: Vec<&String> = before.keys().collect();
                names.sort();
                for n in names {
                    let (vt, ve) = (&t_env[n], &e_env[n]);
                    let merged = match (t_done, e_done) {
                        (true, true) => before[n].clone(),
                        (true, false) => ve.clone(),
                        (false, true) => vt.clone(),
                        (false, false) if vt == ve => vt.clone(),
                        (false, false) => {
                            let j = self.fresh(n);
                            self.emit(&mut tb, StmtKind::Assign { lhs: vec![j.clone()], rhs: Expr::Var(vt.clone()) });
                            self.emit(&mut eb, StmtKind::Assign { lhs: vec![j.clone()], rhs: Expr::Var(ve.clone()) });
                            j
                        }
                    };
                    self.env.insert(n.clone(), merged);
                }
                self.emit(out, StmtKind::If { cond: Expr::Var(c), then: tb, els: eb });
                return Ok(t_done && e_done);
            }
            StmtKind::While { .. } => unreachable!("loops are extracted before renaming"),
        }
        Ok(false)
    }
}

/// Check the single-assignment property: along every path through each
/// procedure no version is assigned twice. Returns the offending variable.
pub fn ssa_violation(prog: &Program) -> Option<(String, Var)> {
    fn go(body: &[Stmt], seen: &mut Vec<Var>) -> Option<Var> {
        for (i, s) in body.iter().enumerate() {
            let targets: Vec<Var> = match &s.kind {
                StmtKind::Decl { var, .. } => vec![var.clone()],
                StmtKind::Assign { lhs, .. } => lhs.clone(),
                _ => vec![],
            };
            for t in targets {
                if seen.contains(&t) {
                    return Some(t);
                }
                seen.push(t);
            }
            if let StmtKind::If { then, els, .. } = &s.kind {
                let rest = &body[i + 1..];
                for branch in [then, els] {
                    let mut path = seen.clone();
                    let mut joined = branch.clone();
                    joined.extend(rest.iter().cloned());
                    if let Some(v) = go(&joined, &mut path) {
                        return Some(v);
                    }
                }
                return None;
            }
            if let StmtKind::Block(b) = &s.kind {
                let mut joined = b.clone();
                joined.extend(body[i + 1..].iter().cloned());
                return go(&joined, seen);
            }
        }
        None
    }
    for p in &prog.procs {
        let mut seen: Vec<Var> = p.params.iter().map(|(_, v)| v.clone()).collect();
        if let Some(v) = go(&p.body, &mut seen) {
            return Some((p.name.clone(), v));
        }
    }
    None
}

/// True when the procedure bodies contain no loops, no short-circuit
/// operators and only atomic operands.
pub fn is_normalized(prog: &Program) -> bool {
    fn flat(e: &Expr) -> bool {
        match e {
            Expr::Field(b, _) => matches!(**b, Expr::Var(_)),
            Expr::Bin(BinOp::And | BinOp::Or, ..) => false,
            Expr::Bin(_, a, b) => a.is_atom() && b.is_atom(),
            Expr::Un(UnOp::Not, a) => matches!(**a, Expr::Var(_)),
            Expr::Un(_, a) => a.is_atom(),
            Expr::Call(_, args) | Expr::New(_, args) => args.iter().all(Expr::is_atom),
            _ => true,
        }
    }
    let mut ok = true;
    for p in &prog.procs {
        walk_stmts(&p.body, &mut |s| {
            ok &= match &s.kind {
                StmtKind::While { .. } | StmtKind::Block(_) => false,
                StmtKind::Decl { init, .. } => init.is_none(),
                StmtKind::Assign { rhs, .. } => flat(rhs),
                StmtKind::Store { base, rhs, .. } => matches!(base, Expr::Var(_)) && rhs.is_atom(),
                StmtKind::Free(e) | StmtKind::Assume(e) => matches!(e, Expr::Var(_)),
                StmtKind::If { cond, .. } => matches!(cond, Expr::Var(_)),
                StmtKind::Eval(e) => flat(e),
                StmtKind::Return(es) => es.iter().all(Expr::is_atom),
                StmtKind::Error => true,
            };
        });
    }
    ok
}
