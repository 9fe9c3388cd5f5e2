//! Name resolution and type checking. Fills `Proc::types`.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::FrontendError;

/// Expression type, with `null` compatible with every data type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Ty {
    T(Type),
    Null,
}

impl Ty {
    fn fits(&self, want: &Type) -> bool {
        match self {
            Ty::Null => want.is_ptr(),
            Ty::T(t) => t == want,
        }
    }

    fn is_ptr(&self) -> bool {
        matches!(self, Ty::Null) || matches!(self, Ty::T(t) if t.is_ptr())
    }

    fn show(&self) -> String {
        match self {
            Ty::Null => "null".into(),
            Ty::T(t) => t.to_string(),
        }
    }
}

pub(crate) struct Sig {
    pub params: Vec<Type>,
    pub ret: Vec<Type>,
}

pub(crate) fn signatures(prog: &Program) -> BTreeMap<String, Sig> {
    prog.procs
        .iter()
        .map(|p| (p.name.clone(), Sig { params: p.params.iter().map(|(t, _)| t.clone()).collect(), ret: p.ret.clone() }))
        .collect()
}

pub(crate) fn field_type(prog: &Program, data: &str, field: &str) -> Option<Type> {
    prog.data(data)?.fields.iter().find(|(_, f)| f == field).map(|(t, _)| t.clone())
}

struct Checker<'a> {
    prog: &'a Program,
    sigs: BTreeMap<String, Sig>,
    types: BTreeMap<String, Type>,
    scopes: Vec<BTreeSet<String>>,
    ret: Vec<Type>,
}

fn type_err<T>(line: u32, msg: impl Into<String>) -> Result<T, FrontendError> {
    Err(FrontendError::Type { line, msg: msg.into() })
}

impl Checker<'_> {
    fn in_scope(&self, n: &str) -> bool {
        self.scopes.iter().any(|s| s.contains(n))
    }

    fn declare(&mut self, line: u32, ty: &Type, name: &str) -> Result<(), FrontendError> {
        if self.types.contains_key(name) {
            return type_err(line, format!("`{name}` is declared twice"));
        }
        self.types.insert(name.into(), ty.clone());
        self.scopes.last_mut().expect("scope").insert(name.into());
        Ok(())
    }

    fn expr(&self, line: u32, e: &Expr) -> Result<Ty, FrontendError> {
        Ok(match e {
            Expr::Int(_) => Ty::T(Type::Int),
            Expr::Bool(_) => Ty::T(Type::Bool),
            Expr::Null => Ty::Null,
            Expr::Var(v) => {
                if !self.in_scope(&v.name) {
                    return type_err(line, format!("undeclared variable `{}`", v.name));
                }
                Ty::T(self.types[&*v.name].clone())
            }
            Expr::Field(base, f) => match self.expr(line, base)? {
                Ty::T(Type::Data(d)) => match field_type(self.prog, &d, f) {
                    Some(t) => Ty::T(t),
                    None => return type_err(line, format!("type `{d}` has no field `{f}`")),
                },
                t => return type_err(line, format!("field access on a value of type {}", t.show())),
            },
            Expr::Bin(op, a, b) => {
                let (ta, tb) = (self.expr(line, a)?, self.expr(line, b)?);
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        if ta.is_ptr() || tb.is_ptr() {
                            return Err(FrontendError::Unsupported { line, msg: "pointer arithmetic".into() });
                        }
                        if ta != Ty::T(Type::Int) || tb != Ty::T(Type::Int) {
                            return type_err(line, format!("`{}` needs int operands", op.symbol()));
                        }
                        if *op == BinOp::Mul && !matches!(**a, Expr::Int(_)) && !matches!(**b, Expr::Int(_)) {
                            return Err(FrontendError::Unsupported { line, msg: "non-linear multiplication".into() });
                        }
                        if op.is_cmp() {
                            Ty::T(Type::Bool)
                        } else {
                            Ty::T(Type::Int)
                        }
                    }
                    BinOp::Eq | BinOp::Ne => {
                        let ok = (ta.is_ptr() && tb.is_ptr() && compatible_ptrs(&ta, &tb)) || (ta == tb);
                        if !ok {
                            return type_err(line, format!("cannot compare {} with {}", ta.show(), tb.show()));
                        }
                        Ty::T(Type::Bool)
                    }
                    BinOp::And | BinOp::Or => {
                        truthy(line, &ta)?;
                        truthy(line, &tb)?;
                        Ty::T(Type::Bool)
                    }
                }
            }
            Expr::Un(UnOp::Neg, a) => {
                if self.expr(line, a)? != Ty::T(Type::Int) {
                    return type_err(line, "negation needs an int operand");
                }
                Ty::T(Type::Int)
            }
            Expr::Un(UnOp::Not, a) => {
                truthy(line, &self.expr(line, a)?)?;
                Ty::T(Type::Bool)
            }
            Expr::Call(f, args) => {
                let Some(sig) = self.sigs.get(f) else { return type_err(line, format!("unknown procedure `{f}`")) };
                self.args(line, f, &sig.params, args)?;
                match sig.ret.as_slice() {
                    [] => Ty::T(Type::Void),
                    [t] => Ty::T(t.clone()),
                    _ => return type_err(line, format!("`{f}` returns several values")),
                }
            }
            Expr::New(c, args) => {
                let Some(d) = self.prog.data(c) else { return type_err(line, format!("unknown type `{c}`")) };
                let want: Vec<Type> = d.fields.iter().map(|(t, _)| t.clone()).collect();
                self.args(line, c, &want, args)?;
                Ty::T(Type::Data(c.clone()))
            }
        })
    }

    fn args(&self, line: u32, what: &str, want: &[Type], args: &[Expr]) -> Result<(), FrontendError> {
        if want.len() != args.len() {
            return type_err(line, format!("`{what}` expects {} arguments, got {}", want.len(), args.len()));
        }
        for (t, a) in want.iter().zip(args) {
            let got = self.expr(line, a)?;
            if !got.fits(t) {
                return type_err(line, format!("argument of `{what}` has type {}, expected {t}", got.show()));
            }
        }
        Ok(())
    }

    fn cond(&self, line: u32, e: &Expr) -> Result<(), FrontendError> {
        truthy(line, &self.expr(line, e)?)
    }

    fn block(&mut self, body: &[Stmt], in_loop: bool) -> Result<(), FrontendError> {
        self.scopes.push(BTreeSet::new());
        for s in body {
            self.stmt(s, in_loop)?;
        }
        self.scopes.pop();
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, in_loop: bool) -> Result<(), FrontendError> {
        let line = s.line;
        match &s.kind {
            StmtKind::Decl { ty, var, init } => {
                if let Some(e) = init {
                    let t = self.expr(line, e)?;
                    if !t.fits(ty) {
                        return type_err(line, format!("cannot initialize {ty} with {}", t.show()));
                    }
                }
                self.declare(line, ty, &var.name)?;
            }
            StmtKind::Assign { lhs, rhs } => {
                let t = self.expr(line, rhs)?;
                let [v] = lhs.as_slice() else { return type_err(line, "multiple assignment") };
                if !self.in_scope(&v.name) {
                    return type_err(line, format!("undeclared variable `{}`", v.name));
                }
                let want = &self.types[&*v.name];
                if !t.fits(want) {
                    return type_err(line, format!("cannot assign {} to `{}` of type {want}", t.show(), v.name));
                }
            }
            StmtKind::Store { base, field, rhs } => {
                let want = match self.expr(line, &Expr::Field(Box::new(base.clone()), field.clone()))? {
                    Ty::T(t) => t,
                    Ty::Null => unreachable!("field types are never null"),
                };
                let t = self.expr(line, rhs)?;
                if !t.fits(&want) {
                    return type_err(line, format!("cannot store {} into field `{field}` of type {want}", t.show()));
                }
            }
            StmtKind::Free(e) => {
                if !matches!(self.expr(line, e)?, Ty::T(Type::Data(_))) {
                    return type_err(line, "free needs a pointer");
                }
            }
            StmtKind::If { cond, then, els } => {
                self.cond(line, cond)?;
                self.block(then, in_loop)?;
                self.block(els, in_loop)?;
            }
            StmtKind::While { cond, body } => {
                self.cond(line, cond)?;
                self.block(body, true)?;
            }
            StmtKind::Return(vals) => {
                if in_loop {
                    return Err(FrontendError::Unsupported { line, msg: "return inside a loop".into() });
                }
                match (self.ret.as_slice(), vals.as_slice()) {
                    ([], []) => {}
                    ([t], [e]) => {
                        let got = self.expr(line, e)?;
                        if !got.fits(t) {
                            return type_err(line, format!("returning {} from a procedure of type {t}", got.show()));
                        }
                    }
                    _ => return type_err(line, "return value does not match the procedure type"),
                }
            }
            StmtKind::Error => {}
            StmtKind::Assume(e) => self.cond(line, e)?,
            StmtKind::Eval(e) => {
                self.expr(line, e)?;
            }
            StmtKind::Block(b) => self.block(b, in_loop)?,
        }
        Ok(())
    }
}

fn compatible_ptrs(a: &Ty, b: &Ty) -> bool {
    match (a, b) {
        (Ty::T(x), Ty::T(y)) => x == y,
        _ => true,
    }
}

fn truthy(line: u32, t: &Ty) -> Result<(), FrontendError> {
    match t {
        Ty::T(Type::Void) => type_err(line, "void value used as a condition"),
        _ => Ok(()),
    }
}

/// True when every path through `body` ends in `return` or `ERROR()`.
pub(crate) fn terminates(body: &[Stmt]) -> bool {
    body.iter().any(|s| match &s.kind {
        StmtKind::Return(_) | StmtKind::Error => true,
        StmtKind::If { then, els, .. } => terminates(then) && terminates(els),
        StmtKind::Block(b) => terminates(b),
        _ => false,
    })
}

pub(crate) fn check_program(prog: &mut Program) -> Result<(), FrontendError> {
    let mut names = BTreeSet::new();
    for d in &prog.datas {
        if !names.insert(d.name.clone()) {
            return type_err(0, format!("type `{}` is declared twice", d.name));
        }
        let mut fs = BTreeSet::new();
        for (_, f) in &d.fields {
            if !fs.insert(f) {
                return type_err(0, format!("field `{f}` of `{}` is declared twice", d.name));
            }
        }
    }
    let mut pnames = BTreeSet::new();
    for p in &prog.procs {
        if !pnames.insert(p.name.clone()) {
            return type_err(p.line, format!("procedure `{}` is declared twice", p.name));
        }
    }
    let Some(main) = prog.main() else { return Err(FrontendError::MissingMain) };
    if let Some((_, v)) = main.params.iter().find(|(t, _)| t.is_ptr()) {
        return Err(FrontendError::Unsupported { line: main.line, msg: format!("pointer parameter `{}` of main", v.name) });
    }
    let mut all_types = Vec::new();
    for p in &prog.procs {
        let mut c = Checker { prog, sigs: signatures(prog), types: BTreeMap::new(), scopes: vec![BTreeSet::new()], ret: p.ret.clone() };
        for (t, v) in &p.params {
            c.declare(p.line, t, &v.name)?;
        }
        c.block(&p.body, false)?;
        if !p.ret.is_empty() && !terminates(&p.body) {
            return type_err(p.line, format!("`{}` may finish without returning a value", p.name));
        }
        all_types.push(c.types);
    }
    for (p, t) in prog.procs.iter_mut().zip(all_types) {
        p.types = t;
    }
    Ok(())
}
