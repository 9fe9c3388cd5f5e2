//! Abstract syntax shared by parsed and normalized programs.
//!
//! The normalized form is a restriction of the same tree: no `While`, no
//! `&&`/`||`, every operand of a compound expression is an atom, and every
//! condition is a variable.

use std::collections::BTreeMap;
use std::fmt;

use crate::sl::Var;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Int,
    Bool,
    Void,
    Data(String),
}

impl Type {
    pub fn is_ptr(&self) -> bool {
        matches!(self, Type::Data(_))
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => write!(f, "int"),
            Type::Bool => write!(f, "bool"),
            Type::Void => write!(f, "void"),
            Type::Data(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn is_cmp(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Null,
    Var(Var),
    Field(Box<Expr>, String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Un(UnOp, Box<Expr>),
    Call(String, Vec<Expr>),
    New(String, Vec<Expr>),
}

impl Expr {
    pub fn is_atom(&self) -> bool {
        matches!(self, Expr::Int(_) | Expr::Bool(_) | Expr::Null | Expr::Var(_))
    }

    pub fn var(v: &Var) -> Expr {
        Expr::Var(v.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    /// Without an initializer pointers start dangling and scalars at 0.
    /// Normalized programs only contain declarations without initializer.
    Decl { ty: Type, var: Var, init: Option<Expr> },
    /// `lhs = rhs`; more than one target only for calls of extracted loops.
    Assign { lhs: Vec<Var>, rhs: Expr },
    Store { base: Expr, field: String, rhs: Expr },
    Free(Expr),
    If { cond: Expr, then: Vec<Stmt>, els: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
    Return(Vec<Expr>),
    /// Reaching this statement is a failed assertion.
    Error,
    Assume(Expr),
    /// Expression statement (a call whose result is dropped).
    Eval(Expr),
    Block(Vec<Stmt>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataDecl {
    pub name: String,
    pub fields: Vec<(Type, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proc {
    /// Empty for `void`; several entries for extracted loops.
    pub ret: Vec<Type>,
    pub name: String,
    pub params: Vec<(Type, Var)>,
    pub body: Vec<Stmt>,
    pub line: u32,
    /// Declared type of every variable name used in the body.
    pub types: BTreeMap<String, Type>,
    /// Set on procedures produced from a `while` loop.
    pub loop_line: Option<u32>,
}

impl Proc {
    pub fn type_of(&self, v: &Var) -> Option<&Type> {
        self.types.get(&*v.name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Program {
    pub datas: Vec<DataDecl>,
    pub procs: Vec<Proc>,
}

impl Program {
    pub fn proc(&self, name: &str) -> Option<&Proc> {
        self.procs.iter().find(|p| p.name == name)
    }

    pub fn data(&self, name: &str) -> Option<&DataDecl> {
        self.datas.iter().find(|d| d.name == name)
    }

    pub fn main(&self) -> Option<&Proc> {
        self.proc("main")
    }
}

/// Visit every statement, depth first, in source order.
pub fn walk_stmts<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in body {
        f(s);
        match &s.kind {
            StmtKind::If { then, els, .. } => {
                walk_stmts(then, f);
                walk_stmts(els, f);
            }
            StmtKind::While { body, .. } | StmtKind::Block(body) => walk_stmts(body, f),
            _ => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, xs: &[Expr]| -> fmt::Result {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{x}")?;
            }
            Ok(())
        };
        match self {
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Null => write!(f, "null"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Field(b, n) => write!(f, "{b}->{n}"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Un(UnOp::Neg, a) => write!(f, "-{a}"),
            Expr::Un(UnOp::Not, a) => write!(f, "!{a}"),
            Expr::Call(n, args) => {
                write!(f, "{n}(")?;
                list(f, args)?;
                write!(f, ")")
            }
            Expr::New(n, args) => {
                write!(f, "new {n}(")?;
                list(f, args)?;
                write!(f, ")")
            }
        }
    }
}

fn write_block(f: &mut fmt::Formatter<'_>, body: &[Stmt], depth: usize) -> fmt::Result {
    for s in body {
        write_stmt(f, s, depth)?;
    }
    Ok(())
}

fn write_stmt(f: &mut fmt::Formatter<'_>, s: &Stmt, depth: usize) -> fmt::Result {
    let pad = "  ".repeat(depth);
    match &s.kind {
        StmtKind::Decl { ty, var, init: None } => writeln!(f, "{pad}{ty} {var};"),
        StmtKind::Decl { ty, var, init: Some(e) } => writeln!(f, "{pad}{ty} {var} = {e};"),
        StmtKind::Assign { lhs, rhs } => {
            let names: Vec<String> = lhs.iter().map(|v| v.to_string()).collect();
            if names.len() == 1 {
                writeln!(f, "{pad}{} = {rhs};", names[0])
            } else {
                writeln!(f, "{pad}({}) = {rhs};", names.join(", "))
            }
        }
        StmtKind::Store { base, field, rhs } => writeln!(f, "{pad}{base}->{field} = {rhs};"),
        StmtKind::Free(e) => writeln!(f, "{pad}free({e});"),
        StmtKind::If { cond, then, els } => {
            writeln!(f, "{pad}if ({cond}) {{")?;
            write_block(f, then, depth + 1)?;
            if !els.is_empty() {
                writeln!(f, "{pad}}} else {{")?;
                write_block(f, els, depth + 1)?;
            }
            writeln!(f, "{pad}}}")
        }
        StmtKind::While { cond, body } => {
            writeln!(f, "{pad}while ({cond}) {{")?;
            write_block(f, body, depth + 1)?;
            writeln!(f, "{pad}}}")
        }
        StmtKind::Return(es) => {
            let vals: Vec<String> = es.iter().map(|e| e.to_string()).collect();
            match vals.len() {
                0 => writeln!(f, "{pad}return;"),
                1 => writeln!(f, "{pad}return {};", vals[0]),
                _ => writeln!(f, "{pad}return ({});", vals.join(", ")),
            }
        }
        StmtKind::Error => writeln!(f, "{pad}ERROR();"),
        StmtKind::Assume(e) => writeln!(f, "{pad}assume({e});"),
        StmtKind::Eval(e) => writeln!(f, "{pad}{e};"),
        StmtKind::Block(b) => {
            writeln!(f, "{pad}{{")?;
            write_block(f, b, depth + 1)?;
            writeln!(f, "{pad}}}")
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.datas {
            let fs: Vec<String> = d.fields.iter().map(|(t, n)| format!("{t} {n};")).collect();
            writeln!(f, "data {} {{ {} }}", d.name, fs.join(" "))?;
        }
        for p in &self.procs {
            let ret: Vec<String> = p.ret.iter().map(|t| t.to_string()).collect();
            let ret = match ret.len() {
                0 => "void".to_string(),
                1 => ret[0].clone(),
                _ => format!("({})", ret.join(", ")),
            };
            let params: Vec<String> = p.params.iter().map(|(t, v)| format!("{t} {v}")).collect();
            writeln!(f, "{ret} {}({}) {{", p.name, params.join(", "))?;
            write_block(f, &p.body, 1)?;
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}
