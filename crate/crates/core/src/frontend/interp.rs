//! Bounded concrete interpreter, used as the reference semantics.
//!
//! Runs both parsed and normalized programs. Locations are handed out
//! sequentially from 1 and never reused; null is 0. Uninitialized pointers
//! hold a location that is never allocated, so any access through them is a
//! dangling dereference.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::ast::*;
use super::FrontendError;
use crate::sl::Var;

pub const DEFAULT_STEP_BOUND: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemErrKind {
    NullDeref,
    DanglingDeref,
    NullFree,
    DoubleFree,
}

impl fmt::Display for MemErrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemErrKind::NullDeref => "null-deref",
            MemErrKind::DanglingDeref => "dangling-deref",
            MemErrKind::NullFree => "null-free",
            MemErrKind::DoubleFree => "double-free",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Ok(i64),
    AssertErr { line: u32 },
    MemErr { kind: MemErrKind, line: u32 },
    Leak,
    Bound,
    /// An `assume` failed: the input is outside the program's domain.
    Blocked,
}

impl Outcome {
    pub fn is_error(&self) -> bool {
        matches!(self, Outcome::AssertErr { .. } | Outcome::MemErr { .. } | Outcome::Leak)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Ok(v) => write!(f, "OK({v})"),
            Outcome::AssertErr { line } => write!(f, "ASSERT_ERR(line {line})"),
            Outcome::MemErr { kind, line } => write!(f, "MEM_ERR({kind}, line {line})"),
            Outcome::Leak => write!(f, "LEAK"),
            Outcome::Bound => write!(f, "BOUND"),
            Outcome::Blocked => write!(f, "BLOCKED"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Value {
    Int(i64),
    Ptr(u64),
}

impl Value {
    fn int(self) -> i64 {
        match self {
            Value::Int(n) => n,
            Value::Ptr(p) => p as i64,
        }
    }

    fn truthy(self) -> bool {
        match self {
            Value::Int(n) => n != 0,
            Value::Ptr(p) => p != 0,
        }
    }
}

enum Flow {
    Normal,
    Ret(Vec<Value>),
}

type Run<T> = Result<T, Outcome>;

struct Machine<'p> {
    prog: &'p Program,
    heap: BTreeMap<u64, (String, Vec<Value>)>,
    next_loc: u64,
    next_wild: u64,
    steps: u64,
    bound: u64,
}

const WILD_BASE: u64 = 1 << 48;

impl Machine<'_> {
    fn tick(&mut self) -> Run<()> {
        self.steps += 1;
        if self.steps > self.bound {
            Err(Outcome::Bound)
        } else {
            Ok(())
        }
    }

    fn field_index(&self, ty: &str, f: &str) -> usize {
        let d = self.prog.data(ty).expect("checked type");
        d.fields.iter().position(|(_, n)| n == f).expect("checked field")
    }

    fn cell(&self, p: Value, line: u32) -> Run<u64> {
        match p {
            Value::Ptr(0) => Err(Outcome::MemErr { kind: MemErrKind::NullDeref, line }),
            Value::Ptr(l) if self.heap.contains_key(&l) => Ok(l),
            _ => Err(Outcome::MemErr { kind: MemErrKind::DanglingDeref, line }),
        }
    }

    fn eval(&mut self, env: &mut HashMap<Var, Value>, e: &Expr, line: u32) -> Run<Value> {
        Ok(match e {
            Expr::Int(n) => Value::Int(*n),
            Expr::Bool(b) => Value::Int(*b as i64),
            Expr::Null => Value::Ptr(0),
            Expr::Var(v) => *env.get(v).unwrap_or_else(|| panic!("unbound variable {v}")),
            Expr::Field(b, f) => {
                let p = self.eval(env, b, line)?;
                let l = self.cell(p, line)?;
                let (ty, vals) = &self.heap[&l];
                vals[self.field_index(ty, f)]
            }
            Expr::Bin(BinOp::And, a, b) => {
                let x = self.eval(env, a, line)?.truthy() && self.eval(env, b, line)?.truthy();
                Value::Int(x as i64)
            }
            Expr::Bin(BinOp::Or, a, b) => {
                let x = self.eval(env, a, line)?.truthy() || self.eval(env, b, line)?.truthy();
                Value::Int(x as i64)
            }
            Expr::Bin(op, a, b) => {
                let x = self.eval(env, a, line)?;
                let y = self.eval(env, b, line)?;
                let arith = |r: Option<i64>| r.map(Value::Int).ok_or(Outcome::Bound);
                match op {
                    BinOp::Add => arith(x.int().checked_add(y.int()))?,
                    BinOp::Sub => arith(x.int().checked_sub(y.int()))?,
                    BinOp::Mul => arith(x.int().checked_mul(y.int()))?,
                    BinOp::Eq => Value::Int((x.int() == y.int()) as i64),
                    BinOp::Ne => Value::Int((x.int() != y.int()) as i64),
                    BinOp::Lt => Value::Int((x.int() < y.int()) as i64),
                    BinOp::Le => Value::Int((x.int() <= y.int()) as i64),
                    BinOp::Gt => Value::Int((x.int() > y.int()) as i64),
                    BinOp::Ge => Value::Int((x.int() >= y.int()) as i64),
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
            Expr::Un(UnOp::Neg, a) => {
                let x = self.eval(env, a, line)?.int();
                Value::Int(x.checked_neg().ok_or(Outcome::Bound)?)
            }
            Expr::Un(UnOp::Not, a) => Value::Int(!self.eval(env, a, line)?.truthy() as i64),
            Expr::New(c, args) => {
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.eval(env, a, line)?);
                }
                let l = self.next_loc;
                self.next_loc += 1;
                self.heap.insert(l, (c.clone(), vals));
                Value::Ptr(l)
            }
            Expr::Call(f, args) => {
                let vs = self.call(env, f, args, line)?;
                vs.first().copied().unwrap_or(Value::Int(0))
            }
        })
    }

    fn call(&mut self, env: &mut HashMap<Var, Value>, f: &str, args: &[Expr], line: u32) -> Run<Vec<Value>> {
        let mut vals = Vec::new();
        for a in args {
            vals.push(self.eval(env, a, line)?);
        }
        self.invoke(f, vals)
    }

    fn invoke(&mut self, f: &str, vals: Vec<Value>) -> Run<Vec<Value>> {
        self.tick()?;
        let p = self.prog.proc(f).unwrap_or_else(|| panic!("unknown procedure {f}"));
        let mut frame: HashMap<Var, Value> = p.params.iter().map(|(_, v)| v.clone()).zip(vals).collect();
        match self.block(&mut frame, &p.body)? {
            Flow::Ret(vs) => Ok(vs),
            Flow::Normal => Ok(vec![]),
        }
    }

    fn block(&mut self, env: &mut HashMap<Var, Value>, body: &[Stmt]) -> Run<Flow> {
        for s in body {
            if let Flow::Ret(v) = self.stmt(env, s)? {
                return Ok(Flow::Ret(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, env: &mut HashMap<Var, Value>, s: &Stmt) -> Run<Flow> {
        self.tick()?;
        let line = s.line;
        match &s.kind {
            StmtKind::Decl { ty, var, init } => {
                let v = match init {
                    Some(e) => self.eval(env, e, line)?,
                    None if ty.is_ptr() => {
                        self.next_wild += 1;
                        Value::Ptr(WILD_BASE + self.next_wild)
                    }
                    None => Value::Int(0),
                };
                env.insert(var.clone(), v);
            }
            StmtKind::Assign { lhs, rhs } => {
                if let (Expr::Call(f, args), true) = (rhs, lhs.len() != 1) {
                    let vs = self.call(env, f, args, line)?;
                    for (v, x) in lhs.iter().zip(vs) {
                        env.insert(v.clone(), x);
                    }
                } else {
                    let x = self.eval(env, rhs, line)?;
                    env.insert(lhs[0].clone(), x);
                }
            }
            StmtKind::Store { base, field, rhs } => {
                let p = self.eval(env, base, line)?;
                let x = self.eval(env, rhs, line)?;
                let l = self.cell(p, line)?;
                let ty = self.heap[&l].0.clone();
                let i = self.field_index(&ty, field);
                self.heap.get_mut(&l).expect("live cell").1[i] = x;
            }
            StmtKind::Free(e) => match self.eval(env, e, line)? {
                Value::Ptr(0) => return Err(Outcome::MemErr { kind: MemErrKind::NullFree, line }),
                Value::Ptr(l) if self.heap.remove(&l).is_some() => {}
                _ => return Err(Outcome::MemErr { kind: MemErrKind::DoubleFree, line }),
            },
            StmtKind::If { cond, then, els } => {
                let c = self.eval(env, cond, line)?.truthy();
                return self.block(env, if c { then } else { els });
            }
            StmtKind::While { cond, body } => loop {
                if !self.eval(env, cond, line)?.truthy() {
                    break;
                }
                if let Flow::Ret(v) = self.block(env, body)? {
                    return Ok(Flow::Ret(v));
                }
                self.tick()?;
            },
            StmtKind::Return(es) => {
                let mut vs = Vec::new();
                for e in es {
                    vs.push(self.eval(env, e, line)?);
                }
                return Ok(Flow::Ret(vs));
            }
            StmtKind::Error => return Err(Outcome::AssertErr { line }),
            StmtKind::Assume(e) => {
                if !self.eval(env, e, line)?.truthy() {
                    return Err(Outcome::Blocked);
                }
            }
            StmtKind::Eval(e) => {
                self.eval(env, e, line)?;
            }
            StmtKind::Block(b) => return self.block(env, b),
        }
        Ok(Flow::Normal)
    }
}

/// Run `main` on integer inputs with a budget of `step_bound` statements.
///
pub fn interpret_bounded(prog: &Program, inputs: &[i64], step_bound: u64) -> Result<Outcome, FrontendError> {
    let main = prog.main().ok_or(FrontendError::MissingMain)?;
    if main.params.len() != inputs.len() {
        return Err(FrontendError::Arity { expected: main.params.len(), got: inputs.len() });
    }
    let run = || {
        let mut m =
            Machine { prog, heap: BTreeMap::new(), next_loc: 1, next_wild: 0, steps: 0, bound: step_bound };
        let args = inputs.iter().map(|n| Value::Int(*n)).collect();
        match m.invoke("main", args) {
            Err(o) => o,
            Ok(_) if !m.heap.is_empty() => Outcome::Leak,
            Ok(vs) => Outcome::Ok(vs.first().map(|v| v.int()).unwrap_or(0)),
        }
    };
    // deep recursion in extracted loops needs a large stack
    let out = std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(1 << 30)
            .spawn_scoped(s, run)
            .expect("spawn interpreter thread")
            .join()
            .expect("interpreter thread panicked")
    });
    Ok(out)
}
