//! Round-trippable text syntax for formulas.
//!
//! ```text
//! exists v1,v2. x->node{val:v1,next:v2} * P(v1,r)^o:0,u:1 & v1 >= 0 : [2;1]
//! ```
//!
//! The grammar is documented in `docs/grammar.ebnf`.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use thiserror::Error;

use super::heap::{HeapAtom, PredInst, SymbolicHeap};
use super::pure::{Pure, Seq, Term};
use super::var::Var;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at offset {pos}: {msg}")]
pub struct TextError {
    pub pos: usize,
    pub msg: String,
}

// ---------------------------------------------------------------------------
// rendering

fn term_prec(t: &Term) -> u8 {
    match t {
        Term::Add(..) => 0,
        Term::Neg(..) | Term::Mul(..) => 1,
        Term::Const(c) if *c < 0 => 1,
        _ => 2,
    }
}

pub fn render_term(t: &Term) -> String {
    let mut s = String::new();
    write_term(&mut s, t);
    s
}

fn write_term(s: &mut String, t: &Term) {
    match t {
        Term::Const(c) => write!(s, "{c}").unwrap(),
        Term::Var(v) => write!(s, "{v}").unwrap(),
        Term::Add(a, b) => {
            write_term(s, a);
            match &**b {
                Term::Neg(inner) => {
                    s.push_str(" - ");
                    write_wrapped(s, inner, 1);
                }
                other => {
                    s.push_str(" + ");
                    write_wrapped(s, other, 1);
                }
            }
        }
        Term::Neg(a) => {
            s.push('-');
            write_wrapped(s, a, 2);
        }
        Term::Mul(k, a) => {
            if *k < 0 {
                write!(s, "({k})*").unwrap();
            } else {
                write!(s, "{k}*").unwrap();
            }
            write_wrapped(s, a, 1);
        }
        Term::Min(a, b) | Term::Max(a, b) => {
            s.push_str(if matches!(t, Term::Min(..)) { "min(" } else { "max(" });
            write_term(s, a);
            s.push_str(", ");
            write_term(s, b);
            s.push(')');
        }
    }
}

fn write_wrapped(s: &mut String, t: &Term, min_prec: u8) {
    if term_prec(t) < min_prec {
        s.push('(');
        write_term(s, t);
        s.push(')');
    } else {
        write_term(s, t);
    }
}

pub fn render_pure(p: &Pure) -> String {
    let mut s = String::new();
    write_pure(&mut s, p, 0);
    s
}

// precedence: 0 = or, 1 = and, 2 = unary/atom
fn write_pure(s: &mut String, p: &Pure, ctx: u8) {
    match p {
        Pure::Or(ps) => {
            if ctx > 0 {
                s.push('(');
            }
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    s.push_str(" | ");
                }
                write_pure(s, q, 1);
            }
            if ctx > 0 {
                s.push(')');
            }
        }
        Pure::And(ps) => {
            if ctx > 0 {
                s.push('(');
            }
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    s.push_str(" & ");
                }
                write_pure(s, q, 2);
            }
            if ctx > 0 {
                s.push(')');
            }
        }
        Pure::Not(q) => match &**q {
            Pure::Eq(a, b) => {
                write_term(s, a);
                s.push_str(" != ");
                write_term(s, b);
            }
            Pure::EqNull(v) => write!(s, "{v} != null").unwrap(),
            Pure::Le(a, b) => {
                write_term(s, b);
                s.push_str(" < ");
                write_term(s, a);
            }
            Pure::Dangl(..) | Pure::BoolVar(_) | Pure::Bool(_) => {
                s.push('!');
                write_pure(s, q, 2);
            }
            _ => {
                s.push_str("!(");
                write_pure(s, q, 0);
                s.push(')');
            }
        },
        Pure::Bool(b) => s.push_str(if *b { "true" } else { "false" }),
        Pure::BoolVar(v) => write!(s, "{v}").unwrap(),
        Pure::Eq(a, b) => {
            write_term(s, a);
            s.push_str(" = ");
            write_term(s, b);
        }
        Pure::Le(a, b) => {
            write_term(s, a);
            s.push_str(" <= ");
            write_term(s, b);
        }
        Pure::EqNull(v) => write!(s, "{v} = null").unwrap(),
        Pure::Dangl(v, q) => write!(s, "dangl({v},{q})").unwrap(),
        Pure::Load { base, field, target, seq } => write!(s, "LD({base},{field},{target},{seq})").unwrap(),
        Pure::Store { base, field, source, seq } => write!(s, "ST({base},{field},{source},{seq})").unwrap(),
        Pure::Del { base, seq } => write!(s, "DEL({base},{seq})").unwrap(),
        Pure::Exists(v, q) => {
            write!(s, "(exists {v}. ").unwrap();
            write_pure(s, q, 0);
            s.push(')');
        }
    }
}

pub fn render_pred(p: &PredInst) -> String {
    let mut s = format!("{}(", p.name);
    for (i, a) in p.args.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{a}").unwrap();
    }
    write!(s, ")^o:{},u:{}", p.order, p.unfold).unwrap();
    if p.at != 0 {
        write!(s, ",k:{}", p.at).unwrap();
    }
    if !p.stamp.0.is_empty() {
        write!(s, ",s:{}", p.stamp).unwrap();
    }
    s
}

pub fn render_atom(a: &HeapAtom) -> String {
    match a {
        HeapAtom::PointsTo { root, ty, fields } => {
            let mut s = format!("{root}->{ty}{{");
            for (i, (f, v)) in fields.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                write!(s, "{f}:{v}").unwrap();
            }
            s.push('}');
            s
        }
        HeapAtom::Pred(p) => render_pred(p),
    }
}

/// Render the heap body without the label.
pub fn render_body(h: &SymbolicHeap) -> String {
    let mut s = String::new();
    if !h.ex_vars.is_empty() {
        s.push_str("exists ");
        for (i, v) in h.ex_vars.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{v}").unwrap();
        }
        s.push_str(". ");
    }
    if h.spatial.is_empty() {
        s.push_str("emp");
    } else {
        for (i, a) in h.spatial.iter().enumerate() {
            if i > 0 {
                s.push_str(" * ");
            }
            s.push_str(&render_atom(a));
        }
    }
    for p in &h.pure {
        s.push_str(" & ");
        write_pure(&mut s, p, 2);
    }
    if h.nonempty {
        s.push_str(" @NE");
        if let Some(g) = &h.leak_guard {
            s.push_str(&format!("({g})"));
        }
    }
    s
}

pub fn render_label(l: &[u8]) -> String {
    let digits: Vec<String> = l.iter().map(|d| d.to_string()).collect();
    format!("[{}]", digits.join(";"))
}

pub fn render_heap(h: &SymbolicHeap) -> String {
    format!("{} : {}", render_body(h), render_label(&h.label))
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_term(self))
    }
}

impl fmt::Display for Pure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_pure(self))
    }
}

impl fmt::Display for SymbolicHeap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_heap(self))
    }
}

// ---------------------------------------------------------------------------
// lexing

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
}

const SYMS: &[&str] = &[
    ":=", "->", "!=", "<=", ">=", "(", ")", ",", ".", ":", ";", "[", "]", "{", "}", "*", "&", "|", "!", "=", "<",
    ">", "+", "-", "^", "@",
];

pub fn lex(src: &str) -> Result<Vec<(Tok, usize)>, TextError> {
    let b = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    'outer: while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && b.get(i + 1) == Some(&b'/') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let st = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let n: i64 = src[st..i]
                .parse()
                .map_err(|_| TextError { pos: st, msg: "integer out of range".into() })?;
            out.push((Tok::Int(n), st));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let st = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            if i < b.len() && b[i] == b'#' {
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            out.push((Tok::Ident(src[st..i].to_string()), st));
            continue;
        }
        for s in SYMS {
            if src[i..].starts_with(s) {
                out.push((Tok::Sym(s), i));
                i += s.len();
                continue 'outer;
            }
        }
        return Err(TextError { pos: i, msg: format!("unexpected character {:?}", c as char) });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// parsing

pub struct Parser {
    toks: Vec<(Tok, usize)>,
    pub pos: usize,
    end: usize,
}

const KEYWORDS: &[&str] = &["true", "false", "null", "exists", "emp", "dangl", "LD", "ST", "DEL", "min", "max", "pred", "inv", "query"];

impl Parser {
    pub fn new(src: &str) -> Result<Parser, TextError> {
        let toks = lex(src)?;
        Ok(Parser { toks, pos: 0, end: src.len() })
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.0)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end)
    }

    pub fn err<T>(&self, msg: impl Into<String>) -> Result<T, TextError> {
        Err(TextError { pos: self.offset(), msg: msg.into() })
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    pub fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == s)
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> Result<(), TextError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    pub fn ident(&mut self) -> Result<String, TextError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    pub fn int(&mut self) -> Result<i64, TextError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => self.err("expected integer"),
        }
    }

    pub fn var(&mut self) -> Result<Var, TextError> {
        let at = self.pos;
        let s = self.ident()?;
        if KEYWORDS.contains(&s.as_str()) {
            self.pos = at;
            return self.err(format!("keyword `{s}` used as variable"));
        }
        Ok(var_of(&s))
    }

    pub fn seq(&mut self) -> Result<Seq, TextError> {
        let mut v = vec![self.int()? as u32];
        while self.is_sym(".") && matches!(self.peek_at(1), Some(Tok::Int(_))) {
            self.pos += 1;
            v.push(self.int()? as u32);
        }
        Ok(Seq(v))
    }

    // terms ---------------------------------------------------------------

    pub fn term(&mut self) -> Result<Term, TextError> {
        let mut t = self.factor()?;
        loop {
            if self.eat_sym("+") {
                let r = self.factor()?;
                t = Term::add(t, r);
            } else if self.eat_sym("-") {
                let r = self.factor()?;
                t = Term::add(t, Term::neg(r));
            } else {
                return Ok(t);
            }
        }
    }

    fn factor(&mut self) -> Result<Term, TextError> {
        if self.eat_sym("-") {
            let f = self.factor()?;
            return Ok(Term::neg(f));
        }
        let prim = self.primary()?;
        if let Term::Const(c) = prim {
            if self.eat_sym("*") {
                let f = self.factor()?;
                return Ok(Term::mul(c, f));
            }
        }
        Ok(prim)
    }

    fn primary(&mut self) -> Result<Term, TextError> {
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                Ok(Term::Const(n))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let t = self.term()?;
                self.expect_sym(")")?;
                Ok(t)
            }
            Some(Tok::Ident(s)) if (s == "min" || s == "max") && matches!(self.peek_at(1), Some(Tok::Sym("("))) => {
                self.pos += 2;
                let a = self.term()?;
                self.expect_sym(",")?;
                let b = self.term()?;
                self.expect_sym(")")?;
                Ok(if s == "min" {
                    Term::Min(Box::new(a), Box::new(b))
                } else {
                    Term::Max(Box::new(a), Box::new(b))
                })
            }
            Some(Tok::Ident(_)) => Ok(Term::Var(self.var()?)),
            _ => self.err("expected term"),
        }
    }

    // pure formulas -------------------------------------------------------

    pub fn pure(&mut self) -> Result<Pure, TextError> {
        let mut ds = vec![self.pure_and()?];
        while self.eat_sym("|") {
            ds.push(self.pure_and()?);
        }
        Ok(if ds.len() == 1 { ds.pop().unwrap() } else { Pure::Or(ds) })
    }

    fn pure_and(&mut self) -> Result<Pure, TextError> {
        let mut cs = vec![self.pure_unary()?];
        while self.eat_sym("&") {
            cs.push(self.pure_unary()?);
        }
        Ok(if cs.len() == 1 { cs.pop().unwrap() } else { Pure::And(cs) })
    }

    pub fn pure_unary(&mut self) -> Result<Pure, TextError> {
        if self.eat_sym("!") {
            let q = self.pure_unary()?;
            return Ok(Pure::Not(Box::new(q)));
        }
        self.pure_atom()
    }

    fn pure_atom(&mut self) -> Result<Pure, TextError> {
        let save = self.pos;
        if self.is_sym("(") {
            // either a parenthesised formula or a comparison starting with a term
            if let Ok(p) = self.comparison() {
                return Ok(p);
            }
            self.pos = save + 1;
            if self.eat_kw("exists") {
                let v = self.var()?;
                self.expect_sym(".")?;
                let body = self.pure()?;
                self.expect_sym(")")?;
                return Ok(Pure::Exists(v, Box::new(body)));
            }
            let p = self.pure()?;
            self.expect_sym(")")?;
            return Ok(p);
        }
        if self.eat_kw("true") {
            return Ok(Pure::Bool(true));
        }
        if self.eat_kw("false") {
            return Ok(Pure::Bool(false));
        }
        if self.is_kw("dangl") {
            self.pos += 1;
            self.expect_sym("(")?;
            let v = self.var()?;
            self.expect_sym(",")?;
            let s = self.seq()?;
            self.expect_sym(")")?;
            return Ok(Pure::Dangl(v, s));
        }
        if self.is_kw("LD") || self.is_kw("ST") {
            let is_ld = self.is_kw("LD");
            self.pos += 1;
            self.expect_sym("(")?;
            let base = self.var()?;
            self.expect_sym(",")?;
            let field: Arc<str> = Arc::from(self.ident()?.as_str());
            self.expect_sym(",")?;
            let other = self.var()?;
            self.expect_sym(",")?;
            let seq = self.seq()?;
            self.expect_sym(")")?;
            return Ok(if is_ld {
                Pure::Load { base, field, target: other, seq }
            } else {
                Pure::Store { base, field, source: other, seq }
            });
        }
        if self.is_kw("DEL") {
            self.pos += 1;
            self.expect_sym("(")?;
            let base = self.var()?;
            self.expect_sym(",")?;
            let seq = self.seq()?;
            self.expect_sym(")")?;
            return Ok(Pure::Del { base, seq });
        }
        // comparison or boolean variable
        if let Some(Tok::Ident(_)) = self.peek() {
            if !self.next_is_cmp_after_var() {
                let v = self.var()?;
                return Ok(Pure::BoolVar(v));
            }
        }
        self.comparison()
    }

    fn next_is_cmp_after_var(&self) -> bool {
        match self.peek_at(1) {
            Some(Tok::Sym(s)) => matches!(*s, "=" | "!=" | "<=" | "<" | ">=" | ">" | "+" | "-" | "("),
            _ => false,
        }
    }

    fn comparison(&mut self) -> Result<Pure, TextError> {
        let save = self.pos;
        let lhs = self.term()?;
        let op = match self.peek() {
            Some(Tok::Sym(s)) if matches!(*s, "=" | "!=" | "<=" | "<" | ">=" | ">") => *s,
            _ => {
                self.pos = save;
                return self.err("expected comparison");
            }
        };
        self.pos += 1;
        if self.eat_kw("null") {
            let v = match lhs {
                Term::Var(v) => v,
                _ => {
                    self.pos = save;
                    return self.err("null comparison needs a variable");
                }
            };
            return match op {
                "=" => Ok(Pure::EqNull(v)),
                "!=" => Ok(Pure::Not(Box::new(Pure::EqNull(v)))),
                _ => self.err("bad null comparison"),
            };
        }
        let rhs = self.term()?;
        Ok(match op {
            "=" => Pure::Eq(lhs, rhs),
            "!=" => Pure::Not(Box::new(Pure::Eq(lhs, rhs))),
            "<=" => Pure::Le(lhs, rhs),
            "<" => Pure::Not(Box::new(Pure::Le(rhs, lhs))),
            ">=" => Pure::Le(rhs, lhs),
            _ => Pure::Not(Box::new(Pure::Le(lhs, rhs))),
        })
    }

    // heaps ---------------------------------------------------------------

    fn pred_annot(&mut self, p: &mut PredInst) -> Result<(), TextError> {
        if !self.eat_sym("^") {
            return Ok(());
        }
        loop {
            let key = self.ident()?;
            self.expect_sym(":")?;
            match key.as_str() {
                "o" => p.order = self.int()? as u32,
                "u" => p.unfold = self.int()? as u32,
                "k" => p.at = self.int()? as u32,
                "s" => p.stamp = self.seq()?,
                _ => return self.err(format!("unknown annotation `{key}`")),
            }
            if !(self.is_sym(",") && matches!(self.peek_at(1), Some(Tok::Ident(k)) if k.len() == 1)
                && matches!(self.peek_at(2), Some(Tok::Sym(":"))))
            {
                return Ok(());
            }
            self.pos += 1;
        }
    }

    pub fn heap_atom(&mut self) -> Result<HeapAtom, TextError> {
        let name = self.ident()?;
        if self.eat_sym("->") {
            let ty = self.ident()?;
            self.expect_sym("{")?;
            let mut fields = Vec::new();
            if !self.is_sym("}") {
                loop {
                    let f = self.ident()?;
                    self.expect_sym(":")?;
                    let v = self.var()?;
                    fields.push((Arc::from(f.as_str()), v));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym("}")?;
            return Ok(HeapAtom::PointsTo { root: var_of(&name), ty: Arc::from(ty.as_str()), fields });
        }
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.is_sym(")") {
            loop {
                args.push(self.var()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        let mut p = PredInst::new(&name, args, 0, 0);
        self.pred_annot(&mut p)?;
        Ok(HeapAtom::Pred(p))
    }

    /// Heap body and optional label.
    pub fn heap(&mut self) -> Result<SymbolicHeap, TextError> {
        let mut h = SymbolicHeap::default();
        if self.eat_kw("exists") {
            loop {
                h.ex_vars.push(self.var()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(".")?;
        }
        if !self.eat_kw("emp") {
            loop {
                h.spatial.push(self.heap_atom()?);
                if !self.eat_sym("*") {
                    break;
                }
            }
        }
        while self.eat_sym("&") {
            h.pure.push(self.pure_unary()?);
        }
        if self.eat_sym("@") {
            let k = self.ident()?;
            if k != "NE" {
                return self.err("expected @NE");
            }
            h.nonempty = true;
            if self.eat_sym("(") {
                h.leak_guard = Some(self.var()?);
                self.expect_sym(")")?;
            }
        }
        if self.is_sym(":") && matches!(self.peek_at(1), Some(Tok::Sym("["))) {
            self.pos += 2;
            if !self.is_sym("]") {
                loop {
                    let d = self.int()?;
                    if !(1..=2).contains(&d) {
                        return self.err("label digits must be 1 or 2");
                    }
                    h.label.push(d as u8);
                    if !self.eat_sym(";") {
                        break;
                    }
                }
            }
            self.expect_sym("]")?;
        }
        Ok(h)
    }
}

/// Parse `name` or `name#version`.
pub fn var_of(s: &str) -> Var {
    match s.split_once('#') {
        Some((n, v)) => Var::new(n, v.parse().unwrap_or(0)),
        None => Var::named(s),
    }
}

fn finish<T>(p: &Parser, v: T) -> Result<T, TextError> {
    if p.at_end() {
        Ok(v)
    } else {
        p.err("trailing input")
    }
}

pub fn parse_term(src: &str) -> Result<Term, TextError> {
    let mut p = Parser::new(src)?;
    let t = p.term()?;
    finish(&p, t)
}

pub fn parse_pure(src: &str) -> Result<Pure, TextError> {
    let mut p = Parser::new(src)?;
    let f = p.pure()?;
    finish(&p, f)
}

pub fn parse_heap(src: &str) -> Result<SymbolicHeap, TextError> {
    let mut p = Parser::new(src)?;
    let h = p.heap()?;
    finish(&p, h)
}
