//! Lexer and recursive-descent parser for `.hc` programs.

use std::collections::BTreeMap;

use super::ast::*;
use super::FrontendError;
use crate::sl::Var;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    /// A character outside the language; reported when the parser meets it.
    Stray(char),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

const PUNCTS: [&str; 23] = [
    "->", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", ";", ",", "=", "<", ">", "+", "-", "*", "!",
    "/", "%", "&",
];

fn lex(src: &str) -> Result<Vec<Token>, FrontendError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let bump = |i: &mut usize, line: &mut u32, col: &mut u32, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                { let ch = chars[i]; bump(&mut i, &mut line, &mut col, ch); }
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let (l0, c0) = (line, col);
            i += 2;
            col += 2;
            loop {
                if i >= chars.len() {
                    return Err(FrontendError::Syntax { line: l0, col: c0, msg: "unterminated comment".into() });
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    i += 2;
                    col += 2;
                    break;
                }
                { let ch = chars[i]; bump(&mut i, &mut line, &mut col, ch); }
            }
            continue;
        }
        let (l0, c0) = (line, col);
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                { let ch = chars[i]; bump(&mut i, &mut line, &mut col, ch); }
            }
            let text: String = chars[start..i].iter().collect();
            let n = text
                .parse::<i64>()
                .map_err(|_| FrontendError::Syntax { line: l0, col: c0, msg: format!("integer literal {text} out of range") })?;
            out.push(Token { tok: Tok::Int(n), line: l0, col: c0 });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                { let ch = chars[i]; bump(&mut i, &mut line, &mut col, ch); }
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: l0, col: c0 });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        if let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            for _ in 0..p.len() {
                bump(&mut i, &mut line, &mut col, 'x');
            }
            out.push(Token { tok: Tok::Punct(p), line: l0, col: c0 });
            continue;
        }
        bump(&mut i, &mut line, &mut col, c);
        out.push(Token { tok: Tok::Stray(c), line: l0, col: c0 });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

const UNSUPPORTED_WORDS: [&str; 8] = ["goto", "switch", "break", "continue", "for", "do", "case", "enum"];
const KEYWORDS: [&str; 18] = [
    "data", "int", "bool", "void", "if", "else", "while", "return", "free", "new", "null", "true", "false", "ERROR",
    "assume", "assert", "res", "eps",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    datas: Vec<String>,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        if let Tok::Stray(c) = t.tok {
            let what = match c {
                '[' | ']' => "arrays",
                '&' => "address-of",
                '/' | '%' => "division",
                _ => "",
            };
            if !what.is_empty() {
                return Err(FrontendError::Unsupported { line: t.line, msg: what.into() });
            }
        }
        if let Tok::Punct(p @ ("/" | "%" | "&")) = t.tok {
            let what = if p == "&" { "address-of" } else { "division" };
            return Err(FrontendError::Unsupported { line: t.line, msg: what.into() });
        }
        if let Tok::Ident(w) = &t.tok {
            if UNSUPPORTED_WORDS.contains(&w.as_str()) {
                return Err(FrontendError::Unsupported { line: t.line, msg: format!("`{w}`") });
            }
        }
        Err(FrontendError::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.err(format!("expected `{p}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) && !UNSUPPORTED_WORDS.contains(&s.as_str()) => {
                if s.starts_with('_') {
                    return self.err("identifiers may not start with `_`");
                }
                self.next();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", describe(&t))),
        }
    }

    /// A type keyword or a declared data name, optionally followed by `*`.
    fn try_type(&mut self) -> Option<Type> {
        let ty = match self.peek() {
            Tok::Ident(s) if s == "int" => Type::Int,
            Tok::Ident(s) if s == "bool" => Type::Bool,
            Tok::Ident(s) if s == "void" => Type::Void,
            Tok::Ident(s) if self.datas.contains(s) => Type::Data(s.clone()),
            _ => return None,
        };
        self.next();
        if ty.is_ptr() {
            self.eat_punct("*");
        }
        Some(ty)
    }

    fn looks_like_decl(&self) -> bool {
        let is_ty = match self.peek() {
            Tok::Ident(s) => ["int", "bool", "void"].contains(&s.as_str()) || self.datas.contains(s),
            _ => false,
        };
        if !is_ty {
            return false;
        }
        match self.peek_at(1) {
            Tok::Ident(_) => true,
            Tok::Punct("*") => matches!(self.peek_at(2), Tok::Ident(_)),
            _ => false,
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        // data names may be used before their declaration
        for (i, t) in self.toks.iter().enumerate() {
            if t.tok == Tok::Ident("data".into()) {
                if let Some(Token { tok: Tok::Ident(n), .. }) = self.toks.get(i + 1) {
                    self.datas.push(n.clone());
                }
            }
        }
        while *self.peek() != Tok::Eof {
            if self.is_word("data") {
                prog.datas.push(self.data_decl()?);
            } else {
                prog.procs.push(self.proc()?);
            }
        }
        Ok(prog)
    }

    fn data_decl(&mut self) -> PResult<DataDecl> {
        self.next();
        let name = self.ident()?;
        self.expect("{")?;
        let mut fields = Vec::new();
        while !self.eat_punct("}") {
            let Some(ty) = self.try_type() else { return self.err("expected field type") };
            if ty == Type::Void {
                return self.err("field of type void");
            }
            let f = self.ident()?;
            self.expect(";")?;
            fields.push((ty, f));
        }
        self.eat_punct(";");
        Ok(DataDecl { name, fields })
    }

    fn proc(&mut self) -> PResult<Proc> {
        let line = self.line();
        let Some(ret) = self.try_type() else { return self.err("expected `data` or a procedure") };
        let name = self.ident()?;
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.eat_punct(")") {
            loop {
                let Some(ty) = self.try_type() else { return self.err("expected parameter type") };
                if ty == Type::Void {
                    if params.is_empty() && self.is_punct(")") {
                        self.next();
                        break;
                    }
                    return self.err("parameter of type void");
                }
                params.push((ty, Var::named(&self.ident()?)));
                if self.eat_punct(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        let body = self.block()?;
        let ret = if ret == Type::Void { vec![] } else { vec![ret] };
        Ok(Proc { ret, name, params, body, line, types: BTreeMap::new(), loop_line: None })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect("{")?;
        let mut out = Vec::new();
        while !self.eat_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unbalanced `{`");
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        let kind = if self.is_punct("{") {
            StmtKind::Block(self.block()?)
        } else if self.is_word("if") {
            self.next();
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            let then = self.body()?;
            let els = if self.is_word("else") {
                self.next();
                self.body()?
            } else {
                vec![]
            };
            StmtKind::If { cond, then, els }
        } else if self.is_word("while") {
            self.next();
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            StmtKind::While { cond, body: self.body()? }
        } else if self.is_word("return") {
            self.next();
            let vals = if self.is_punct(";") { vec![] } else { vec![self.expr()?] };
            self.expect(";")?;
            StmtKind::Return(vals)
        } else if self.is_word("free") {
            self.next();
            let paren = self.eat_punct("(");
            let e = self.expr()?;
            if paren {
                self.expect(")")?;
            }
            self.expect(";")?;
            StmtKind::Free(e)
        } else if self.is_word("ERROR") {
            self.next();
            self.expect("(")?;
            self.expect(")")?;
            self.expect(";")?;
            StmtKind::Error
        } else if self.is_word("assume") || self.is_word("assert") {
            let assert = self.is_word("assert");
            self.next();
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            self.expect(";")?;
            if assert {
                let not = Expr::Un(UnOp::Not, Box::new(cond));
                StmtKind::If { cond: not, then: vec![Stmt { kind: StmtKind::Error, line }], els: vec![] }
            } else {
                StmtKind::Assume(cond)
            }
        } else if self.looks_like_decl() {
            let ty = self.try_type().expect("checked by looks_like_decl");
            if ty == Type::Void {
                return self.err("variable of type void");
            }
            let var = Var::named(&self.ident()?);
            let init = if self.eat_punct("=") { Some(self.expr()?) } else { None };
            let kind = StmtKind::Decl { ty, var, init };
            self.expect(";")?;
            kind
        } else {
            let lhs = self.expr()?;
            if self.eat_punct("=") {
                let rhs = self.expr()?;
                self.expect(";")?;
                match lhs {
                    Expr::Var(v) => StmtKind::Assign { lhs: vec![v], rhs },
                    Expr::Field(base, field) => StmtKind::Store { base: *base, field, rhs },
                    _ => return Err(FrontendError::Syntax { line, col: 1, msg: "invalid assignment target".into() }),
                }
            } else {
                self.expect(";")?;
                match lhs {
                    Expr::Call(..) => StmtKind::Eval(lhs),
                    _ => return Err(FrontendError::Syntax { line, col: 1, msg: "expression statement is not a call".into() }),
                }
            }
        };
        Ok(Stmt { kind, line })
    }

    /// Body of `if`/`else`/`while`: a block or a single statement.
    fn body(&mut self) -> PResult<Vec<Stmt>> {
        if self.is_punct("{") {
            self.block()
        } else {
            Ok(vec![self.stmt()?])
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.and_expr()?;
        while self.eat_punct("||") {
            e = Expr::Bin(BinOp::Or, Box::new(e), Box::new(self.and_expr()?));
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut e = self.cmp_expr()?;
        while self.eat_punct("&&") {
            e = Expr::Bin(BinOp::And, Box::new(e), Box::new(self.cmp_expr()?));
        }
        Ok(e)
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let e = self.add_expr()?;
        let op = match self.peek() {
            Tok::Punct("==") => BinOp::Eq,
            Tok::Punct("!=") => BinOp::Ne,
            Tok::Punct("<") => BinOp::Lt,
            Tok::Punct("<=") => BinOp::Le,
            Tok::Punct(">") => BinOp::Gt,
            Tok::Punct(">=") => BinOp::Ge,
            _ => return Ok(e),
        };
        self.next();
        Ok(Expr::Bin(op, Box::new(e), Box::new(self.add_expr()?)))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut e = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("+") => BinOp::Add,
                Tok::Punct("-") => BinOp::Sub,
                _ => return Ok(e),
            };
            self.next();
            e = Expr::Bin(op, Box::new(e), Box::new(self.mul_expr()?));
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut e = self.unary()?;
        while self.eat_punct("*") {
            e = Expr::Bin(BinOp::Mul, Box::new(e), Box::new(self.unary()?));
        }
        if self.is_punct("/") || self.is_punct("%") {
            return self.err("division");
        }
        Ok(e)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("!") {
            return Ok(Expr::Un(UnOp::Not, Box::new(self.unary()?)));
        }
        if self.eat_punct("-") {
            return Ok(match self.unary()? {
                Expr::Int(n) => Expr::Int(-n),
                e => Expr::Un(UnOp::Neg, Box::new(e)),
            });
        }
        if self.is_punct("*") || self.is_punct("&") {
            let t = &self.toks[self.pos];
            return Err(FrontendError::Unsupported { line: t.line, msg: "raw pointer operators".into() });
        }
        let mut e = self.primary()?;
        while self.eat_punct("->") {
            let f = self.ident()?;
            e = Expr::Field(Box::new(e), f);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.next();
                Ok(Expr::Int(n))
            }
            Tok::Punct("(") => {
                self.next();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(w) if w == "null" => {
                self.next();
                Ok(Expr::Null)
            }
            Tok::Ident(w) if w == "true" || w == "false" => {
                self.next();
                Ok(Expr::Bool(w == "true"))
            }
            Tok::Ident(w) if w == "new" => {
                self.next();
                let ty = self.ident()?;
                self.expect("(")?;
                let args = self.args()?;
                Ok(Expr::New(ty, args))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.eat_punct("(") {
                    let args = self.args()?;
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(Var::named(&name)))
                }
            }
            t => self.err(format!("expected expression, found {}", describe(&t))),
        }
    }

    /// Comma separated arguments after an opening parenthesis.
    fn args(&mut self) -> PResult<Vec<Expr>> {
        let mut out = Vec::new();
        if self.eat_punct(")") {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat_punct(")") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Stray(c) => format!("`{c}`"),
        Tok::Eof => "end of input".into(),
    }
}

/// Parse a program and resolve declarations. `while` loops are kept.
pub fn parse_program(src: &str) -> Result<Program, FrontendError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, datas: Vec::new() };
    let mut prog = p.program()?;
    super::check::check_program(&mut prog)?;
    Ok(prog)
}
