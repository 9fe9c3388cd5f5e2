//! SMT-LIB2 (QF_LIA) backend over a child process, and a reader for the
//! subset of SMT-LIB2 this module writes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::process::{Command, Stdio};

use super::decide::{DecideError, Model};
use crate::sl::{Pure, Term, Var};

fn sym(v: &Var) -> String {
    format!("|{v}|")
}

fn num(n: i64) -> String {
    if n < 0 {
        format!("(- {})", -(n as i128))
    } else {
        n.to_string()
    }
}

fn term(t: &Term) -> String {
    match t {
        Term::Const(c) => num(*c),
        Term::Var(v) => sym(v),
        Term::Mul(k, a) => format!("(* {} {})", num(*k), term(a)),
        Term::Add(a, b) => format!("(+ {} {})", term(a), term(b)),
        Term::Neg(a) => format!("(- {})", term(a)),
        Term::Min(a, b) => {
            let (a, b) = (term(a), term(b));
            format!("(ite (<= {a} {b}) {a} {b})")
        }
        Term::Max(a, b) => {
            let (a, b) = (term(a), term(b));
            format!("(ite (<= {a} {b}) {b} {a})")
        }
    }
}

fn formula(p: &Pure) -> String {
    match p {
        Pure::Bool(b) => b.to_string(),
        Pure::BoolVar(v) => format!("(not (= {} 0))", sym(v)),
        Pure::Eq(a, b) => format!("(= {} {})", term(a), term(b)),
        Pure::Le(a, b) => format!("(<= {} {})", term(a), term(b)),
        Pure::EqNull(v) => format!("(= {} 0)", sym(v)),
        Pure::Not(q) => format!("(not {})", formula(q)),
        Pure::And(qs) => format!("(and {})", qs.iter().map(formula).collect::<Vec<_>>().join(" ")),
        Pure::Or(qs) => format!("(or {})", qs.iter().map(formula).collect::<Vec<_>>().join(" ")),
        Pure::Exists(v, q) => format!("(exists (({} Int)) {})", sym(v), formula(q)),
        other => panic!("not a pure arithmetic formula: {other}"),
    }
}

/// The QF_LIA script sent to the external solver.
pub fn script(p: &Pure) -> String {
    let vars: BTreeSet<Var> = p.free_vars();
    let mut s = String::from("(set-logic QF_LIA)\n(set-option :produce-models true)\n");
    for v in &vars {
        s.push_str(&format!("(declare-fun {} () Int)\n", sym(v)));
    }
    s.push_str(&format!("(assert {})\n", formula(p)));
    s.push_str("(check-sat)\n(get-model)\n(exit)\n");
    s
}

/// Run `exe` on the script for `p` and read back the answer.
pub fn run_external(exe: &str, p: &Pure) -> Result<Option<Model>, DecideError> {
    let mut child = Command::new(exe)
        .arg("-in")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| DecideError::External(format!("cannot start {exe}: {e}")))?;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(script(p).as_bytes())
        .map_err(|e| DecideError::External(e.to_string()))?;
    let out = child.wait_with_output().map_err(|e| DecideError::External(e.to_string()))?;
    let text = String::from_utf8_lossy(&out.stdout);
    parse_answer(&text)
}

/// Parse `sat`/`unsat` followed by an optional model.
pub fn parse_answer(text: &str) -> Result<Option<Model>, DecideError> {
    let mut it = text.split_whitespace();
    match it.next() {
        Some("unsat") => return Ok(None),
        Some("sat") => {}
        other => return Err(DecideError::External(format!("unexpected answer {other:?}"))),
    }
    let rest = text.trim_start().strip_prefix("sat").unwrap_or("");
    let mut model = Model::new();
    let sexps = parse_sexps(rest).map_err(DecideError::External)?;
    for s in sexps {
        let items = match s {
            Sexp::List(items) => items,
            _ => continue,
        };
        // (model (define-fun ...) ...) or a bare list of define-funs
        let defs: Vec<Sexp> = if matches!(items.first(), Some(Sexp::Atom(a)) if a == "model") {
            items[1..].to_vec()
        } else if matches!(items.first(), Some(Sexp::Atom(a)) if a == "define-fun") {
            vec![Sexp::List(items)]
        } else {
            items
        };
        for d in defs {
            if let Sexp::List(f) = d {
                if f.len() == 5 && f[0] == Sexp::Atom("define-fun".into()) {
                    if let (Sexp::Atom(name), Some(v)) = (&f[1], eval_int(&f[4])) {
                        model.insert(crate::sl::text::var_of(name.trim_matches('|')), v);
                    }
                }
            }
        }
    }
    Ok(Some(model))
}

fn eval_int(s: &Sexp) -> Option<i64> {
    match s {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(l) if l.len() == 2 && l[0] == Sexp::Atom("-".into()) => eval_int(&l[1]).map(|x| -x),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

pub fn parse_sexps(src: &str) -> Result<Vec<Sexp>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    fn skip(chars: &[char], i: &mut usize) {
        while *i < chars.len() {
            if chars[*i].is_whitespace() {
                *i += 1;
            } else if chars[*i] == ';' {
                while *i < chars.len() && chars[*i] != '\n' {
                    *i += 1;
                }
            } else {
                break;
            }
        }
    }
    fn one(chars: &[char], i: &mut usize) -> Result<Sexp, String> {
        skip(chars, i);
        if *i >= chars.len() {
            return Err("unexpected end of input".into());
        }
        if chars[*i] == '(' {
            *i += 1;
            let mut items = Vec::new();
            loop {
                skip(chars, i);
                if *i >= chars.len() {
                    return Err("unbalanced parenthesis".into());
                }
                if chars[*i] == ')' {
                    *i += 1;
                    return Ok(Sexp::List(items));
                }
                items.push(one(chars, i)?);
            }
        }
        if chars[*i] == ')' {
            return Err("unexpected `)`".into());
        }
        let st = *i;
        if chars[*i] == '|' {
            *i += 1;
            while *i < chars.len() && chars[*i] != '|' {
                *i += 1;
            }
            *i += 1;
        } else {
            while *i < chars.len() && !chars[*i].is_whitespace() && chars[*i] != '(' && chars[*i] != ')' {
                *i += 1;
            }
        }
        Ok(Sexp::Atom(chars[st..(*i).min(chars.len())].iter().collect()))
    }
    loop {
        skip(&chars, &mut i);
        if i >= chars.len() {
            return Ok(out);
        }
        out.push(one(&chars, &mut i)?);
    }
}

fn to_term(s: &Sexp) -> Result<Term, String> {
    match s {
        Sexp::Atom(a) => match a.parse::<i64>() {
            Ok(n) => Ok(Term::Const(n)),
            Err(_) => Ok(Term::Var(crate::sl::text::var_of(a.trim_matches('|')))),
        },
        Sexp::List(l) => {
            let head = match l.first() {
                Some(Sexp::Atom(h)) => h.as_str(),
                _ => return Err("bad term".into()),
            };
            match (head, l.len()) {
                ("-", 2) => Ok(Term::neg(to_term(&l[1])?)),
                ("-", 3) => Ok(Term::sub(to_term(&l[1])?, to_term(&l[2])?)),
                ("+", _) => {
                    let mut t = to_term(&l[1])?;
                    for x in &l[2..] {
                        t = Term::add(t, to_term(x)?);
                    }
                    Ok(t)
                }
                ("*", 3) => match to_term(&l[1])? {
                    Term::Const(k) => Ok(Term::mul(k, to_term(&l[2])?)),
                    _ => Err("non-linear product".into()),
                },
                ("ite", 4) => {
                    // only the shapes produced for min/max
                    let (a, b) = (to_term(&l[2])?, to_term(&l[3])?);
                    if let Sexp::List(c) = &l[1] {
                        if c.len() == 3 && c[0] == Sexp::Atom("<=".into()) {
                            let (x, y) = (to_term(&c[1])?, to_term(&c[2])?);
                            if x == a && y == b {
                                return Ok(Term::Min(Box::new(a), Box::new(b)));
                            }
                            if x == b && y == a {
                                return Ok(Term::Max(Box::new(b), Box::new(a)));
                            }
                        }
                    }
                    Err("unsupported ite".into())
                }
                _ => Err(format!("unsupported term head {head}")),
            }
        }
    }
}

fn to_formula(s: &Sexp) -> Result<Pure, String> {
    match s {
        Sexp::Atom(a) if a == "true" => Ok(Pure::tt()),
        Sexp::Atom(a) if a == "false" => Ok(Pure::ff()),
        Sexp::List(l) => {
            let head = match l.first() {
                Some(Sexp::Atom(h)) => h.as_str(),
                _ => return Err("bad formula".into()),
            };
            let args = &l[1..];
            match head {
                "and" => Ok(Pure::And(args.iter().map(to_formula).collect::<Result<_, _>>()?)),
                "or" => Ok(Pure::Or(args.iter().map(to_formula).collect::<Result<_, _>>()?)),
                "not" => Ok(Pure::Not(Box::new(to_formula(&args[0])?))),
                "=" => Ok(Pure::Eq(to_term(&args[0])?, to_term(&args[1])?)),
                "<=" => Ok(Pure::Le(to_term(&args[0])?, to_term(&args[1])?)),
                ">=" => Ok(Pure::Le(to_term(&args[1])?, to_term(&args[0])?)),
                "<" => Ok(Pure::lt(to_term(&args[0])?, to_term(&args[1])?)),
                ">" => Ok(Pure::lt(to_term(&args[1])?, to_term(&args[0])?)),
                "exists" => {
                    let Sexp::List(binds) = &args[0] else { return Err("bad binder".into()) };
                    let mut body = to_formula(&args[1])?;
                    for b in binds.iter().rev() {
                        if let Sexp::List(pair) = b {
                            if let Sexp::Atom(n) = &pair[0] {
                                body = Pure::Exists(crate::sl::text::var_of(n.trim_matches('|')), Box::new(body));
                            }
                        }
                    }
                    Ok(body)
                }
                _ => Err(format!("unsupported formula head {head}")),
            }
        }
        _ => Err("bad formula".into()),
    }
}

/// Read a script in the subset written by [`script`]: returns the conjunction
/// of its assertions.
pub fn read_script(src: &str) -> Result<Pure, String> {
    let mut asserts = Vec::new();
    for s in parse_sexps(src)? {
        if let Sexp::List(l) = &s {
            if l.first() == Some(&Sexp::Atom("assert".into())) && l.len() == 2 {
                asserts.push(to_formula(&l[1])?);
            }
        }
    }
    Ok(Pure::and(asserts))
}

/// Answer text in the format external solvers print.
pub fn write_answer(r: &Option<Model>) -> String {
    match r {
        None => "unsat\n".into(),
        Some(m) => {
            let mut s = String::from("sat\n(\n");
            let sorted: BTreeMap<_, _> = m.iter().collect();
            for (v, x) in sorted {
                s.push_str(&format!("  (define-fun {} () Int {})\n", sym(v), num(*x)));
            }
            s.push_str(")\n");
            s
        }
    }
}
