//! Line-oriented text form of a clause system.
//!
//! ```text
//! pred sll(i, res, eps) :=
//!   | [ok] emp & i=0 & res=null & eps=0 : [1]
//!   | [pass] exists _t2#1,r#1. res->node{val:i,next:r#1} * sll(_t2#1,r#1,eps)^o:0,u:1 & ... : [2]
//!   inv: i>=0 & eps=0
//! query: main(n,res,eps)^o:0,u:0 & eps=1
//! ```

use std::fmt::Write;

use super::{Branch, BranchKind, ChcSystem, PredDef};
use crate::frontend::MemErrKind;
use crate::sl::text::{render_heap, render_pure};
use crate::sl::{parse_heap, parse_pure, var_of, TextError};

pub fn render_system(sys: &ChcSystem) -> String {
    let mut s = String::new();
    for p in &sys.preds {
        s.push_str(&render_pred_def(p));
    }
    let _ = writeln!(s, "query: {}", render_heap(&sys.query));
    s
}

pub fn render_pred_def(p: &PredDef) -> String {
    let mut s = String::new();
    let params: Vec<String> = p.params.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(s, "pred {}({}) :=  // line {}", p.name, params.join(", "), p.line);
    if p.branches.is_empty() {
        let _ = writeln!(s, "  | false");
    }
    for b in &p.branches {
        let _ = writeln!(s, "  | [{}] {}", b.kind, render_heap(&b.heap));
    }
    if let Some(inv) = &p.invariant {
        let _ = writeln!(s, "  inv: {}", render_pure(inv));
    }
    s
}

fn err(line: usize, msg: impl Into<String>) -> TextError {
    TextError { pos: line, msg: msg.into() }
}

fn parse_kind(tag: &str) -> Option<BranchKind> {
    Some(match tag {
        "ok" => BranchKind::Ok,
        "pass" => BranchKind::Pass,
        "callee" => BranchKind::CalleeFail,
        "leak" => BranchKind::Leak,
        _ => {
            let (k, line) = tag.split_once('@')?;
            let line: u32 = line.parse().ok()?;
            let kind = match k {
                "assert" => return Some(BranchKind::Assert { line }),
                "null-deref" => MemErrKind::NullDeref,
                "dangling-deref" => MemErrKind::DanglingDeref,
                "null-free" => MemErrKind::NullFree,
                "double-free" => MemErrKind::DoubleFree,
                _ => return None,
            };
            BranchKind::Mem { kind, line }
        }
    })
}

/// Read back the output of [`render_system`]. Error positions are line
/// numbers.
pub fn parse_system(src: &str) -> Result<ChcSystem, TextError> {
    let mut sys = ChcSystem::default();
    let mut query = None;
    for (i, raw) in src.lines().enumerate() {
        let n = i + 1;
        let line = raw.split("  //").next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("pred ") {
            let head = rest.strip_suffix(":=").ok_or_else(|| err(n, "expected `:=`"))?.trim();
            let (name, params) = head.split_once('(').ok_or_else(|| err(n, "expected parameter list"))?;
            let params = params.strip_suffix(')').ok_or_else(|| err(n, "expected `)`"))?;
            let params = params.split(',').map(str::trim).filter(|s| !s.is_empty()).map(var_of).collect();
            let decl = raw.split("// line ").nth(1).and_then(|l| l.trim().parse().ok()).unwrap_or(0);
            sys.preds.push(PredDef { name: name.trim().into(), params, branches: vec![], invariant: None, line: decl });
        } else if let Some(rest) = line.strip_prefix('|') {
            let pred = sys.preds.last_mut().ok_or_else(|| err(n, "branch outside a definition"))?;
            let rest = rest.trim();
            if rest == "false" {
                continue;
            }
            let rest = rest.strip_prefix('[').ok_or_else(|| err(n, "expected branch kind"))?;
            let (tag, body) = rest.split_once(']').ok_or_else(|| err(n, "expected `]`"))?;
            let kind = parse_kind(tag).ok_or_else(|| err(n, format!("unknown branch kind `{tag}`")))?;
            let heap = parse_heap(body).map_err(|e| err(n, e.msg))?;
            pred.branches.push(Branch { heap, kind });
        } else if let Some(rest) = line.strip_prefix("inv:") {
            let pred = sys.preds.last_mut().ok_or_else(|| err(n, "invariant outside a definition"))?;
            pred.invariant = Some(parse_pure(rest).map_err(|e| err(n, e.msg))?);
        } else if let Some(rest) = line.strip_prefix("query:") {
            query = Some(parse_heap(rest).map_err(|e| err(n, e.msg))?);
        } else {
            return Err(err(n, "unrecognized line"));
        }
    }
    sys.query = query.ok_or_else(|| err(0, "missing query"))?;
    Ok(sys)
}
