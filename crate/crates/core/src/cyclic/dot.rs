use std::fmt::Write;

use super::{ExecTree, NodeStatus};
use crate::sl::text::render_heap;

fn esc(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: tree edges solid, back-links dashed.
pub fn render_dot(t: &ExecTree) -> String {
    let mut s = String::from("digraph tree {\n  node [shape=box, fontname=monospace];\n");
    for n in &t.nodes {
        let step = n.trace.last().map(|s| s.to_string()).unwrap_or_else(|| "query".into());
        let label = format!("{}: {} [{}]\\n{}", n.id, step, n.status.tag(), esc(&render_heap(&n.heap)));
        let _ = writeln!(s, "  n{} [label=\"{}\"];", n.id, label);
    }
    for n in &t.nodes {
        for c in &n.children {
            let _ = writeln!(s, "  n{} -> n{};", n.id, c);
        }
        if let NodeStatus::LinkedBack { target, .. } = &n.status {
            let _ = writeln!(s, "  n{} -> n{} [style=dashed];", n.id, target);
        }
    }
    s.push_str("}\n");
    s
}
