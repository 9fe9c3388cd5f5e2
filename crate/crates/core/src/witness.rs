//! Counterexample traces and their GraphML violation witnesses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};

use thiserror::Error;

use crate::cyclic::{ExecTree, NodeStatus};
use crate::encoder::{BranchKind, ChcSystem};
use crate::frontend::{interpret_bounded, MemErrKind, Outcome, Program};
use crate::solver::Model;

/// What the witness claims goes wrong.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Assert { line: u32 },
    Mem { kind: MemErrKind, line: u32 },
    Leak,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::Assert { line } => write!(f, "assertion failure at line {line}"),
            ErrorKind::Mem { kind, line } => write!(f, "{kind} at line {line}"),
            ErrorKind::Leak => write!(f, "memory leak"),
        }
    }
}

/// One unfolding on the way to the error.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessStep {
    pub pred: String,
    pub label: Vec<u8>,
    pub kind: BranchKind,
    /// Error line for steps that raise the error, else the line of the
    /// procedure or loop.
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessTrace {
    pub steps: Vec<WitnessStep>,
    pub kind: ErrorKind,
    pub model: Model,
}

impl WitnessTrace {
    /// Values of `main`'s parameters in the model; unconstrained ones are 0.
    pub fn inputs(&self, prog: &Program) -> Vec<i64> {
        let main = prog.main().map(|m| m.params.as_slice()).unwrap_or_default();
        main.iter().map(|(_, v)| self.model.get(v).copied().unwrap_or(0)).collect()
    }
}

impl fmt::Display for WitnessTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let steps: Vec<String> = self
            .steps
            .iter()
            .map(|s| {
                let l: Vec<String> = s.label.iter().map(|d| d.to_string()).collect();
                format!("({}, [{}])", s.pred, l.join(";"))
            })
            .collect();
        write!(f, "[{}]", steps.join("; "))
    }
}

/// Trace from the root to a satisfiable leaf, in program order. `None` if
/// the leaf is not closed as satisfiable.
pub fn extract_trace(tree: &ExecTree, leaf: usize, sys: &ChcSystem) -> Option<WitnessTrace> {
    let node = tree.nodes.get(leaf)?;
    let NodeStatus::ClosedSat(model) = &node.status else { return None };
    let mut order: Vec<_> = node.trace.iter().collect();
    order.sort_by(|a, b| a.stamp.cmp(&b.stamp));
    let steps: Vec<WitnessStep> = order
        .into_iter()
        .map(|s| {
            let line = match &s.kind {
                BranchKind::Assert { line } | BranchKind::Mem { line, .. } => *line,
                _ => sys.pred(&s.pred).map(|p| p.line).unwrap_or(0),
            };
            WitnessStep { pred: s.pred.clone(), label: s.label.clone(), kind: s.kind.clone(), line }
        })
        .collect();
    let kind = steps
        .iter()
        .find_map(|s| match &s.kind {
            BranchKind::Assert { line } => Some(ErrorKind::Assert { line: *line }),
            BranchKind::Mem { kind, line } => Some(ErrorKind::Mem { kind: *kind, line: *line }),
            _ => None,
        })
        .unwrap_or(ErrorKind::Leak);
    Some(WitnessTrace { steps, kind, model: model.clone() })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn condition(d: u8) -> &'static str {
    if d == 1 {
        "condition-true"
    } else {
        "condition-false"
    }
}

/// GraphML violation witness: a path with one edge per trace step.
pub fn emit_witness(trace: &WitnessTrace, program_file: &str) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for (id, for_, ty) in KEYS {
        let _ = writeln!(s, "  <key id=\"{id}\" for=\"{for_}\" attr.name=\"{id}\" attr.type=\"{ty}\"/>");
    }
    s.push_str("  <graph edgedefault=\"directed\">\n");
    s.push_str("    <data key=\"witness-type\">violation_witness</data>\n");
    let _ = writeln!(s, "    <data key=\"programfile\">{}</data>", xml_escape(program_file));
    s.push_str("    <data key=\"producer\">hcv</data>\n");
    let _ = writeln!(s, "    <data key=\"specification\">{}</data>", xml_escape(&trace.kind.to_string()));
    // an empty trace still enters main
    let fallback;
    let steps = if trace.steps.is_empty() {
        fallback = [WitnessStep { pred: "main".into(), label: vec![], kind: BranchKind::Ok, line: 0 }];
        &fallback[..]
    } else {
        &trace.steps[..]
    };
    let last = steps.len();
    for i in 0..=last {
        let _ = write!(s, "    <node id=\"N{i}\"");
        if i == 0 {
            s.push_str(">\n      <data key=\"entry\">true</data>\n    </node>\n");
        } else if i == last {
            s.push_str(">\n      <data key=\"violation\">true</data>\n    </node>\n");
        } else {
            s.push_str("/>\n");
        }
    }
    for (i, st) in steps.iter().enumerate() {
        let _ = writeln!(s, "    <edge source=\"N{}\" target=\"N{}\">", i, i + 1);
        let _ = writeln!(s, "      <data key=\"enterFunction\">{}</data>", xml_escape(&st.pred));
        if let Some(d) = st.label.first() {
            let _ = writeln!(s, "      <data key=\"control\">{}</data>", condition(*d));
        }
        let digits: Vec<String> = st.label.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "      <data key=\"branch\">{}</data>", digits.join(";"));
        if st.line > 0 {
            let _ = writeln!(s, "      <data key=\"startline\">{}</data>", st.line);
        }
        s.push_str("    </edge>\n");
    }
    s.push_str("  </graph>\n</graphml>\n");
    s
}

/// Keys written by [`emit_witness`]: id, domain, type.
const KEYS: [(&str, &str, &str); 10] = [
    ("witness-type", "graph", "string"),
    ("programfile", "graph", "string"),
    ("producer", "graph", "string"),
    ("specification", "graph", "string"),
    ("entry", "node", "boolean"),
    ("violation", "node", "boolean"),
    ("enterFunction", "edge", "string"),
    ("control", "edge", "string"),
    ("branch", "edge", "string"),
    ("startline", "edge", "int"),
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WitnessError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("malformed schema: {0}")]
    Schema(String),
    #[error("{0}")]
    Invalid(String),
    #[error("replay gave {got:?}, witness claims {want}")]
    Replay { want: ErrorKind, got: Outcome },
}

const GRAPHML_NS: &str = "http://graphml.graphdrawing.org/xmlns";

struct KeySpec {
    for_: String,
    ty: String,
    values: Option<BTreeSet<String>>,
}

struct Schema {
    keys: BTreeMap<String, KeySpec>,
    required_graph: BTreeMap<String, Option<String>>,
}

fn invalid(msg: impl Into<String>) -> WitnessError {
    WitnessError::Invalid(msg.into())
}

fn parse_schema(src: &str) -> Result<Schema, WitnessError> {
    let doc = roxmltree::Document::parse(src).map_err(|e| WitnessError::Schema(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "witness-schema" {
        return Err(WitnessError::Schema("root must be <witness-schema>".into()));
    }
    let mut keys = BTreeMap::new();
    let mut required_graph = BTreeMap::new();
    for k in root.children().filter(|n| n.is_element()) {
        let attr = |a: &str| k.attribute(a).ok_or_else(|| WitnessError::Schema(format!("<{}> needs {a}", k.tag_name().name())));
        match k.tag_name().name() {
            "key" => {
                let values: BTreeSet<String> = k
                    .children()
                    .filter(|n| n.has_tag_name("value"))
                    .filter_map(|n| n.text().map(str::to_string))
                    .collect();
                let spec = KeySpec {
                    for_: attr("for")?.to_string(),
                    ty: attr("type")?.to_string(),
                    values: (!values.is_empty()).then_some(values),
                };
                if spec.for_ == "graph" && k.attribute("required") == Some("true") {
                    required_graph.insert(attr("id")?.to_string(), k.attribute("fixed").map(str::to_string));
                }
                keys.insert(attr("id")?.to_string(), spec);
            }
            other => return Err(WitnessError::Schema(format!("unexpected <{other}>"))),
        }
    }
    Ok(Schema { keys, required_graph })
}

fn check_value(id: &str, spec: &KeySpec, text: &str) -> Result<(), WitnessError> {
    match spec.ty.as_str() {
        "int" => {
            text.parse::<i64>().map_err(|_| invalid(format!("{id}: `{text}` is not an int")))?;
        }
        "boolean" if text != "true" && text != "false" => return Err(invalid(format!("{id}: `{text}` is not a boolean"))),
        _ => {}
    }
    if let Some(vs) = &spec.values {
        if !vs.contains(text) {
            return Err(invalid(format!("{id}: `{text}` not allowed")));
        }
    }
    Ok(())
}

/// Check a witness document against a schema file (docs/witness-schema.xml)
/// and the path shape: one entry node, one violation node at the end of a
/// single chain of edges.
pub fn validate_witness(xml: &str, schema: &str) -> Result<(), WitnessError> {
    let schema = parse_schema(schema)?;
    let doc = roxmltree::Document::parse(xml).map_err(|e| WitnessError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "graphml" || root.tag_name().namespace() != Some(GRAPHML_NS) {
        return Err(invalid("root must be graphml in the GraphML namespace"));
    }
    // declared keys must agree with the schema
    let mut declared = BTreeMap::new();
    for k in root.children().filter(|n| n.has_tag_name((GRAPHML_NS, "key"))) {
        let id = k.attribute("id").ok_or_else(|| invalid("key without id"))?;
        let spec = schema.keys.get(id).ok_or_else(|| invalid(format!("key `{id}` not in schema")))?;
        if k.attribute("for") != Some(spec.for_.as_str()) || k.attribute("attr.type") != Some(spec.ty.as_str()) {
            return Err(invalid(format!("key `{id}` declared with wrong domain or type")));
        }
        declared.insert(id.to_string(), spec);
    }
    let graphs: Vec<_> = root.children().filter(|n| n.has_tag_name((GRAPHML_NS, "graph"))).collect();
    let [graph] = graphs.as_slice() else { return Err(invalid("expected exactly one graph")) };
    if graph.attribute("edgedefault") != Some("directed") {
        return Err(invalid("graph must be directed"));
    }
    let data_of = |n: roxmltree::Node, domain: &str| -> Result<BTreeMap<String, String>, WitnessError> {
        let mut out = BTreeMap::new();
        for d in n.children().filter(|c| c.has_tag_name((GRAPHML_NS, "data"))) {
            let key = d.attribute("key").ok_or_else(|| invalid("data without key"))?;
            let spec = declared.get(key).ok_or_else(|| invalid(format!("data key `{key}` not declared")))?;
            if spec.for_ != domain {
                return Err(invalid(format!("key `{key}` used on a {domain}")));
            }
            let text = d.text().unwrap_or("").to_string();
            check_value(key, spec, &text)?;
            if out.insert(key.to_string(), text).is_some() {
                return Err(invalid(format!("key `{key}` repeated")));
            }
        }
        Ok(out)
    };
    let gdata = data_of(*graph, "graph")?;
    for (id, fixed) in &schema.required_graph {
        let v = gdata.get(id).ok_or_else(|| invalid(format!("graph data `{id}` missing")))?;
        if fixed.as_ref().is_some_and(|f| f != v) {
            return Err(invalid(format!("graph data `{id}` must be `{}`", fixed.as_ref().unwrap())));
        }
    }
    let mut nodes = BTreeMap::new();
    let mut entry = Vec::new();
    let mut violation = Vec::new();
    for n in graph.children().filter(|c| c.has_tag_name((GRAPHML_NS, "node"))) {
        let id = n.attribute("id").ok_or_else(|| invalid("node without id"))?;
        let d = data_of(n, "node")?;
        if d.get("entry").map(String::as_str) == Some("true") {
            entry.push(id.to_string());
        }
        if d.get("violation").map(String::as_str) == Some("true") {
            violation.push(id.to_string());
        }
        if nodes.insert(id.to_string(), ()).is_some() {
            return Err(invalid(format!("node `{id}` repeated")));
        }
    }
    let ([entry], [violation]) = (entry.as_slice(), violation.as_slice()) else {
        return Err(invalid("need exactly one entry and one violation node"));
    };
    let mut next: BTreeMap<String, String> = BTreeMap::new();
    for e in graph.children().filter(|c| c.has_tag_name((GRAPHML_NS, "edge"))) {
        let (Some(a), Some(b)) = (e.attribute("source"), e.attribute("target")) else {
            return Err(invalid("edge without endpoints"));
        };
        if !nodes.contains_key(a) || !nodes.contains_key(b) {
            return Err(invalid(format!("edge {a} -> {b} has an unknown endpoint")));
        }
        let d = data_of(e, "edge")?;
        if !d.contains_key("enterFunction") {
            return Err(invalid(format!("edge {a} -> {b} has no enterFunction")));
        }
        if next.insert(a.to_string(), b.to_string()).is_some() {
            return Err(invalid(format!("node `{a}` has two successors")));
        }
    }
    // a simple path from entry to violation covering every node
    let mut at = entry.clone();
    let mut seen = BTreeSet::from([at.clone()]);
    while let Some(b) = next.get(&at) {
        if !seen.insert(b.clone()) {
            return Err(invalid("edges form a cycle"));
        }
        at = b.clone();
    }
    if at != *violation || seen.len() != nodes.len() || next.len() + 1 != nodes.len() {
        return Err(invalid("edges do not form a single path from entry to violation"));
    }
    Ok(())
}

/// Does the outcome show the error the witness claims?
pub fn outcome_matches(kind: &ErrorKind, out: &Outcome) -> bool {
    match (kind, out) {
        (ErrorKind::Assert { line }, Outcome::AssertErr { line: l }) => line == l,
        (ErrorKind::Mem { kind, line }, Outcome::MemErr { kind: k, line: l }) => kind == k && line == l,
        (ErrorKind::Leak, Outcome::Leak) => true,
        _ => false,
    }
}

/// Run the program on the witness inputs and check that the claimed error
/// happens.
pub fn replay(trace: &WitnessTrace, prog: &Program, step_bound: u64) -> Result<Outcome, WitnessError> {
    let out = interpret_bounded(prog, &trace.inputs(prog), step_bound).map_err(|e| invalid(e.to_string()))?;
    if outcome_matches(&trace.kind, &out) {
        Ok(out)
    } else {
        Err(WitnessError::Replay { want: trace.kind.clone(), got: out })
    }
}
