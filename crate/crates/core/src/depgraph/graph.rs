use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Object,
    Condition,
    Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Acquisition,
    Dependency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub type_name: Option<String>,
    /// Object nodes: `;`-separated directives such as `name=clk`,
    /// `print=getName` or `count`. Action nodes: the call, `setWeight(2)`.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

impl Node {
    pub fn object(id: impl Into<String>, ty: impl Into<String>) -> Self {
        Node { id: id.into(), kind: NodeKind::Object, type_name: Some(ty.into()), label: String::new() }
    }

    pub fn action(id: impl Into<String>, label: impl Into<String>) -> Self {
        Node { id: id.into(), kind: NodeKind::Action, type_name: None, label: label.into() }
    }

    pub fn condition(id: impl Into<String>, label: impl Into<String>) -> Self {
        Node { id: id.into(), kind: NodeKind::Condition, type_name: None, label: label.into() }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn type_str(&self) -> &str {
        self.type_name.as_deref().unwrap_or("")
    }

    /// Method name of an action label: `setWeight(2)` gives `setWeight`.
    pub fn action_method(&self) -> &str {
        let l = self.label.trim();
        l.split('(').next().unwrap_or(l).trim()
    }

    /// Argument text of an action label.
    pub fn action_args(&self) -> Vec<String> {
        let l = self.label.trim();
        let Some(open) = l.find('(') else { return Vec::new() };
        let inner = l[open + 1..].strip_suffix(')').unwrap_or(&l[open + 1..]).trim();
        if inner.is_empty() {
            return Vec::new();
        }
        split_top_level(inner)
    }

    /// Value of a `key=value` directive in an object label.
    pub fn directive(&self, key: &str) -> Option<&str> {
        self.label.split(';').map(str::trim).find_map(|d| {
            let (k, v) = d.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.label.split(';').map(str::trim).any(|d| d == flag)
    }
}

fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut cur = String::new();
    for c in s.chars() {
        match (quote, c) {
            (Some(q), c) if c == q => {
                quote = None;
                cur.push(c);
            }
            (Some(_), c) => cur.push(c),
            (None, '"') | (None, '\'') => {
                quote = Some(c);
                cur.push(c);
            }
            (None, '(') | (None, '[') => {
                depth += 1;
                cur.push(c);
            }
            (None, ')') | (None, ']') => {
                depth -= 1;
                cur.push(c);
            }
            (None, ',') if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            (None, c) => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<String>,
}

impl Edge {
    pub fn acquisition(src: impl Into<String>, dst: impl Into<String>, via: impl Into<String>) -> Self {
        Edge { src: src.into(), dst: dst.into(), kind: EdgeKind::Acquisition, via: Some(via.into()) }
    }

    pub fn dependency(src: impl Into<String>, dst: impl Into<String>) -> Self {
        Edge { src: src.into(), dst: dst.into(), kind: EdgeKind::Dependency, via: None }
    }

    pub fn id(&self) -> String {
        format!("{}->{}", self.src, self.dst)
    }
}

/// Typed structural dependency graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("graph invariant violated: {}", .0.join("; "))]
pub struct GraphInvariantError(pub Vec<String>);

#[derive(Debug, Error)]
pub enum GraphLoadError {
    #[error("cannot read graph {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed graph document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invariant(#[from] GraphInvariantError),
}

impl DepGraph {
    pub fn from_json_str(text: &str) -> Result<Self, GraphLoadError> {
        let g: DepGraph = serde_json::from_str(text)?;
        g.check_invariants()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphLoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| GraphLoadError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id() == id)
    }

    pub fn action_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Action)
    }

    pub fn acquisition_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Acquisition)
    }

    pub fn incoming(&self, id: &str) -> impl Iterator<Item = &Edge> {
        let id = id.to_string();
        self.edges.iter().filter(move |e| e.dst == id)
    }

    pub fn outgoing(&self, id: &str) -> impl Iterator<Item = &Edge> {
        let id = id.to_string();
        self.edges.iter().filter(move |e| e.src == id)
    }

    /// Object nodes feeding an action through dependency edges.
    pub fn action_sources(&self, action_id: &str) -> Vec<&Node> {
        self.incoming(action_id)
            .filter(|e| e.kind == EdgeKind::Dependency)
            .filter_map(|e| self.node(&e.src))
            .filter(|n| n.kind == NodeKind::Object)
            .collect()
    }

    /// All structural invariants, collected exhaustively.
    pub fn check_invariants(&self) -> Result<(), GraphInvariantError> {
        let mut v = Vec::new();
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                v.push("node with empty id".to_string());
            }
            if !ids.insert(n.id.as_str()) {
                v.push(format!("duplicate node id '{}'", n.id));
            }
            if n.kind == NodeKind::Object && n.type_str().is_empty() {
                v.push(format!("object node '{}' has no type", n.id));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            for end in [&e.src, &e.dst] {
                if !ids.contains(end.as_str()) {
                    v.push(format!("edge {} references unknown node '{end}'", e.id()));
                }
            }
            if !seen.insert(e.id()) {
                v.push(format!("duplicate edge {}", e.id()));
            }
            if e.kind == EdgeKind::Acquisition {
                if let Some(src) = self.node(&e.src) {
                    if src.kind == NodeKind::Action {
                        v.push(format!("action node '{}' has an outgoing acquisition edge", src.id));
                    }
                }
            }
        }
        for a in self.action_nodes() {
            if self.incoming(&a.id).next().is_none() {
                v.push(format!("action node '{}' has no incoming edge", a.id));
            }
        }
        if v.is_empty() && self.topo_order().is_none() {
            v.push("graph contains a cycle".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(GraphInvariantError(v))
        }
    }

    /// Kahn order with ties broken by node position; `None` on a cycle.
    pub fn topo_order(&self) -> Option<Vec<&Node>> {
        let index: BTreeMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut indeg = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            if let Some(&d) = index.get(e.dst.as_str()) {
                indeg[d] += 1;
            }
        }
        let mut ready: BTreeSet<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut out = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_first() {
            out.push(&self.nodes[i]);
            for e in self.outgoing(&self.nodes[i].id) {
                if let Some(&d) = index.get(e.dst.as_str()) {
                    indeg[d] -= 1;
                    if indeg[d] == 0 {
                        ready.insert(d);
                    }
                }
            }
        }
        (out.len() == self.nodes.len()).then_some(out)
    }

    /// Whether `to` is reachable from `from` along edges.
    pub fn reaches(&self, from: &str, to: &str) -> bool {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([from.to_string()]);
        while let Some(cur) = queue.pop_front() {
            if cur == to {
                return true;
            }
            if !seen.insert(cur.clone()) {
                continue;
            }
            for e in self.outgoing(&cur) {
                queue.push_back(e.dst.clone());
            }
        }
        false
    }
}

impl fmt::Display for DepGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Some(order) = self.topo_order() else { return f.write_str("<cyclic graph>") };
        let parts: Vec<String> = order
            .iter()
            .map(|n| match n.kind {
                NodeKind::Object => n.type_str().to_string(),
                _ => n.label.to_string(),
            })
            .collect();
        f.write_str(&parts.join(" -> "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> DepGraph {
        DepGraph {
            nodes: vec![
                Node::object("n1", "Design"),
                Node::object("n2", "Block"),
                Node::object("n3", "Net").with_label("name=clk"),
                Node::action("a1", "setWeight(2)"),
            ],
            edges: vec![
                Edge::acquisition("n1", "n2", "getBlock"),
                Edge::acquisition("n2", "n3", "findNet"),
                Edge::dependency("n3", "a1"),
            ],
        }
    }

    #[test]
    fn json_round_trip() {
        let g = chain();
        let back = DepGraph::from_json_str(&g.to_json()).unwrap();
        assert_eq!(g, back);
        let doc = r#"{"nodes":[{"id":"n1","kind":"object","type":"Design"}],"edges":[]}"#;
        assert_eq!(DepGraph::from_json_str(doc).unwrap().nodes[0].type_str(), "Design");
    }

    #[test]
    fn invariants() {
        assert!(chain().check_invariants().is_ok());
        let mut g = chain();
        g.edges.push(Edge::dependency("n3", "n1"));
        assert!(g.check_invariants().unwrap_err().0[0].contains("cycle"));
        let mut g = chain();
        g.edges.push(Edge::acquisition("a1", "n2", "x"));
        g.nodes.push(Node::object("n2", "Block"));
        let errs = g.check_invariants().unwrap_err().0;
        assert!(errs.iter().any(|e| e.contains("duplicate node")));
        assert!(errs.iter().any(|e| e.contains("outgoing acquisition")));
        let g = DepGraph { nodes: vec![Node::action("a", "x()")], edges: vec![] };
        assert!(g.check_invariants().is_err());
    }

    #[test]
    fn labels() {
        let g = chain();
        assert_eq!(g.node("n3").unwrap().directive("name"), Some("clk"));
        let a = g.node("a1").unwrap();
        assert_eq!(a.action_method(), "setWeight");
        assert_eq!(a.action_args(), vec!["2"]);
        let b = Node::action("a", "f(\"x,y\", g(1, 2))");
        assert_eq!(b.action_args(), vec!["\"x,y\"", "g(1, 2)"]);
    }

    #[test]
    fn display_is_topological() {
        assert_eq!(chain().to_string(), "Design -> Block -> Net -> setWeight(2)");
    }
}
