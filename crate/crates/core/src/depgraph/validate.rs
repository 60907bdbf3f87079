use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::graph::{DepGraph, Edge, EdgeKind, GraphInvariantError, Node, NodeKind};
use crate::schema::ApiSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Valid,
    MissingButReal,
    Hallucinated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeVerdict {
    Ok,
    InvalidTransition,
    UnknownMethod,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    /// Node id or edge id.
    pub target: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertedIntermediate {
    pub type_name: String,
    pub between_edge: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphReport {
    pub node_classes: BTreeMap<String, NodeClass>,
    pub edge_verdicts: BTreeMap<String, EdgeVerdict>,
    pub inserted_intermediates: Vec<InsertedIntermediate>,
    pub feedback: Vec<Feedback>,
}

pub const UNREACHABLE_NODE: &str = "UNREACHABLE_NODE";

impl GraphReport {
    pub fn hallucinated(&self) -> impl Iterator<Item = &str> {
        self.node_classes.iter().filter(|(_, c)| **c == NodeClass::Hallucinated).map(|(id, _)| id.as_str())
    }

    pub fn invalid_edges(&self) -> impl Iterator<Item = &str> {
        self.edge_verdicts.iter().filter(|(_, v)| **v != EdgeVerdict::Ok).map(|(id, _)| id.as_str())
    }

    /// No hallucinated nodes, no invalid edges, every object node grounded
    /// at a session root.
    pub fn is_valid(&self) -> bool {
        self.hallucinated().next().is_none()
            && self.invalid_edges().next().is_none()
            && !self.feedback.iter().any(|f| f.code == UNREACHABLE_NODE)
    }
}

fn fb(target: impl Into<String>, code: &str, message: impl Into<String>) -> Feedback {
    Feedback { target: target.into(), code: code.to_string(), message: message.into() }
}

/// Shortest type-level paths `from -> ... -> to` of at least two steps.
/// Returns the unique path's intermediates, or every candidate first hop
/// when several shortest paths exist.
pub(crate) enum SchemaPath {
    Unique(Vec<String>),
    Ambiguous(Vec<Vec<String>>),
    None,
}

pub(crate) fn shortest_paths(schema: &ApiSchema, from: &str, to: &str) -> SchemaPath {
    let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
    let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut queue = VecDeque::new();
    dist.insert(from, 0);
    queue.push_back(from);
    while let Some(cur) = queue.pop_front() {
        let d = dist[cur];
        for next in schema.successors(cur) {
            match dist.get(next) {
                None => {
                    dist.insert(next, d + 1);
                    preds.insert(next, vec![cur]);
                    queue.push_back(next);
                }
                Some(&nd) if nd == d + 1 => preds.entry(next).or_default().push(cur),
                _ => {}
            }
        }
    }
    let Some(&d) = dist.get(to) else { return SchemaPath::None };
    if d < 2 || to == from {
        return SchemaPath::None;
    }
    // enumerate all shortest paths back from `to`; hierarchies are shallow
    let mut paths: Vec<Vec<String>> = Vec::new();
    let mut stack: Vec<(String, Vec<String>)> = vec![(to.to_string(), Vec::new())];
    while let Some((cur, acc)) = stack.pop() {
        if cur == from {
            let mut p = acc.clone();
            p.reverse();
            paths.push(p);
            if paths.len() > 16 {
                break;
            }
            continue;
        }
        for p in preds.get(cur.as_str()).into_iter().flatten() {
            let mut next = acc.clone();
            if *p != from {
                next.push(p.to_string());
            }
            stack.push((p.to_string(), next));
        }
    }
    paths.sort();
    paths.dedup();
    match paths.len() {
        0 => SchemaPath::None,
        1 => SchemaPath::Unique(paths.pop().unwrap()),
        _ => SchemaPath::Ambiguous(paths),
    }
}

/// A method (or attribute) of `src` producing `dst`, directly or
/// element-wise.
pub(crate) fn transition_methods<'a>(schema: &'a ApiSchema, src: &str, dst: &str) -> Vec<&'a str> {
    let Some(decl) = schema.types.get(src) else { return Vec::new() };
    decl.methods
        .values()
        .filter(|m| m.returns.base == dst)
        .map(|m| m.name.as_str())
        .chain(decl.attributes.iter().filter(|(_, t)| t.base == dst).map(|(n, _)| n.as_str()))
        .collect()
}

/// Classify nodes, judge edges, and propose repairs.
pub fn validate_graph(g: &DepGraph, schema: &ApiSchema) -> Result<GraphReport, GraphInvariantError> {
    g.check_invariants()?;
    let mut r = GraphReport::default();

    for n in &g.nodes {
        let class = match n.kind {
            NodeKind::Object => {
                if schema.is_object_type(n.type_str()) {
                    NodeClass::Valid
                } else {
                    r.feedback.push(fb(
                        &n.id,
                        "HALLUCINATED_TYPE",
                        format!("type '{}' is not declared in the schema", n.type_str()),
                    ));
                    NodeClass::Hallucinated
                }
            }
            NodeKind::Condition => NodeClass::Valid,
            NodeKind::Action => {
                let method = n.action_method();
                let sources = g.action_sources(&n.id);
                if sources.iter().any(|s| schema.lookup_method(s.type_str(), method).is_some()) {
                    NodeClass::Valid
                } else {
                    let types: Vec<&str> = sources.iter().map(|s| s.type_str()).collect();
                    r.feedback.push(fb(
                        &n.id,
                        "INVALID_ACTION",
                        format!("no dependency source of type {types:?} declares method '{method}'"),
                    ));
                    NodeClass::Hallucinated
                }
            }
        };
        r.node_classes.insert(n.id.clone(), class);
    }

    let mut repairable = BTreeSet::new();
    for e in &g.edges {
        let id = e.id();
        let src = g.node(&e.src).expect("checked");
        let dst = g.node(&e.dst).expect("checked");
        let verdict = match (e.kind, src.kind, dst.kind) {
            (EdgeKind::Acquisition, NodeKind::Object, NodeKind::Object) => {
                let v = acquisition_verdict(schema, src, dst, e, &mut r.feedback);
                if v != EdgeVerdict::Ok && propose_path(schema, src, dst, &id, &mut r) {
                    repairable.insert(id.clone());
                }
                v
            }
            (EdgeKind::Dependency, NodeKind::Object, NodeKind::Action) => {
                if r.node_classes[&dst.id] == NodeClass::Valid {
                    EdgeVerdict::Ok
                } else {
                    EdgeVerdict::UnknownMethod
                }
            }
            // condition nodes and other dependency shapes are structural only
            (EdgeKind::Dependency, _, _) => EdgeVerdict::Ok,
            (EdgeKind::Acquisition, _, _) => {
                r.feedback.push(fb(&id, "INVALID_TRANSITION", "acquisition edges must connect object nodes"));
                EdgeVerdict::InvalidTransition
            }
        };
        r.edge_verdicts.insert(id, verdict);
    }

    // grounding: object nodes reachable from a root-typed node
    let root_types: BTreeSet<&str> = schema.roots.values().map(String::as_str).collect();
    let mut reached: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<&str> = g
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Object && root_types.contains(n.type_str()))
        .map(|n| n.id.as_str())
        .collect();
    while let Some(cur) = queue.pop_front() {
        if !reached.insert(cur) {
            continue;
        }
        for e in g.outgoing(cur) {
            let ok = r.edge_verdicts[&e.id()] == EdgeVerdict::Ok || repairable.contains(&e.id());
            if e.kind == EdgeKind::Acquisition && ok {
                queue.push_back(e.dst.as_str());
            }
        }
    }
    for n in &g.nodes {
        if n.kind == NodeKind::Object && r.node_classes[&n.id] == NodeClass::Valid && !reached.contains(n.id.as_str()) {
            r.feedback.push(fb(
                &n.id,
                UNREACHABLE_NODE,
                format!("'{}' is not acquired from a session root through valid edges", n.type_str()),
            ));
        }
    }
    Ok(r)
}

fn acquisition_verdict(
    schema: &ApiSchema,
    src: &Node,
    dst: &Node,
    e: &Edge,
    feedback: &mut Vec<Feedback>,
) -> EdgeVerdict {
    let id = e.id();
    let (s, d) = (src.type_str(), dst.type_str());
    if !schema.is_object_type(s) || !schema.is_object_type(d) {
        feedback.push(fb(&id, "INVALID_TRANSITION", format!("cannot check {s} -> {d}: undeclared endpoint type")));
        return EdgeVerdict::InvalidTransition;
    }
    let producers = transition_methods(schema, s, d);
    match &e.via {
        Some(m) => {
            let ret = schema
                .lookup_method(s, m)
                .map(|sig| sig.returns.base.clone())
                .or_else(|| schema.lookup_attribute(s, m).map(|t| t.base.clone()));
            match ret {
                None => {
                    feedback.push(fb(
                        &id,
                        "UNKNOWN_METHOD",
                        format!("{s} has no method '{m}'; producers of {d}: {producers:?}"),
                    ));
                    EdgeVerdict::UnknownMethod
                }
                Some(b) if b == d => EdgeVerdict::Ok,
                Some(b) => {
                    feedback.push(fb(&id, "INVALID_TRANSITION", format!("{s}.{m} yields {b}, not {d}")));
                    EdgeVerdict::InvalidTransition
                }
            }
        }
        None if !producers.is_empty() => EdgeVerdict::Ok,
        None => {
            feedback.push(fb(&id, "INVALID_TRANSITION", format!("no method of {s} yields {d}")));
            EdgeVerdict::InvalidTransition
        }
    }
}

fn propose_path(schema: &ApiSchema, src: &Node, dst: &Node, edge_id: &str, r: &mut GraphReport) -> bool {
    let (s, d) = (src.type_str(), dst.type_str());
    if !schema.is_object_type(s) || !schema.is_object_type(d) {
        return false;
    }
    match shortest_paths(schema, s, d) {
        SchemaPath::Unique(mids) => {
            for x in &mids {
                r.inserted_intermediates
                    .push(InsertedIntermediate { type_name: x.clone(), between_edge: edge_id.to_string() });
                r.node_classes.insert(format!("{edge_id}#{x}"), NodeClass::MissingButReal);
            }
            r.feedback.push(fb(
                edge_id,
                "MISSING_INTERMEDIATE",
                format!("insert {} between {s} and {d}", mids.join(" -> ")),
            ));
            true
        }
        SchemaPath::Ambiguous(paths) => {
            let c: Vec<String> = paths.iter().map(|p| p.join(" -> ")).collect();
            r.feedback.push(fb(edge_id, "AMBIGUOUS_PATH", format!("several paths from {s} to {d}: {}", c.join(" | "))));
            false
        }
        SchemaPath::None => false,
    }
}

/// Apply the unique-path repairs of `report`: each repaired edge becomes a
/// chain through freshly inserted intermediate nodes.
pub fn apply_repairs(g: &DepGraph, report: &GraphReport, schema: &ApiSchema) -> DepGraph {
    let mut out = g.clone();
    let mut by_edge: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for ins in &report.inserted_intermediates {
        by_edge.entry(ins.between_edge.as_str()).or_default().push(ins.type_name.as_str());
    }
    for (edge_id, mids) in by_edge {
        let Some(pos) = out.edges.iter().position(|e| e.id() == edge_id) else { continue };
        let e = out.edges.remove(pos);
        let dst_ty = g.node(&e.dst).map(|n| n.type_str().to_string()).unwrap_or_default();
        let mut prev_id = e.src.clone();
        let mut prev_ty = g.node(&e.src).map(|n| n.type_str().to_string()).unwrap_or_default();
        for (i, x) in mids.iter().enumerate() {
            let nid = format!("{}_{}{}", e.src, x.to_lowercase(), i);
            out.nodes.push(Node::object(&nid, *x));
            let via = first_producer(schema, &prev_ty, x);
            out.edges.push(Edge { src: prev_id, dst: nid.clone(), kind: EdgeKind::Acquisition, via });
            prev_id = nid;
            prev_ty = x.to_string();
        }
        let via = first_producer(schema, &prev_ty, &dst_ty);
        out.edges.push(Edge { src: prev_id, dst: e.dst.clone(), kind: EdgeKind::Acquisition, via });
    }
    out
}

fn first_producer(schema: &ApiSchema, src: &str, dst: &str) -> Option<String> {
    transition_methods(schema, src, dst).first().map(|s| s.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::toy_schema;

    fn chain() -> DepGraph {
        DepGraph {
            nodes: vec![
                Node::object("n1", "Design"),
                Node::object("n2", "Block"),
                Node::object("n3", "Net"),
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
    fn valid_chain() {
        let r = validate_graph(&chain(), &toy_schema()).unwrap();
        assert!(r.node_classes.values().all(|c| *c == NodeClass::Valid));
        assert!(r.edge_verdicts.values().all(|v| *v == EdgeVerdict::Ok));
        assert!(r.is_valid());
        assert!(r.feedback.is_empty());
    }

    #[test]
    fn hallucinated_type() {
        let mut g = chain();
        g.nodes[2].type_name = Some("Wire".into());
        let r = validate_graph(&g, &toy_schema()).unwrap();
        assert_eq!(r.node_classes["n3"], NodeClass::Hallucinated);
        assert!(!r.is_valid());
    }

    #[test]
    fn skipped_intermediate() {
        let g = DepGraph {
            nodes: vec![Node::object("n1", "Design"), Node::object("n3", "Net")],
            edges: vec![Edge { src: "n1".into(), dst: "n3".into(), kind: EdgeKind::Acquisition, via: None }],
        };
        let s = toy_schema();
        let r = validate_graph(&g, &s).unwrap();
        assert_eq!(r.edge_verdicts["n1->n3"], EdgeVerdict::InvalidTransition);
        assert_eq!(
            r.inserted_intermediates,
            vec![InsertedIntermediate { type_name: "Block".into(), between_edge: "n1->n3".into() }]
        );
        assert_eq!(r.node_classes["n1->n3#Block"], NodeClass::MissingButReal);
        let fixed = apply_repairs(&g, &r, &s);
        let r2 = validate_graph(&fixed, &s).unwrap();
        assert!(r2.is_valid(), "{r2:?}");
        assert_eq!(fixed.to_string(), "Design -> Block -> Net");
    }

    #[test]
    fn unknown_via_method() {
        let mut g = chain();
        g.edges[1].via = Some("findWire".into());
        let r = validate_graph(&g, &toy_schema()).unwrap();
        assert_eq!(r.edge_verdicts["n2->n3"], EdgeVerdict::UnknownMethod);
    }

    #[test]
    fn unreachable_node() {
        let g = DepGraph { nodes: vec![Node::object("x", "Net")], edges: vec![] };
        let r = validate_graph(&g, &toy_schema()).unwrap();
        assert_eq!(r.node_classes["x"], NodeClass::Valid);
        assert!(!r.is_valid());
    }

    #[test]
    fn invalid_action() {
        let mut g = chain();
        g.nodes[3].label = "setArea(2)".into();
        let r = validate_graph(&g, &toy_schema()).unwrap();
        assert_eq!(r.node_classes["a1"], NodeClass::Hallucinated);
        assert_eq!(r.edge_verdicts["n3->a1"], EdgeVerdict::UnknownMethod);
    }

    #[test]
    fn every_input_element_reported_once() {
        let g = chain();
        let r = validate_graph(&g, &toy_schema()).unwrap();
        assert_eq!(r.edge_verdicts.len(), g.edges.len());
        for n in &g.nodes {
            assert!(r.node_classes.contains_key(&n.id));
        }
    }
}
