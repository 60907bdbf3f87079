use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::graph::{DepGraph, EdgeKind, Node, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub node_p: f64,
    pub node_r: f64,
    pub node_f1: f64,
    pub edge_p: f64,
    pub edge_r: f64,
    pub edge_f1: f64,
    pub exact_match: bool,
}

/// Type-level identity of a node: ids and object labels are ignored.
pub fn node_key(n: &Node) -> (NodeKind, String) {
    let k = match n.kind {
        NodeKind::Object => n.type_str().to_string(),
        NodeKind::Action => n.action_method().to_string(),
        NodeKind::Condition => n.label.trim().to_string(),
    };
    (n.kind, k)
}

type EdgeKey = ((NodeKind, String), (NodeKind, String), EdgeKind);

fn edge_keys(g: &DepGraph) -> BTreeSet<EdgeKey> {
    g.edges.iter().filter_map(|e| Some((node_key(g.node(&e.src)?), node_key(g.node(&e.dst)?), e.kind))).collect()
}

/// Precision, recall and F1 from set sizes. Both sets empty counts as a
/// perfect match; an empty side otherwise scores 0.
pub fn prf(common: usize, predicted: usize, truth: usize) -> (f64, f64, f64) {
    if predicted == 0 && truth == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if predicted == 0 { 0.0 } else { common as f64 / predicted as f64 };
    let r = if truth == 0 { 0.0 } else { common as f64 / truth as f64 };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

pub fn graph_metrics(pred: &DepGraph, truth: &DepGraph) -> GraphMetrics {
    let pn: BTreeSet<_> = pred.nodes.iter().map(node_key).collect();
    let tn: BTreeSet<_> = truth.nodes.iter().map(node_key).collect();
    let pe = edge_keys(pred);
    let te = edge_keys(truth);
    let (node_p, node_r, node_f1) = prf(pn.intersection(&tn).count(), pn.len(), tn.len());
    let (edge_p, edge_r, edge_f1) = prf(pe.intersection(&te).count(), pe.len(), te.len());
    GraphMetrics { node_p, node_r, node_f1, edge_p, edge_r, edge_f1, exact_match: pn == tn && pe == te }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::graph::Edge;

    fn g(types: &[&str]) -> DepGraph {
        let nodes: Vec<Node> = types.iter().enumerate().map(|(i, t)| Node::object(format!("x{i}"), *t)).collect();
        let edges = (1..types.len()).map(|i| Edge::acquisition(format!("x{}", i - 1), format!("x{i}"), "m")).collect();
        DepGraph { nodes, edges }
    }

    #[test]
    fn extra_node() {
        let m = graph_metrics(&g(&["Design", "Block", "Net", "Inst"]), &g(&["Design", "Block", "Net"]));
        assert_eq!(m.node_p, 0.75);
        assert_eq!(m.node_r, 1.0);
        assert!((m.node_f1 - 6.0 / 7.0).abs() < 1e-15);
        assert!(!m.exact_match);
    }

    #[test]
    fn identity_and_disjoint() {
        let a = g(&["Design", "Block"]);
        let m = graph_metrics(&a, &a);
        assert!(m.exact_match);
        assert_eq!((m.node_f1, m.edge_f1), (1.0, 1.0));
        let m = graph_metrics(&g(&["Net"]), &g(&["Inst"]));
        assert_eq!((m.node_p, m.node_r, m.node_f1), (0.0, 0.0, 0.0));
        assert!(!m.exact_match);
    }

    #[test]
    fn ids_and_labels_ignored() {
        let mut a = g(&["Design", "Block"]);
        let b = g(&["Design", "Block"]);
        a.nodes[1].id = "other".into();
        a.nodes[1].label = "name=x".into();
        a.edges[0].dst = "other".into();
        assert!(graph_metrics(&a, &b).exact_match);
    }
}
