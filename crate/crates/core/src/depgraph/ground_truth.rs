use std::collections::BTreeMap;

use serde::Serialize;

use super::graph::{DepGraph, Edge, EdgeKind, Node};
use crate::qas::TypedScript;
use crate::schema::ApiSchema;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub graph: DepGraph,
    /// Call sites whose receiver type could not be resolved.
    pub skipped_calls: usize,
}

struct Acc {
    g: DepGraph,
    by_type: BTreeMap<String, String>,
    actions: usize,
}

impl Acc {
    fn object(&mut self, ty: &str) -> String {
        if let Some(id) = self.by_type.get(ty) {
            return id.clone();
        }
        let id = format!("t_{ty}");
        self.g.nodes.push(Node::object(&id, ty));
        self.by_type.insert(ty.to_string(), id.clone());
        id
    }

    fn edge(&mut self, src: &str, dst: &str, kind: EdgeKind, via: Option<String>) {
        if src == dst || self.g.edges.iter().any(|e| e.src == src && e.dst == dst) || self.g.reaches(dst, src) {
            return;
        }
        self.g.edges.push(Edge { src: src.to_string(), dst: dst.to_string(), kind, via });
    }
}

/// Recover the dependency graph a typed program actually realizes.
/// Object nodes are keyed by type, so repeated acquisitions merge.
pub fn ground_truth_graph(ts: &TypedScript, schema: &ApiSchema) -> GroundTruth {
    let mut acc = Acc { g: DepGraph::default(), by_type: BTreeMap::new(), actions: 0 };
    let mut skipped = 0;
    for call in &ts.call_sites {
        let Some(recv) = call.receiver_type.known().filter(|t| !t.many && schema.is_object_type(&t.base)) else {
            skipped += 1;
            continue;
        };
        let Some(sig) = schema.lookup_method(&recv.base, &call.method) else {
            skipped += 1;
            continue;
        };
        if schema.is_object_type(&sig.returns.base) {
            let src = acc.object(&recv.base);
            let dst = acc.object(&sig.returns.base);
            acc.edge(&src, &dst, EdgeKind::Acquisition, Some(call.method.clone()));
        }
        if sig.mutates {
            let src = acc.object(&recv.base);
            acc.actions += 1;
            let id = format!("a{}", acc.actions);
            let label = format!("{}({})", call.method, call.arg_text.join(", "));
            acc.g.nodes.push(Node::action(&id, label));
            acc.edge(&src, &id, EdgeKind::Dependency, None);
            for arg in &call.args {
                if let Some(t) = arg.known().filter(|t| !t.many && schema.is_object_type(&t.base)) {
                    let a = acc.object(&t.base);
                    acc.edge(&a, &id, EdgeKind::Dependency, None);
                }
            }
        }
    }
    for a in &ts.attr_accesses {
        let (Some(recv), Some(res)) = (a.receiver_type.known(), &a.resolved) else { continue };
        if schema.is_object_type(&recv.base) && schema.is_object_type(&res.base) {
            let src = acc.object(&recv.base);
            let dst = acc.object(&res.base);
            acc.edge(&src, &dst, EdgeKind::Acquisition, Some(a.name.clone()));
        }
    }
    GroundTruth { graph: acc.g, skipped_calls: skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::validate_graph;
    use crate::fixtures::{toy_schema, CANONICAL_PROGRAM};
    use crate::qas::{infer_types, parse};

    fn gt(src: &str) -> GroundTruth {
        let s = toy_schema();
        ground_truth_graph(&infer_types(&parse(src).unwrap(), &s), &s)
    }

    #[test]
    fn canonical() {
        let g = gt(CANONICAL_PROGRAM).graph;
        let types: Vec<&str> =
            g.nodes.iter().map(|n| if n.type_str().is_empty() { n.label.as_str() } else { n.type_str() }).collect();
        assert_eq!(types, vec!["Design", "Block", "Net", "setWeight(2)"]);
        let edges: Vec<String> = g.edges.iter().map(|e| e.id()).collect();
        assert_eq!(edges, vec!["t_Design->t_Block", "t_Block->t_Net", "t_Net->a1"]);
        assert!(validate_graph(&g, &toy_schema()).unwrap().is_valid());
    }

    #[test]
    fn query_only_has_no_action() {
        let g = gt("for n in design.getBlock().getNets():\n    print(n.getName())\n").graph;
        assert!(g.action_nodes().next().is_none());
    }

    #[test]
    fn type_keyed_merge() {
        let src = "block = design.getBlock()\nfor n in block.getNets():\n    print(n.getName())\nm = block.findNet(\"clk\")\n";
        let g = gt(src).graph;
        assert_eq!(g.nodes.iter().filter(|n| n.type_str() == "Net").count(), 1);
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn unknown_receivers_are_tallied() {
        let t = gt("x = ghost.getNets()\ny = x.getName()\n");
        assert_eq!(t.skipped_calls, 2);
        assert!(t.graph.nodes.is_empty());
    }
}
