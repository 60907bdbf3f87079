//! Structural dependency graphs: the execution contract a program must
//! realize, plus validation, extraction, recovery from code, and scoring.

mod extract;
mod graph;
mod ground_truth;
mod metrics;
mod validate;

pub use extract::{
    extract_graph, extract_graph_from, CommandExtractor, ExtractError, Extraction, ExtractionRequest, ExtractorError,
    GraphExtractor, PatternExtractor, ScriptedExtractor,
};
pub use graph::{DepGraph, Edge, EdgeKind, GraphInvariantError, GraphLoadError, Node, NodeKind};
pub use ground_truth::{ground_truth_graph, GroundTruth};
pub use metrics::{graph_metrics, node_key, prf, GraphMetrics};
pub use validate::{
    apply_repairs, validate_graph, EdgeVerdict, Feedback, GraphReport, InsertedIntermediate, NodeClass,
    UNREACHABLE_NODE,
};
