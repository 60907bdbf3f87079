//! Structure-aware verification and synthesis of design-database scripts.
//!
//! A prompt becomes a structural dependency graph, the graph conditions
//! retrieval and generation, and every candidate passes a staged verifier
//! before the single execution against the mock design database.

pub mod bench;
pub mod controller;
pub mod depgraph;
pub mod external;
pub mod fixtures;
pub mod orchestrator;
pub mod qas;
pub mod retrieval;
pub mod runtime;
pub mod schema;
pub mod uncertainty;
pub mod verifier;
