//! Bundled fixtures. The toy set is a five-type schema mirroring the
//! `Design -> Block -> Net` hierarchy, a matching snapshot and an
//! eight-document usage corpus. The odb set is a seven-type schema used by
//! the benchmark suite, with its own corpus and a synthetic GCD-scale
//! snapshot.

use crate::retrieval::{CorpusDoc, CorpusIndex};
use crate::runtime::DesignDb;
use crate::schema::ApiSchema;

pub const TOY_SCHEMA_JSON: &str = include_str!("../fixtures/toy_schema.json");
pub const TOY_SNAPSHOT_JSON: &str = include_str!("../fixtures/toy_snapshot.json");
pub const TOY_CORPUS_JSON: &str = include_str!("../fixtures/toy_corpus.json");
pub const ODB_SCHEMA_JSON: &str = include_str!("../fixtures/odb_schema.json");
pub const ODB_CORPUS_JSON: &str = include_str!("../fixtures/odb_corpus.json");

/// The program used throughout the docs and tests.
pub const CANONICAL_PROGRAM: &str = "block = design.getBlock()
net = block.findNet(\"clk\")
if net != None:
    net.setWeight(2)
";

pub fn toy_schema() -> ApiSchema {
    ApiSchema::from_json_str(TOY_SCHEMA_JSON).expect("bundled toy schema is valid")
}

pub fn toy_snapshot(schema: &ApiSchema) -> DesignDb {
    DesignDb::from_json_str(TOY_SNAPSHOT_JSON, schema).expect("bundled toy snapshot is valid")
}

pub fn toy_corpus() -> Vec<CorpusDoc> {
    serde_json::from_str(TOY_CORPUS_JSON).expect("bundled toy corpus is valid")
}

pub fn toy_index() -> CorpusIndex {
    CorpusIndex::build(toy_corpus()).expect("bundled corpus ids are unique")
}

pub fn odb_schema() -> ApiSchema {
    ApiSchema::from_json_str(ODB_SCHEMA_JSON).expect("bundled odb schema is valid")
}

pub fn odb_corpus() -> Vec<CorpusDoc> {
    serde_json::from_str(ODB_CORPUS_JSON).expect("bundled odb corpus is valid")
}

pub fn odb_index() -> CorpusIndex {
    CorpusIndex::build(odb_corpus()).expect("bundled corpus ids are unique")
}

/// GCD-scale synthetic snapshot for the odb schema.
pub fn gcd_snapshot(schema: &ApiSchema) -> DesignDb {
    crate::runtime::synthetic::gcd(schema, 7).expect("odb schema matches the generator")
}
