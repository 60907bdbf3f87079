#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use structverify::depgraph::{DepGraph, PatternExtractor};
use structverify::fixtures::{odb_index, odb_schema};
use structverify::retrieval::{retrieve, CorpusIndex};
use structverify::schema::ApiSchema;
use structverify::verifier::{verify_all, RuleJudge, VerdictReport, VerifierConfig, VerifyContext};

pub mod gen;

pub fn fixture_dir(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// A labelled program from `fixtures/programs/<class>/`.
#[derive(Debug, Clone)]
pub struct ProgramFixture {
    pub class: String,
    pub name: String,
    pub prompt: String,
    pub source: String,
}

impl ProgramFixture {
    /// Layer the fixture is meant to fail at; 0 for clean programs.
    pub fn expected_layer(&self) -> u8 {
        match self.class.as_str() {
            "clean" => 0,
            "syntax" => 1,
            "use_before_def" | "edge_unrealized" | "null_unguarded" => 2,
            "unknown_method" | "bad_enum" | "arity" => 3,
            "missing_output" => 4,
            other => panic!("unknown fixture class {other}"),
        }
    }
}

pub fn program_fixtures() -> Vec<ProgramFixture> {
    let mut out = Vec::new();
    let root = fixture_dir("programs");
    let mut classes: Vec<_> = fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    classes.sort();
    for dir in classes {
        let class = dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut files: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        for f in files.into_iter().filter(|f| f.extension().is_some_and(|x| x == "qas")) {
            let source = fs::read_to_string(&f).unwrap();
            let prompt = source
                .lines()
                .next()
                .and_then(|l| l.strip_prefix("# prompt:"))
                .unwrap_or_else(|| panic!("{} has no prompt header", f.display()))
                .trim()
                .to_string();
            let name = f.file_stem().unwrap().to_string_lossy().into_owned();
            out.push(ProgramFixture { class: class.clone(), name, prompt, source });
        }
    }
    out
}

pub struct OdbBench {
    pub schema: ApiSchema,
    pub index: CorpusIndex,
    pub extractor: PatternExtractor,
}

impl OdbBench {
    pub fn new() -> Self {
        OdbBench { schema: odb_schema(), index: odb_index(), extractor: PatternExtractor::default() }
    }

    pub fn graph(&self, prompt: &str) -> DepGraph {
        self.extractor.graph_for(prompt, &self.schema).unwrap_or_else(|e| panic!("{prompt}: {e}"))
    }

    pub fn verify(&self, prompt: &str, source: &str, max_layer: u8) -> VerdictReport {
        let g = self.graph(prompt);
        self.verify_with(&g, prompt, source, max_layer)
    }

    pub fn verify_with(&self, g: &DepGraph, prompt: &str, source: &str, max_layer: u8) -> VerdictReport {
        let ev = retrieve(g, &self.index, 3);
        let ctx = VerifyContext {
            schema: &self.schema,
            graph: g,
            evidence: &ev,
            judge: &RuleJudge,
            prompt,
            config: VerifierConfig { max_layer },
        };
        verify_all(source, &ctx).unwrap()
    }
}
