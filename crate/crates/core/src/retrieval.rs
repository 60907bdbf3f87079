//! Graph-conditioned keyword retrieval over an API usage corpus.
//!
//! Each acquisition edge and each action node becomes one localized query.
//! Scoring is TF-IDF over lowercase alphanumeric tokens, with camelCase
//! identifiers also split into their parts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depgraph::{DepGraph, EdgeKind, NodeKind};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub id: String,
    pub api_path: String,
    pub text: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate corpus document id '{0}'")]
    DuplicateId(String),
    #[error("unknown evidence target '{0}'")]
    UnknownTarget(String),
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Lowercase alphanumeric tokens; camelCase words also yield their parts.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()) {
        out.push(word.to_ascii_lowercase());
        let parts = camel_parts(word);
        if parts.len() > 1 {
            out.extend(parts.into_iter().map(|p| p.to_ascii_lowercase()));
        }
    }
    out
}

fn camel_parts(word: &str) -> Vec<&str> {
    let bytes = word.as_bytes();
    let mut parts = Vec::new();
    let mut start = 0;
    for i in 1..bytes.len() {
        let boundary = bytes[i].is_ascii_uppercase()
            && (bytes[i - 1].is_ascii_lowercase()
                || bytes[i - 1].is_ascii_digit()
                || (i + 1 < bytes.len() && bytes[i + 1].is_ascii_lowercase() && bytes[i - 1].is_ascii_uppercase()));
        if boundary {
            parts.push(&word[start..i]);
            start = i;
        }
    }
    parts.push(&word[start..]);
    parts
}

/// Inverted index over `api_path + text + tags`.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    docs: Vec<CorpusDoc>,
    postings: BTreeMap<String, Vec<(usize, u32)>>,
}

impl CorpusIndex {
    pub fn build(docs: Vec<CorpusDoc>) -> Result<Self, RetrievalError> {
        let mut ids = BTreeSet::new();
        for d in &docs {
            if !ids.insert(d.id.as_str()) {
                return Err(RetrievalError::DuplicateId(d.id.clone()));
            }
        }
        let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
        for (i, d) in docs.iter().enumerate() {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            let tags: Vec<&str> = d.tags.iter().map(String::as_str).collect();
            for t in tokenize(&format!("{} {} {}", d.api_path, d.text, tags.join(" "))) {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i, n));
            }
        }
        Ok(CorpusIndex { docs, postings })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| RetrievalError::Io { path: path.display().to_string(), source })?;
        Self::build(serde_json::from_str(&text)?)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn doc(&self, id: &str) -> Option<&CorpusDoc> {
        self.docs.iter().find(|d| d.id == id)
    }

    fn idf(&self, df: usize) -> f64 {
        (1.0 + self.docs.len() as f64 / df as f64).ln()
    }

    /// Top `k` documents for a free-text query, excluding `exclude`.
    pub fn search(&self, query: &str, k: usize, exclude: &BTreeSet<String>) -> Vec<Hit> {
        let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = self.idf(list.len());
            for &(doc, tf) in list {
                *scores.entry(doc).or_insert(0.0) += tf as f64 * idf;
            }
        }
        let mut hits: Vec<Hit> = scores
            .into_iter()
            .filter(|(i, s)| *s > 0.0 && !exclude.contains(&self.docs[*i].id))
            .map(|(i, score)| Hit { doc_id: self.docs[i].id.clone(), api_path: self.docs[i].api_path.clone(), score })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
        hits.truncate(k);
        hits
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub api_path: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEvidence {
    pub query: String,
    pub hits: Vec<Hit>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    /// Keyed by edge id (`src->dst`) or action node id.
    pub per_target: BTreeMap<String, TargetEvidence>,
    pub version: u64,
}

impl EvidenceSet {
    pub fn is_empty(&self) -> bool {
        self.per_target.values().all(|t| t.hits.is_empty())
    }

    pub fn api_paths(&self) -> BTreeSet<&str> {
        self.per_target.values().flat_map(|t| t.hits.iter().map(|h| h.api_path.as_str())).collect()
    }

    pub fn doc_ids(&self) -> BTreeSet<String> {
        self.per_target.values().flat_map(|t| t.hits.iter().map(|h| h.doc_id.clone())).collect()
    }

    /// Snippets of every hit, deduplicated, in target order.
    pub fn snippets(&self, index: &CorpusIndex) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in self.per_target.values() {
            for h in &t.hits {
                if seen.insert(h.doc_id.clone()) {
                    if let Some(d) = index.doc(&h.doc_id) {
                        out.push(d.snippet.clone());
                    }
                }
            }
        }
        out
    }
}

/// One query per acquisition edge, per printed read and per action node.
pub fn queries(g: &DepGraph) -> BTreeMap<String, String> {
    let mut q = BTreeMap::new();
    for e in g.edges.iter().filter(|e| e.kind == EdgeKind::Acquisition) {
        let (Some(s), Some(d)) = (g.node(&e.src), g.node(&e.dst)) else { continue };
        let mut text = format!("{} {}", s.type_str(), d.type_str());
        if let Some(v) = &e.via {
            text = format!("{text} {v}");
        }
        q.insert(e.id(), text);
    }
    for n in g.nodes.iter().filter(|n| n.kind == NodeKind::Object) {
        if let Some(getter) = n.directive("print") {
            q.insert(n.id.clone(), format!("{getter} {}", n.type_str()));
        }
    }
    for a in g.nodes.iter().filter(|n| n.kind == NodeKind::Action) {
        let recv: Vec<&str> = g.action_sources(&a.id).iter().map(|n| n.type_str()).collect();
        q.insert(a.id.clone(), format!("{} {}", a.action_method(), recv.join(" ")).trim().to_string());
    }
    q
}

pub fn retrieve(g: &DepGraph, index: &CorpusIndex, k: usize) -> EvidenceSet {
    let none = BTreeSet::new();
    let per_target = queries(g)
        .into_iter()
        .map(|(target, query)| {
            let hits = index.search(&query, k, &none);
            (target, TargetEvidence { query, hits })
        })
        .collect();
    EvidenceSet { per_target, version: 0 }
}

/// Recompute one target's hits without `exclude`; every other target is
/// carried over unchanged.
pub fn reretrieve_edge(
    ev: &EvidenceSet,
    target: &str,
    index: &CorpusIndex,
    k: usize,
    exclude: &BTreeSet<String>,
) -> Result<EvidenceSet, RetrievalError> {
    let cur = ev.per_target.get(target).ok_or_else(|| RetrievalError::UnknownTarget(target.to_string()))?;
    let mut next = ev.clone();
    let hits = index.search(&cur.query, k, exclude);
    next.per_target.insert(target.to_string(), TargetEvidence { query: cur.query.clone(), hits });
    next.version += 1;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::PatternExtractor;
    use crate::fixtures::{toy_corpus, toy_index, toy_schema};

    fn graph() -> DepGraph {
        PatternExtractor::default().graph_for("set the weight of net clk to 2", &toy_schema()).unwrap()
    }

    #[test]
    fn tokens() {
        assert_eq!(tokenize("Block.findNet"), vec!["block", "findnet", "find", "net"]);
        assert_eq!(tokenize("getITerms x"), vec!["getiterms", "get", "i", "terms", "x"]);
    }

    #[test]
    fn one_posting_list_per_token() {
        let idx = toy_index();
        let mut distinct = BTreeSet::new();
        for d in toy_corpus() {
            let tags: Vec<String> = d.tags.iter().cloned().collect();
            distinct.extend(tokenize(&format!("{} {} {}", d.api_path, d.text, tags.join(" "))));
        }
        assert_eq!(idx.term_count(), distinct.len());
    }

    #[test]
    fn empty_and_duplicate() {
        let idx = CorpusIndex::build(vec![]).unwrap();
        let ev = retrieve(&graph(), &idx, 3);
        assert!(ev.is_empty());
        let mut docs = toy_corpus();
        docs.push(docs[0].clone());
        assert!(matches!(CorpusIndex::build(docs), Err(RetrievalError::DuplicateId(_))));
    }

    #[test]
    fn edge_query_top_hit() {
        let ev = retrieve(&graph(), &toy_index(), 3);
        assert_eq!(ev.per_target.len(), 3);
        let t = &ev.per_target["n2->n3"];
        assert_eq!(t.hits[0].api_path, "Block.findNet");
        for t in ev.per_target.values() {
            assert!(t.hits.len() <= 3);
            assert!(t
                .hits
                .windows(2)
                .all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].doc_id < w[1].doc_id)));
        }
    }

    #[test]
    fn reretrieve_is_local() {
        let idx = toy_index();
        let ev = retrieve(&graph(), &idx, 3);
        let top = ev.per_target["n2->n3"].hits[0].doc_id.clone();
        let second = ev.per_target["n2->n3"].hits[1].doc_id.clone();
        let ex: BTreeSet<String> = [top].into();
        let ev2 = reretrieve_edge(&ev, "n2->n3", &idx, 3, &ex).unwrap();
        assert_eq!(ev2.version, ev.version + 1);
        assert_eq!(ev2.per_target["n2->n3"].hits[0].doc_id, second);
        for (k, v) in &ev.per_target {
            if k != "n2->n3" {
                assert_eq!(&ev2.per_target[k], v);
            }
        }
        let all: BTreeSet<String> = toy_corpus().into_iter().map(|d| d.id).collect();
        assert!(reretrieve_edge(&ev, "n2->n3", &idx, 3, &all).unwrap().per_target["n2->n3"].hits.is_empty());
        assert!(matches!(reretrieve_edge(&ev, "zz", &idx, 3, &ex), Err(RetrievalError::UnknownTarget(_))));
    }
}
