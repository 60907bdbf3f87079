//! Staged four-layer pre-execution verifier.
//!
//! Layers run in order (syntax, causal flow, API alignment, semantics) and
//! stop at the first layer reporting an error. Warnings never set the
//! failure layer.

mod judge;
mod layers;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use judge::{CommandJudge, JudgeFailure, JudgeRequest, RuleJudge, SemanticJudge};
pub use layers::{verify_api_alignment, verify_causal_flow, verify_syntax};

use crate::depgraph::DepGraph;
use crate::qas::{infer_types, parse, Loc, TypedScript};
use crate::retrieval::EvidenceSet;
use crate::schema::ApiSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum IssueCode {
    L1_SYNTAX,
    L2_USE_BEFORE_DEF,
    L2_EDGE_UNREALIZED,
    L2_BAD_ATTRIBUTE,
    L2_NULL_UNGUARDED,
    L3_UNKNOWN_METHOD,
    L3_ARITY,
    L3_ARG_TYPE,
    L3_UNKNOWN_ENUM,
    L3_NOT_IN_EVIDENCE,
    L4_INCOMPLETE,
    L4_NO_OUTPUT,
}

impl IssueCode {
    pub fn layer(self) -> u8 {
        use IssueCode::*;
        match self {
            L1_SYNTAX => 1,
            L2_USE_BEFORE_DEF | L2_EDGE_UNREALIZED | L2_BAD_ATTRIBUTE | L2_NULL_UNGUARDED => 2,
            L3_UNKNOWN_METHOD | L3_ARITY | L3_ARG_TYPE | L3_UNKNOWN_ENUM | L3_NOT_IN_EVIDENCE => 3,
            L4_INCOMPLETE | L4_NO_OUTPUT => 4,
        }
    }

    pub fn severity(self) -> Severity {
        if self == IssueCode::L3_NOT_IN_EVIDENCE {
            Severity::Warning
        } else {
            Severity::Error
        }
    }

    pub fn as_str(self) -> &'static str {
        use IssueCode::*;
        match self {
            L1_SYNTAX => "L1_SYNTAX",
            L2_USE_BEFORE_DEF => "L2_USE_BEFORE_DEF",
            L2_EDGE_UNREALIZED => "L2_EDGE_UNREALIZED",
            L2_BAD_ATTRIBUTE => "L2_BAD_ATTRIBUTE",
            L2_NULL_UNGUARDED => "L2_NULL_UNGUARDED",
            L3_UNKNOWN_METHOD => "L3_UNKNOWN_METHOD",
            L3_ARITY => "L3_ARITY",
            L3_ARG_TYPE => "L3_ARG_TYPE",
            L3_UNKNOWN_ENUM => "L3_UNKNOWN_ENUM",
            L3_NOT_IN_EVIDENCE => "L3_NOT_IN_EVIDENCE",
            L4_INCOMPLETE => "L4_INCOMPLETE",
            L4_NO_OUTPUT => "L4_NO_OUTPUT",
        }
    }

    pub fn parse(s: &str) -> Option<IssueCode> {
        use IssueCode::*;
        [
            L1_SYNTAX,
            L2_USE_BEFORE_DEF,
            L2_EDGE_UNREALIZED,
            L2_BAD_ATTRIBUTE,
            L2_NULL_UNGUARDED,
            L3_UNKNOWN_METHOD,
            L3_ARITY,
            L3_ARG_TYPE,
            L3_UNKNOWN_ENUM,
            L3_NOT_IN_EVIDENCE,
            L4_INCOMPLETE,
            L4_NO_OUTPUT,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub severity: Severity,
    pub message: String,
    pub loc: Loc,
    /// Graph node or edge ids the issue concerns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub graph_region: Vec<String>,
    #[serde(default)]
    pub hint: String,
}

impl Issue {
    pub fn new(code: IssueCode, loc: Loc, message: impl Into<String>) -> Self {
        Issue {
            code,
            severity: code.severity(),
            message: message.into(),
            loc,
            graph_region: Vec::new(),
            hint: String::new(),
        }
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = hint.into();
        self
    }

    pub fn with_region(mut self, region: Vec<String>) -> Self {
        self.graph_region = region;
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}", self.loc, self.code, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTiming {
    pub layer: u8,
    pub micros: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictReport {
    pub layer: u8,
    pub pass: bool,
    pub issues: Vec<Issue>,
    #[serde(default)]
    pub timings: Vec<LayerTiming>,
}

/// Timings are measurements, not part of the verdict.
impl PartialEq for VerdictReport {
    fn eq(&self, other: &Self) -> bool {
        self.layer == other.layer && self.pass == other.pass && self.issues == other.issues
    }
}

impl VerdictReport {
    pub fn from_issues(mut issues: Vec<Issue>, timings: Vec<LayerTiming>) -> Self {
        issues.sort_by(|a, b| {
            (a.code.layer(), a.loc, a.code, &a.message).cmp(&(b.code.layer(), b.loc, b.code, &b.message))
        });
        issues.dedup();
        let layer = issues.iter().filter(|i| i.is_error()).map(|i| i.code.layer()).min().unwrap_or(0);
        VerdictReport { layer, pass: layer == 0, issues, timings }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.is_error())
    }

    pub fn has_warnings(&self) -> bool {
        self.issues.iter().any(|i| !i.is_error())
    }

    /// Sorted error codes, the signature the loop guard compares.
    pub fn error_codes(&self) -> Vec<IssueCode> {
        let mut v: Vec<IssueCode> = self.errors().map(|i| i.code).collect();
        v.sort();
        v
    }
}

/// How deep the pipeline runs. `max_layer = 1` is a syntax-only checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierConfig {
    pub max_layer: u8,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig { max_layer: 4 }
    }
}

/// Everything a verification run needs besides the program.
pub struct VerifyContext<'a> {
    pub schema: &'a ApiSchema,
    pub graph: &'a DepGraph,
    pub evidence: &'a EvidenceSet,
    pub judge: &'a dyn SemanticJudge,
    pub prompt: &'a str,
    pub config: VerifierConfig,
}

fn timed<T>(layer: u8, timings: &mut Vec<LayerTiming>, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push(LayerTiming { layer, micros: start.elapsed().as_micros() as u64 });
    out
}

/// Run layers 1 through `config.max_layer`, stopping at the first layer
/// with an error.
pub fn verify_all(source: &str, ctx: &VerifyContext<'_>) -> Result<VerdictReport, JudgeFailure> {
    let mut timings = Vec::new();
    let script = match timed(1, &mut timings, || parse(source)) {
        Ok(s) => s,
        Err(f) => return Ok(VerdictReport::from_issues(layers::syntax_issues(&f), timings)),
    };
    let mut issues = Vec::new();
    let max = ctx.config.max_layer.clamp(1, 4);
    if max < 2 {
        return Ok(VerdictReport::from_issues(issues, timings));
    }
    let ts: TypedScript = infer_types(&script, ctx.schema);
    let l2 = timed(2, &mut timings, || verify_causal_flow(&ts, ctx.graph, ctx.schema));
    let stop = l2.iter().any(Issue::is_error);
    issues.extend(l2);
    if stop || max < 3 {
        return Ok(VerdictReport::from_issues(issues, timings));
    }
    let l3 = timed(3, &mut timings, || verify_api_alignment(&ts, ctx.schema, ctx.evidence, ctx.graph));
    let stop = l3.iter().any(Issue::is_error);
    issues.extend(l3);
    if stop || max < 4 {
        return Ok(VerdictReport::from_issues(issues, timings));
    }
    let req = JudgeRequest { prompt: ctx.prompt, script: &script, typed: &ts, graph: ctx.graph };
    let l4 = timed(4, &mut timings, || ctx.judge.judge(&req))?;
    issues.extend(l4);
    Ok(VerdictReport::from_issues(issues, timings))
}
