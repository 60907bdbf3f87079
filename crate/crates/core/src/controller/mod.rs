//! Diagnosis-driven repair loop. Every candidate is verified statically;
//! nothing here executes a program.

mod generators;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generators::{
    plant, render_graph, CommandGenerator, FaultClass, FaultInjectingGenerator, FaultPlan, GenerationRequest,
    Generator, GeneratorError, ScriptedGenerator, TemplateGenerator,
};

use crate::depgraph::{extract_graph, extract_graph_from, DepGraph, ExtractError, Feedback, GraphExtractor};
use crate::qas::{jaccard, normalize_source};
use crate::retrieval::{reretrieve_edge, retrieve, CorpusIndex, EvidenceSet, DEFAULT_K};
use crate::schema::ApiSchema;
use crate::verifier::{
    verify_all, IssueCode, JudgeFailure, SemanticJudge, VerdictReport, VerifierConfig, VerifyContext,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Regenerate,
    EdgeReRetrieve,
    GraphReExtract,
    Accept,
}

impl ActionKind {
    /// Position in the escalation order; `Accept` never escalates.
    pub fn rank(self) -> u8 {
        match self {
            ActionKind::Regenerate => 0,
            ActionKind::EdgeReRetrieve => 1,
            ActionKind::GraphReExtract | ActionKind::Accept => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Regenerate { hints: String },
    EdgeReRetrieve { target: String },
    GraphReExtract { hints: String },
    Accept { note: String },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Regenerate { .. } => ActionKind::Regenerate,
            Action::EdgeReRetrieve { .. } => ActionKind::EdgeReRetrieve,
            Action::GraphReExtract { .. } => ActionKind::GraphReExtract,
            Action::Accept { .. } => ActionKind::Accept,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Escalation {
    /// Index of the action that was escalated.
    pub step: usize,
    pub from: ActionKind,
    pub to: ActionKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub candidates: Vec<String>,
    pub verdicts: Vec<u8>,
    pub reports: Vec<VerdictReport>,
    /// `actions[t-1]` produced `candidates[t]`.
    pub actions: Vec<Action>,
    pub evidence_versions: Vec<u64>,
    pub escalations: Vec<Escalation>,
    /// First candidate index since the last graph re-extraction.
    pub window_start: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Indices `t` whose producing action was a repair.
    pub fn repair_steps(&self) -> Vec<usize> {
        self.actions.iter().enumerate().filter(|(_, a)| a.kind() != ActionKind::Accept).map(|(i, _)| i + 1).collect()
    }

    pub fn action_kinds(&self) -> Vec<ActionKind> {
        self.actions.iter().map(Action::kind).collect()
    }

    fn push(&mut self, source: String, report: VerdictReport, evidence_version: u64) {
        self.candidates.push(source);
        self.verdicts.push(report.layer);
        self.reports.push(report);
        self.evidence_versions.push(evidence_version);
    }

    /// Trailing run of verdicts equal to `layer` inside the current window.
    fn trailing(&self, layer: u8) -> usize {
        self.verdicts[self.window_start..].iter().rev().take_while(|&&l| l == layer).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptMode {
    CleanPass,
    AcceptWithNote,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    #[serde(rename = "final")]
    pub final_source: String,
    pub final_report: VerdictReport,
    pub trajectory: Trajectory,
    pub accepted: bool,
    pub accept_mode: AcceptMode,
    pub graph: DepGraph,
    pub evidence: EvidenceSet,
}

fn default_budget() -> usize {
    5
}
fn default_threshold() -> f64 {
    0.9
}
fn default_escalation() -> usize {
    2
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_rounds() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Maximum number of repair actions.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_threshold")]
    pub loop_threshold: f64,
    /// Consecutive same-layer failures that count as persistent.
    #[serde(default = "default_escalation")]
    pub escalation_count: usize,
    #[serde(default = "default_rounds")]
    pub extraction_rounds: usize,
    #[serde(default)]
    pub verifier: VerifierConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            budget: default_budget(),
            k: default_k(),
            loop_threshold: default_threshold(),
            escalation_count: default_escalation(),
            extraction_rounds: default_rounds(),
            verifier: VerifierConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("budget must be at least 1")]
    NoBudget,
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("generator failed twice in a row: {0}")]
    GeneratorFailure(String),
    #[error(transparent)]
    Judge(#[from] JudgeFailure),
}

/// Collaborators of one synthesis run.
pub struct SynthContext<'a> {
    pub schema: &'a ApiSchema,
    pub index: &'a CorpusIndex,
    pub extractor: &'a dyn GraphExtractor,
    pub generator: &'a dyn Generator,
    pub judge: &'a dyn SemanticJudge,
    /// Cross-step corrections handed to extraction and generation.
    pub corrections: &'a [String],
}

fn hints_for(report: &VerdictReport) -> String {
    let prefix = match report.layer {
        1 => "fix the syntax",
        2 => "acquire every object before use and guard nullable results",
        3 => "use only documented methods, arities and enum constants",
        _ => "complete the task and print its result",
    };
    let mut lines = vec![prefix.to_string()];
    for i in report.errors() {
        let mut l = format!("{} at {}: {}", i.code, i.loc, i.message);
        if !i.hint.is_empty() {
            l = format!("{l} ({})", i.hint);
        }
        lines.push(l);
    }
    lines.join("\n")
}

/// The evidence key an API failure points at: a region entry with
/// evidence, else the first acquisition edge or action that has some.
fn reretrieve_target(report: &VerdictReport, g: &DepGraph, evidence: &EvidenceSet) -> Option<String> {
    let layer3 = report.errors().chain(report.issues.iter().filter(|i| !i.is_error())).filter(|i| i.code.layer() == 3);
    for i in layer3 {
        if let Some(r) = i.graph_region.iter().find(|r| evidence.per_target.contains_key(*r)) {
            return Some(r.clone());
        }
    }
    g.acquisition_edges()
        .map(|e| e.id())
        .chain(g.action_nodes().map(|a| a.id.clone()))
        .find(|id| evidence.per_target.contains_key(id))
}

fn with_kind(kind: ActionKind, report: &VerdictReport, g: &DepGraph, evidence: &EvidenceSet) -> Action {
    match kind {
        ActionKind::Regenerate => Action::Regenerate { hints: hints_for(report) },
        ActionKind::EdgeReRetrieve => match reretrieve_target(report, g, evidence) {
            Some(target) => Action::EdgeReRetrieve { target },
            None => Action::GraphReExtract { hints: hints_for(report) },
        },
        ActionKind::GraphReExtract => Action::GraphReExtract { hints: hints_for(report) },
        ActionKind::Accept => Action::Accept { note: String::new() },
    }
}

/// Policy table. `history` already holds the candidate `report` describes.
pub fn select_action(
    report: &VerdictReport,
    history: &Trajectory,
    graph: &DepGraph,
    evidence: &EvidenceSet,
    cfg: &SynthConfig,
) -> Action {
    if report.pass {
        let notes: Vec<String> = report.issues.iter().map(|i| format!("{}: {}", i.code, i.message)).collect();
        return Action::Accept { note: notes.join("; ") };
    }
    let kind = match report.layer {
        2 if history.trailing(2) >= cfg.escalation_count => ActionKind::GraphReExtract,
        3 => {
            let unsupported = report.issues.iter().any(|i| i.code == IssueCode::L3_NOT_IN_EVIDENCE);
            if unsupported || history.trailing(3) < cfg.escalation_count {
                ActionKind::EdgeReRetrieve
            } else {
                ActionKind::Regenerate
            }
        }
        _ => ActionKind::Regenerate,
    };
    with_kind(kind, report, graph, evidence)
}

/// Whether the last two candidates of the current window are near-identical
/// with identical verdicts. Warnings do not take part in the comparison.
pub fn loop_guard(history: &Trajectory, threshold: f64) -> bool {
    let n = history.len();
    if n < 2 || n - history.window_start < 2 {
        return false;
    }
    let (a, b) = (&history.reports[n - 2], &history.reports[n - 1]);
    let codes = |r: &VerdictReport| {
        let mut m: BTreeMap<IssueCode, usize> = BTreeMap::new();
        for i in r.errors() {
            *m.entry(i.code).or_default() += 1;
        }
        m
    };
    if a.layer != b.layer || codes(a) != codes(b) {
        return false;
    }
    jaccard(&normalize_source(&history.candidates[n - 2]), &normalize_source(&history.candidates[n - 1])) >= threshold
}

fn escalate(proposed: ActionKind, last: Option<ActionKind>) -> ActionKind {
    let top = proposed.rank().max(last.map(ActionKind::rank).unwrap_or(0));
    match (top + 1).min(2) {
        1 => ActionKind::EdgeReRetrieve,
        _ => ActionKind::GraphReExtract,
    }
}

struct Gen<'a> {
    ctx: &'a SynthContext<'a>,
    prompt: &'a str,
}

impl Gen<'_> {
    fn run(
        &self,
        graph: &DepGraph,
        evidence: &EvidenceSet,
        previous: Option<&str>,
        report: Option<&VerdictReport>,
        hints: &str,
        attempt: usize,
    ) -> Result<String, SynthError> {
        let req = GenerationRequest {
            prompt: self.prompt.to_string(),
            graph: graph.clone(),
            evidence: evidence.snippets(self.ctx.index),
            previous: previous.map(str::to_string),
            issues: report.map(|r| r.issues.clone()).unwrap_or_default(),
            hints: hints.to_string(),
            attempt: attempt as u32,
            corrections: self.ctx.corrections.to_vec(),
        };
        match self.ctx.generator.generate(&req, self.ctx.schema) {
            Ok(s) => Ok(s),
            Err(_) => self
                .ctx
                .generator
                .generate(&req, self.ctx.schema)
                .map_err(|e| SynthError::GeneratorFailure(e.to_string())),
        }
    }
}

/// Extract, retrieve, generate and verify until a candidate is accepted or
/// the repair budget runs out.
pub fn synthesize(prompt: &str, ctx: &SynthContext<'_>, cfg: &SynthConfig) -> Result<SynthesisResult, SynthError> {
    if cfg.budget == 0 {
        return Err(SynthError::NoBudget);
    }
    let extraction = extract_graph(prompt, ctx.extractor, ctx.schema, cfg.extraction_rounds, ctx.corrections)?;
    let mut graph = extraction.graph;
    let mut evidence = retrieve(&graph, ctx.index, cfg.k);
    let gen = Gen { ctx, prompt };
    let verify = |src: &str, graph: &DepGraph, evidence: &EvidenceSet| {
        let v = VerifyContext { schema: ctx.schema, graph, evidence, judge: ctx.judge, prompt, config: cfg.verifier };
        verify_all(src, &v)
    };

    let mut traj = Trajectory::default();
    let x0 = gen.run(&graph, &evidence, None, None, "", 0)?;
    let r0 = verify(&x0, &graph, &evidence)?;
    traj.push(x0, r0, evidence.version);

    loop {
        let report = traj.reports.last().expect("non-empty").clone();
        let source = traj.candidates.last().expect("non-empty").clone();
        if report.pass {
            let mode = if report.has_warnings() { AcceptMode::AcceptWithNote } else { AcceptMode::CleanPass };
            return Ok(SynthesisResult {
                final_source: source,
                final_report: report,
                trajectory: traj,
                accepted: true,
                accept_mode: mode,
                graph,
                evidence,
            });
        }
        if traj.actions.len() >= cfg.budget {
            return Ok(SynthesisResult {
                final_source: source,
                final_report: report,
                trajectory: traj,
                accepted: false,
                accept_mode: AcceptMode::BudgetExhausted,
                graph,
                evidence,
            });
        }

        let mut action = select_action(&report, &traj, &graph, &evidence, cfg);
        if loop_guard(&traj, cfg.loop_threshold) {
            let from = action.kind();
            let to = escalate(from, traj.actions.last().map(Action::kind));
            action = with_kind(to, &report, &graph, &evidence);
            traj.escalations.push(Escalation { step: traj.actions.len(), from, to: action.kind() });
        }

        let mut previous = Some(source);
        match &action {
            Action::EdgeReRetrieve { target } => {
                let exclude = evidence.per_target[target].hits.iter().map(|h| h.doc_id.clone()).collect();
                evidence = reretrieve_edge(&evidence, target, ctx.index, cfg.k, &exclude)
                    .expect("target was chosen among evidence keys");
            }
            Action::GraphReExtract { .. } => {
                let feedback: Vec<Feedback> = report
                    .errors()
                    .flat_map(|i| {
                        i.graph_region.iter().map(move |r| Feedback {
                            target: r.clone(),
                            code: i.code.to_string(),
                            message: i.message.clone(),
                        })
                    })
                    .collect();
                let x = extract_graph_from(
                    prompt,
                    ctx.extractor,
                    ctx.schema,
                    cfg.extraction_rounds,
                    ctx.corrections,
                    Some(&graph),
                    &feedback,
                )?;
                graph = x.graph;
                let version = evidence.version + 1;
                evidence = retrieve(&graph, ctx.index, cfg.k);
                evidence.version = version;
                previous = None;
            }
            Action::Regenerate { .. } | Action::Accept { .. } => {}
        }
        let hints = match &action {
            Action::Regenerate { hints } | Action::GraphReExtract { hints } => hints.clone(),
            Action::EdgeReRetrieve { target } => format!("evidence for {target} was refreshed\n{}", hints_for(&report)),
            Action::Accept { .. } => String::new(),
        };
        let reset = matches!(action, Action::GraphReExtract { .. });
        let attempt = traj.len();
        let x = gen.run(&graph, &evidence, previous.as_deref(), Some(&report), &hints, attempt)?;
        let r = verify(&x, &graph, &evidence)?;
        traj.actions.push(action);
        if reset {
            traj.window_start = traj.len();
        }
        traj.push(x, r, evidence.version);
    }
}
