//! Task suites, the suite runner and aggregate metrics.

mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{
    graph_accuracy, parse_sweep, uncertainty_eval, verifier_quality, ComplexityBucket, GraphRow, Labeled, ThetaRow,
    VerifierQuality,
};

use crate::controller::{AcceptMode, ActionKind, FaultInjectingGenerator, FaultPlan, Generator, SynthConfig};
use crate::depgraph::{graph_metrics, ground_truth_graph, DepGraph, GraphExtractor, GraphMetrics};
use crate::orchestrator::{run_multistep, run_with_reflection, EpisodeReflector, MultiTask, Pipeline};
use crate::qas::{infer_types, parse};
use crate::retrieval::CorpusIndex;
use crate::runtime::{synthetic, DesignDb, ExecOutcome, Session, SnapshotError};
use crate::schema::ApiSchema;
use crate::uncertainty::{score, UncertaintyConfig, UncertaintyScore};
use crate::verifier::SemanticJudge;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Single,
    Multi,
}

fn default_snapshot() -> String {
    "synthetic:gcd".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<String>,
    #[serde(default = "default_snapshot")]
    pub snapshot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_program: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_graph: Option<DepGraph>,
    /// Defect planted by the fault-injecting generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultPlan>,
    /// Per-step defects of a multi-step task, keyed by step index.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub step_faults: BTreeMap<usize, FaultPlan>,
}

impl TaskSpec {
    pub fn single(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        TaskSpec {
            id: id.into(),
            kind: TaskKind::Single,
            prompt: Some(prompt.into()),
            steps: Vec::new(),
            snapshot: default_snapshot(),
            reference_program: None,
            ground_truth_graph: None,
            fault: None,
            step_faults: BTreeMap::new(),
        }
    }

    pub fn prompts(&self) -> Vec<&str> {
        match self.kind {
            TaskKind::Single => self.prompt.as_deref().into_iter().collect(),
            TaskKind::Multi => self.steps.iter().map(String::as_str).collect(),
        }
    }

    pub fn bucket(&self) -> ComplexityBucket {
        ComplexityBucket::of(&self.prompts().join(" "))
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            TaskKind::Single if self.prompt.is_none() || !self.steps.is_empty() => {
                Err(format!("{}: a single task has exactly one prompt and no steps", self.id))
            }
            TaskKind::Multi if self.steps.is_empty() || self.prompt.is_some() => {
                Err(format!("{}: a multi-step task has steps and no prompt", self.id))
            }
            _ => Ok(()),
        }
    }

    /// Prompt-keyed fault plans of this task.
    pub fn plans(&self) -> Vec<(String, FaultPlan)> {
        match self.kind {
            TaskKind::Single => self.prompt.iter().zip(self.fault).map(|(p, f)| (p.clone(), f)).collect(),
            TaskKind::Multi => {
                self.step_faults.iter().filter_map(|(i, f)| self.steps.get(*i).map(|p| (p.clone(), *f))).collect()
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("duplicate task id {0}")]
    DuplicateId(String),
    #[error("faulted prompt {0:?} occurs more than once in the suite")]
    SharedFaultPrompt(String),
    #[error("snapshot {name}: {source}")]
    Snapshot { name: String, source: SnapshotError },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io { path: path.to_path_buf(), source }
}

/// Every `*.json` file in `dir` holds one task or a list of tasks. Tasks
/// come back sorted by id.
pub fn load_suite(dir: &Path) -> Result<Vec<TaskSpec>, SuiteError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut tasks = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(io_err(&f))?;
        let invalid = |e: serde_json::Error| SuiteError::Invalid { path: f.clone(), message: e.to_string() };
        let batch: Vec<TaskSpec> = if text.trim_start().starts_with('[') {
            serde_json::from_str(&text).map_err(invalid)?
        } else {
            vec![serde_json::from_str(&text).map_err(invalid)?]
        };
        for t in &batch {
            t.validate().map_err(|message| SuiteError::Invalid { path: f.clone(), message })?;
        }
        tasks.extend(batch);
    }
    let mut seen = BTreeSet::new();
    for t in &tasks {
        if !seen.insert(t.id.clone()) {
            return Err(SuiteError::DuplicateId(t.id.clone()));
        }
    }
    check_fault_prompts(&tasks)?;
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(tasks)
}

/// Fault plans are keyed by prompt, so a faulted prompt may occur only once.
pub fn check_fault_prompts(tasks: &[TaskSpec]) -> Result<(), SuiteError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in tasks.iter().flat_map(TaskSpec::prompts) {
        *counts.entry(p).or_default() += 1;
    }
    for t in tasks {
        for (p, _) in t.plans() {
            if counts.get(p.as_str()).copied().unwrap_or(0) > 1 {
                return Err(SuiteError::SharedFaultPrompt(p));
            }
        }
    }
    Ok(())
}

/// `synthetic:gcd` or `synthetic:gcd:<seed>` builds the GCD-scale netlist;
/// anything else is a snapshot path relative to `base`.
pub fn resolve_snapshot(name: &str, base: &Path, schema: &ApiSchema) -> Result<DesignDb, SuiteError> {
    let err = |source| SuiteError::Snapshot { name: name.to_string(), source };
    if let Some(rest) = name.strip_prefix("synthetic:gcd") {
        let seed = rest.strip_prefix(':').and_then(|s| s.parse().ok()).unwrap_or(7);
        return synthetic::gcd(schema, seed).map_err(err);
    }
    crate::runtime::load_snapshot(base.join(name), schema).map_err(err)
}

/// Load every snapshot the tasks reference.
pub fn load_snapshots(
    tasks: &[TaskSpec],
    base: &Path,
    schema: &ApiSchema,
) -> Result<BTreeMap<String, DesignDb>, SuiteError> {
    let names: BTreeSet<&str> = tasks.iter().map(|t| t.snapshot.as_str()).collect();
    names.into_iter().map(|n| Ok((n.to_string(), resolve_snapshot(n, base, schema)?))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub synth: SynthConfig,
    pub uncertainty: UncertaintyConfig,
    /// Execute programs the verifier rejected, to label verifier decisions.
    pub force_exec: bool,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub thetas: Vec<f64>,
    /// Run a reflection pass for failed multi-step tasks.
    pub reflect: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            synth: SynthConfig::default(),
            uncertainty: UncertaintyConfig::default(),
            force_exec: false,
            workers: 0,
            thetas: parse_sweep("0:1:0.05").expect("valid sweep"),
            reflect: false,
        }
    }
}

pub struct SuiteEnv<'a> {
    pub schema: Arc<ApiSchema>,
    pub index: &'a CorpusIndex,
    pub extractor: &'a dyn GraphExtractor,
    pub generator: &'a dyn Generator,
    pub judge: &'a dyn SemanticJudge,
    pub reflector: Option<&'a dyn EpisodeReflector>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub terminated_at: Option<usize>,
    pub passed_first: bool,
    pub reflected: bool,
    pub step_calls: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRecord {
    pub id: String,
    pub kind: TaskKind,
    pub bucket: ComplexityBucket,
    pub passed: bool,
    pub accepted: bool,
    /// Executions performed by the pipeline.
    pub tool_calls: u64,
    /// Label-only executions of rejected programs.
    pub label_runs: u64,
    /// Synthesized programs that reached execution, counting each step of
    /// a multi-step task (both passes when reflected).
    pub executed_steps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accept_mode: Option<AcceptMode>,
    pub trajectory_len: usize,
    pub actions: Vec<ActionKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_program: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exec: Option<ExecOutcome>,
    /// Whether the final program runs cleanly, known when it was executed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exec_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TaskRecord {
    fn failed(t: &TaskSpec, error: String) -> Self {
        TaskRecord {
            id: t.id.clone(),
            kind: t.kind,
            bucket: t.bucket(),
            passed: false,
            accepted: false,
            tool_calls: 0,
            label_runs: 0,
            executed_steps: 0,
            verdict: None,
            accept_mode: None,
            trajectory_len: 0,
            actions: Vec::new(),
            final_program: None,
            exec: None,
            exec_ok: None,
            uncertainty: None,
            graph: None,
            episode: None,
            error: Some(error),
        }
    }

    /// Verifier decision and execution label, when both are known.
    pub fn labeled(&self) -> Option<Labeled> {
        (self.kind == TaskKind::Single && self.error.is_none())
            .then_some(())
            .and(self.exec_ok.map(|ok| Labeled { pass: self.accepted, exec_ok: ok }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintySection {
    pub theta: f64,
    pub baseline: ThetaRow,
    pub at_theta: ThetaRow,
    pub sweep: Vec<ThetaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub tasks: usize,
    pub passed: usize,
    pub pass_rate: Option<f64>,
    pub executed_tasks: usize,
    pub executed_steps: u64,
    pub total_calls: u64,
    pub calls_per_task: Option<f64>,
    pub calls_per_executed_task: Option<f64>,
    pub label_runs: u64,
    pub infra_failures: usize,
    pub verifier: VerifierQuality,
    pub graph: BTreeMap<ComplexityBucket, Option<GraphRow>>,
    pub uncertainty: UncertaintySection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutput {
    pub report: MetricsReport,
    pub records: Vec<TaskRecord>,
}

fn truth_graph(t: &TaskSpec, schema: &ApiSchema) -> Option<DepGraph> {
    if let Some(g) = &t.ground_truth_graph {
        return Some(g.clone());
    }
    let src = t.reference_program.as_deref()?;
    Some(ground_truth_graph(&infer_types(&parse(src).ok()?, schema), schema).graph)
}

fn run_single(t: &TaskSpec, db: &DesignDb, pipe: &Pipeline<'_>, cfg: &SuiteConfig) -> TaskRecord {
    let prompt = t.prompt.as_deref().unwrap_or_default();
    let res = match pipe.synthesize(prompt, &[]) {
        Ok(r) => r,
        Err(e) => return TaskRecord::failed(t, e.to_string()),
    };
    let mut session = Session::new(pipe.schema.clone(), db.clone());
    let mut label_runs = 0;
    let exec = if res.accepted {
        pipe.execute(&res.final_source, &mut session).ok()
    } else if cfg.force_exec {
        let mut probe = Session::new(pipe.schema.clone(), db.clone());
        let out = pipe.execute(&res.final_source, &mut probe).ok();
        label_runs = probe.tool_calls;
        out
    } else {
        None
    };
    let exec_ok =
        if res.accepted || cfg.force_exec { Some(exec.as_ref().is_some_and(ExecOutcome::is_ok)) } else { None };
    let uncertainty = parse(&res.final_source)
        .ok()
        .map(|s| score(&infer_types(&s, &pipe.schema), &res.trajectory, &pipe.schema, &cfg.uncertainty));
    let graph = truth_graph(t, &pipe.schema).map(|truth| graph_metrics(&res.graph, &truth));
    TaskRecord {
        id: t.id.clone(),
        kind: t.kind,
        bucket: t.bucket(),
        passed: res.accepted && exec_ok == Some(true),
        accepted: res.accepted,
        tool_calls: session.tool_calls,
        label_runs,
        executed_steps: (res.accepted && exec.is_some()) as u64,
        verdict: Some(res.final_report.layer),
        accept_mode: Some(res.accept_mode),
        trajectory_len: res.trajectory.len(),
        actions: res.trajectory.action_kinds(),
        final_program: Some(res.final_source.clone()),
        exec: if res.accepted { exec } else { None },
        exec_ok,
        uncertainty,
        graph,
        episode: None,
        error: None,
    }
}

fn run_multi(t: &TaskSpec, db: &DesignDb, pipe: &Pipeline<'_>, env: &SuiteEnv<'_>, cfg: &SuiteConfig) -> TaskRecord {
    let task = MultiTask { id: t.id.clone(), snapshot: t.snapshot.clone(), steps: t.steps.clone(), ground_truth: None };
    let ep = match (cfg.reflect, env.reflector) {
        (true, Some(r)) => run_with_reflection(&task, db, pipe, r),
        _ => run_multistep(&task, db, pipe, &[]),
    };
    let ep = match ep {
        Ok(ep) => ep,
        Err(e) => return TaskRecord::failed(t, e.to_string()),
    };
    let last = ep.second_pass.as_deref().unwrap_or(&ep);
    let step_calls = last.per_step.iter().map(|s| s.exec.is_some() as u64).collect();
    let all_accepted = last.per_step.len() == t.steps.len() && last.per_step.iter().all(|s| s.synthesis.accepted);
    TaskRecord {
        id: t.id.clone(),
        kind: t.kind,
        bucket: t.bucket(),
        passed: ep.final_passed(),
        accepted: all_accepted,
        tool_calls: ep.total_tool_calls(),
        label_runs: 0,
        executed_steps: std::iter::once(&ep)
            .chain(ep.second_pass.as_deref())
            .flat_map(|e| &e.per_step)
            .filter(|s| s.exec.is_some())
            .count() as u64,
        verdict: last.per_step.last().map(|s| s.synthesis.final_report.layer),
        accept_mode: last.per_step.last().map(|s| s.synthesis.accept_mode),
        trajectory_len: last.per_step.iter().map(|s| s.synthesis.trajectory.len()).sum(),
        actions: last.per_step.iter().flat_map(|s| s.synthesis.trajectory.action_kinds()).collect(),
        final_program: None,
        exec: None,
        exec_ok: Some(last.passed),
        uncertainty: None,
        graph: None,
        episode: Some(EpisodeSummary {
            terminated_at: last.terminated_at,
            passed_first: ep.passed,
            reflected: ep.second_pass.is_some(),
            step_calls,
        }),
        error: None,
    }
}

/// Run every task through the full pipeline. Snapshots are looked up by
/// the task's `snapshot` name.
pub fn run_suite(
    tasks: &[TaskSpec],
    snapshots: &BTreeMap<String, DesignDb>,
    env: &SuiteEnv<'_>,
    cfg: &SuiteConfig,
) -> SuiteOutput {
    let mut generator = FaultInjectingGenerator::new(env.generator);
    for t in tasks {
        for (p, plan) in t.plans() {
            generator.plans.insert(p, plan);
        }
    }
    let pipe = Pipeline {
        schema: env.schema.clone(),
        index: env.index,
        extractor: env.extractor,
        generator: &generator,
        judge: env.judge,
        config: cfg.synth,
    };
    let run_one = |t: &TaskSpec| {
        let Some(db) = snapshots.get(&t.snapshot) else {
            return TaskRecord::failed(t, format!("snapshot {} was not loaded", t.snapshot));
        };
        match t.kind {
            TaskKind::Single => run_single(t, db, &pipe, cfg),
            TaskKind::Multi => run_multi(t, db, &pipe, env, cfg),
        }
    };
    let mut records: Vec<TaskRecord> = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build() {
        Ok(pool) => pool.install(|| tasks.par_iter().map(run_one).collect()),
        Err(_) => tasks.iter().map(run_one).collect(),
    };
    records.sort_by(|a, b| a.id.cmp(&b.id));
    SuiteOutput { report: aggregate(&records, cfg), records }
}

pub fn aggregate(records: &[TaskRecord], cfg: &SuiteConfig) -> MetricsReport {
    let n = records.len();
    let ratio = |a: f64, b: usize| (b > 0).then(|| a / b as f64);
    let passed = records.iter().filter(|r| r.passed).count();
    let executed = records.iter().filter(|r| r.tool_calls > 0).count();
    let total_calls: u64 = records.iter().map(|r| r.tool_calls).sum();
    let labeled: Vec<Labeled> = records.iter().filter_map(TaskRecord::labeled).collect();
    let scored: Vec<(Labeled, f64)> =
        records.iter().filter_map(|r| r.labeled().map(|l| (l, r.uncertainty.map_or(1.0, |u| u.u)))).collect();
    let sweep = uncertainty_eval(&scored, &cfg.thetas);
    let theta = cfg.uncertainty.theta;
    let fixed = uncertainty_eval(&scored, &[1.0, theta]);
    let graphs: Vec<(ComplexityBucket, GraphMetrics)> =
        records.iter().filter_map(|r| r.graph.map(|g| (r.bucket, g))).collect();
    MetricsReport {
        tasks: n,
        passed,
        pass_rate: ratio(passed as f64, n),
        executed_tasks: executed,
        executed_steps: records.iter().map(|r| r.executed_steps).sum(),
        total_calls,
        calls_per_task: ratio(total_calls as f64, n),
        calls_per_executed_task: ratio(total_calls as f64, executed),
        label_runs: records.iter().map(|r| r.label_runs).sum(),
        infra_failures: records.iter().filter(|r| r.error.is_some()).count(),
        verifier: verifier_quality(&labeled),
        graph: graph_accuracy(&graphs),
        uncertainty: UncertaintySection { theta, baseline: fixed[0], at_theta: fixed[1], sweep },
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Sweep table as CSV.
pub fn sweep_csv(rows: &[ThetaRow]) -> String {
    let mut s = String::from("theta,precision,false_positive_rate,recall,retained\n");
    for r in rows {
        s.push_str(&format!(
            "{:.4},{},{},{},{}\n",
            r.theta,
            opt(r.precision),
            opt(r.false_positive_rate),
            opt(r.recall),
            opt(r.retained)
        ));
    }
    s
}

/// Per-bucket graph accuracy as CSV; empty buckets leave the cells blank.
pub fn graph_csv(table: &BTreeMap<ComplexityBucket, Option<GraphRow>>) -> String {
    let mut s = String::from("bucket,n,node_p,node_r,node_f1,edge_p,edge_r,edge_f1,exact_match_rate\n");
    for (b, row) in table {
        match row {
            Some(r) => s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                b.as_str(),
                r.n,
                r.node_p,
                r.node_r,
                r.node_f1,
                r.edge_p,
                r.edge_r,
                r.edge_f1,
                r.exact_match_rate
            )),
            None => s.push_str(&format!("{},0,,,,,,,\n", b.as_str())),
        }
    }
    s
}

/// One JSON document per record.
pub fn records_jsonl(records: &[TaskRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

/// Write `out` (metrics JSON) plus `<stem>.sweep.csv`, `<stem>.graph.csv`
/// and `<stem>.records.jsonl` beside it. Returns every path written.
pub fn write_outputs(out: &Path, output: &SuiteOutput) -> std::io::Result<Vec<PathBuf>> {
    let sibling = |suffix: &str| {
        let stem = out.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_else(|| "metrics".into());
        out.with_file_name(format!("{stem}.{suffix}"))
    };
    let files = [
        (out.to_path_buf(), serde_json::to_string_pretty(&output.report).expect("report serializes") + "\n"),
        (sibling("sweep.csv"), sweep_csv(&output.report.uncertainty.sweep)),
        (sibling("graph.csv"), graph_csv(&output.report.graph)),
        (sibling("records.jsonl"), records_jsonl(&output.records)),
    ];
    let mut written = Vec::new();
    for (p, text) in files {
        fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}
