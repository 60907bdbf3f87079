//! Multi-step episodes: synthesize and execute each subtask in one session,
//! stop at the first failure, and optionally reflect and rerun once.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{synthesize, Generator, SynthConfig, SynthContext, SynthError, SynthesisResult};
use crate::depgraph::{DepGraph, GraphExtractor};
use crate::external::{ExternalCommand, ExternalError};
use crate::qas::{parse, SyntaxFailure};
use crate::retrieval::CorpusIndex;
use crate::runtime::{execute, DesignDb, ExecOutcome, Session};
use crate::schema::ApiSchema;
use crate::verifier::{IssueCode, SemanticJudge};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTask {
    pub id: String,
    pub snapshot: String,
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<DepGraph>>,
}

/// Shared collaborators of every synthesis in a run.
pub struct Pipeline<'a> {
    pub schema: Arc<ApiSchema>,
    pub index: &'a CorpusIndex,
    pub extractor: &'a dyn GraphExtractor,
    pub generator: &'a dyn Generator,
    pub judge: &'a dyn SemanticJudge,
    pub config: SynthConfig,
}

impl Pipeline<'_> {
    pub fn synthesize(&self, prompt: &str, corrections: &[String]) -> Result<SynthesisResult, SynthError> {
        let ctx = SynthContext {
            schema: &self.schema,
            index: self.index,
            extractor: self.extractor,
            generator: self.generator,
            judge: self.judge,
            corrections,
        };
        synthesize(prompt, &ctx, &self.config)
    }

    /// Execute a program once; text that does not parse never reaches the
    /// runtime.
    pub fn execute(&self, source: &str, session: &mut Session) -> Result<ExecOutcome, SyntaxFailure> {
        parse(source).map(|script| execute(&script, session))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub prompt: String,
    pub synthesis: SynthesisResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exec: Option<ExecOutcome>,
}

impl StepRecord {
    pub fn ok(&self) -> bool {
        self.exec.as_ref().is_some_and(ExecOutcome::is_ok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossStepFinding {
    pub earlier_step: usize,
    pub later_step: usize,
    pub inconsistency: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionDiagnostic {
    pub root_step: usize,
    pub root_cause: String,
    #[serde(default)]
    pub cross_step_findings: Vec<CrossStepFinding>,
    /// One list of hints per step.
    #[serde(default)]
    pub corrections: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub per_step: Vec<StepRecord>,
    pub terminated_at: Option<usize>,
    pub passed: bool,
    /// Executions in this pass.
    pub tool_calls: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflection: Option<ReflectionDiagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_pass: Option<Box<EpisodeResult>>,
}

impl EpisodeResult {
    /// Executions across both passes.
    pub fn total_tool_calls(&self) -> u64 {
        self.tool_calls + self.second_pass.as_ref().map_or(0, |p| p.total_tool_calls())
    }

    /// Outcome of the last pass that ran.
    pub fn final_passed(&self) -> bool {
        self.second_pass.as_ref().map_or(self.passed, |p| p.final_passed())
    }
}

#[derive(Debug, Error)]
pub enum ReflectorFailure {
    #[error("reflection requires a failed episode")]
    EpisodePassed,
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error("reflector output unusable: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("task has no steps")]
    NoSteps,
    #[error("step {step}: {source}")]
    Synthesis { step: usize, source: SynthError },
    #[error(transparent)]
    Reflector(#[from] ReflectorFailure),
}

pub trait EpisodeReflector: Send + Sync {
    fn reflect(&self, task: &MultiTask, ep: &EpisodeResult) -> Result<ReflectionDiagnostic, ReflectorFailure>;
}

/// Run every step in order on one session built from `db`.
pub fn run_multistep(
    task: &MultiTask,
    db: &DesignDb,
    pipe: &Pipeline<'_>,
    corrections: &[Vec<String>],
) -> Result<EpisodeResult, EpisodeError> {
    if task.steps.is_empty() {
        return Err(EpisodeError::NoSteps);
    }
    let mut session = Session::new(pipe.schema.clone(), db.clone());
    let none = Vec::new();
    let mut per_step = Vec::new();
    let mut terminated_at = None;
    for (i, prompt) in task.steps.iter().enumerate() {
        let hints = corrections.get(i).unwrap_or(&none);
        let synthesis = pipe.synthesize(prompt, hints).map_err(|source| EpisodeError::Synthesis { step: i, source })?;
        let exec = if synthesis.accepted { pipe.execute(&synthesis.final_source, &mut session).ok() } else { None };
        let rec = StepRecord { prompt: prompt.clone(), synthesis, exec };
        let ok = rec.ok();
        per_step.push(rec);
        if !ok {
            terminated_at = Some(i);
            break;
        }
    }
    Ok(EpisodeResult {
        task_id: task.id.clone(),
        passed: terminated_at.is_none(),
        per_step,
        terminated_at,
        tool_calls: session.tool_calls,
        reflection: None,
        second_pass: None,
    })
}

pub fn reflect(
    task: &MultiTask,
    ep: &EpisodeResult,
    reflector: &dyn EpisodeReflector,
) -> Result<ReflectionDiagnostic, ReflectorFailure> {
    if ep.passed {
        return Err(ReflectorFailure::EpisodePassed);
    }
    let d = reflector.reflect(task, ep)?;
    if d.root_step >= task.steps.len() {
        return Err(ReflectorFailure::Malformed(format!("root step {} out of range", d.root_step)));
    }
    Ok(d)
}

/// One pass; when it fails, reflect and rerun every step on a fresh session
/// with the diagnostic's corrections.
pub fn run_with_reflection(
    task: &MultiTask,
    db: &DesignDb,
    pipe: &Pipeline<'_>,
    reflector: &dyn EpisodeReflector,
) -> Result<EpisodeResult, EpisodeError> {
    let mut first = run_multistep(task, db, pipe, &[])?;
    if first.passed {
        return Ok(first);
    }
    let diag = reflect(task, &first, reflector)?;
    let second = run_multistep(task, db, pipe, &diag.corrections)?;
    first.reflection = Some(diag);
    first.second_pass = Some(Box::new(second));
    Ok(first)
}

/// Rule-based diagnosis. The root is the earliest step that failed; a
/// finding pairs an earlier step acquiring a type with a later step whose
/// edges over that type went unrealized.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleReflector;

fn step_failure(rec: &StepRecord) -> Option<String> {
    match &rec.exec {
        None => {
            let codes: Vec<String> = rec.synthesis.final_report.error_codes().iter().map(|c| c.to_string()).collect();
            Some(format!("synthesis not accepted ({})", codes.join(", ")))
        }
        Some(e) if !e.is_ok() => Some(match &e.error {
            Some(err) => format!("execution failed at {err}"),
            None => "execution timed out".to_string(),
        }),
        Some(_) => None,
    }
}

fn unrealized_types(rec: &StepRecord) -> BTreeSet<(String, String, String)> {
    let g = &rec.synthesis.graph;
    let mut out = BTreeSet::new();
    for r in &rec.synthesis.trajectory.reports {
        for i in r.issues.iter().filter(|i| i.code == IssueCode::L2_EDGE_UNREALIZED) {
            for id in &i.graph_region {
                if let Some(e) = g.edge(id) {
                    let ty = |n: &str| g.node(n).map(|n| n.type_str().to_string()).unwrap_or_default();
                    out.insert((id.clone(), ty(&e.src), ty(&e.dst)));
                }
            }
        }
    }
    out
}

impl EpisodeReflector for RuleReflector {
    fn reflect(&self, task: &MultiTask, ep: &EpisodeResult) -> Result<ReflectionDiagnostic, ReflectorFailure> {
        let (root_step, root_cause) = ep
            .per_step
            .iter()
            .enumerate()
            .find_map(|(i, r)| step_failure(r).map(|c| (i, format!("step {i}: {c}"))))
            .ok_or(ReflectorFailure::EpisodePassed)?;
        let mut findings = Vec::new();
        for (j, later) in ep.per_step.iter().enumerate().take(root_step + 1) {
            let unrealized = unrealized_types(later);
            for (i, earlier) in ep.per_step.iter().enumerate().take(j) {
                let types: BTreeSet<&str> = earlier.synthesis.graph.nodes.iter().map(|n| n.type_str()).collect();
                for (edge, src, dst) in &unrealized {
                    if types.contains(src.as_str()) || types.contains(dst.as_str()) {
                        findings.push(CrossStepFinding {
                            earlier_step: i,
                            later_step: j,
                            inconsistency: format!("step {i} acquires {src}/{dst} objects but step {j} never realizes {edge} ({src} -> {dst})"),
                        });
                    }
                }
            }
        }
        let mut corrections = vec![Vec::new(); task.steps.len()];
        corrections[root_step].push(format!("previous attempt failed: {root_cause}"));
        for f in &findings {
            corrections[f.earlier_step]
                .push(format!("keep acquisitions consistent with step {}: {}", f.later_step, f.inconsistency));
        }
        Ok(ReflectionDiagnostic { root_step, root_cause, cross_step_findings: findings, corrections })
    }
}

/// Returns a fixed diagnostic.
pub struct ScriptedReflector(pub ReflectionDiagnostic);

impl EpisodeReflector for ScriptedReflector {
    fn reflect(&self, _task: &MultiTask, _ep: &EpisodeResult) -> Result<ReflectionDiagnostic, ReflectorFailure> {
        Ok(self.0.clone())
    }
}

/// Episode JSON on stdin, diagnostic JSON on stdout.
pub struct CommandReflector {
    pub command: ExternalCommand,
}

impl EpisodeReflector for CommandReflector {
    fn reflect(&self, task: &MultiTask, ep: &EpisodeResult) -> Result<ReflectionDiagnostic, ReflectorFailure> {
        let input = serde_json::json!({ "task": task, "episode": ep }).to_string();
        let out = self.command.call(&input)?;
        serde_json::from_str(out.trim()).map_err(|e| ReflectorFailure::Malformed(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{FaultClass, FaultInjectingGenerator, FaultPlan, TemplateGenerator};
    use crate::depgraph::PatternExtractor;
    use crate::fixtures::{gcd_snapshot, odb_index, odb_schema};
    use crate::verifier::RuleJudge;

    fn task(steps: &[&str]) -> MultiTask {
        MultiTask {
            id: "mt".into(),
            snapshot: "synthetic:gcd".into(),
            steps: steps.iter().map(|s| s.to_string()).collect(),
            ground_truth: None,
        }
    }

    fn with<R>(gen: &dyn Generator, f: impl FnOnce(&Pipeline<'_>, &DesignDb) -> R) -> R {
        let schema = Arc::new(odb_schema());
        let db = gcd_snapshot(&schema);
        let idx = odb_index();
        let ex = PatternExtractor::default();
        let pipe = Pipeline {
            schema,
            index: &idx,
            extractor: &ex,
            generator: gen,
            judge: &RuleJudge,
            config: SynthConfig::default(),
        };
        f(&pipe, &db)
    }

    const STEPS: [&str; 3] = ["set the weight of net clk to 5", "print the weight of net clk", "count the nets"];

    #[test]
    fn clean_episode() {
        let ep = with(&TemplateGenerator, |p, db| run_multistep(&task(&STEPS), db, p, &[]).unwrap());
        assert!(ep.passed);
        assert_eq!(ep.tool_calls, 3);
        assert_eq!(ep.per_step[1].exec.as_ref().unwrap().output, vec!["5"]);
        assert_eq!(ep.per_step[2].exec.as_ref().unwrap().output, vec!["581"]);
    }

    #[test]
    fn cascade_stops() {
        let gen = FaultInjectingGenerator::new(TemplateGenerator)
            .with_plan(STEPS[1], FaultPlan::new(FaultClass::Arity, None));
        let ep = with(&gen, |p, db| run_multistep(&task(&STEPS), db, p, &[]).unwrap());
        assert!(!ep.passed);
        assert_eq!(ep.terminated_at, Some(1));
        assert_eq!(ep.per_step.len(), 2);
        assert!(ep.per_step[1].exec.is_none());
        assert_eq!(ep.tool_calls, 1);
        let d = reflect(&task(&STEPS), &ep, &RuleReflector).unwrap();
        assert_eq!(d.root_step, 1);
        assert!(d.cross_step_findings.is_empty());
    }

    #[test]
    fn reflection_second_pass() {
        let plan = FaultPlan { class: FaultClass::InvalidImport, repair_after: None, fixed_by_correction: true };
        let gen = FaultInjectingGenerator::new(TemplateGenerator).with_plan(STEPS[1], plan);
        let ep = with(&gen, |p, db| run_with_reflection(&task(&STEPS), db, p, &RuleReflector).unwrap());
        assert!(!ep.passed);
        assert_eq!(ep.terminated_at, Some(1));
        assert_eq!(ep.reflection.as_ref().unwrap().root_step, 1);
        let second = ep.second_pass.as_ref().unwrap();
        assert!(second.passed);
        assert_eq!(ep.total_tool_calls(), 2 + 3);
        assert!(ep.final_passed());
    }

    #[test]
    fn passed_first_pass_is_verbatim() {
        with(&TemplateGenerator, |p, db| {
            let t = task(&STEPS);
            let plain = run_multistep(&t, db, p, &[]).unwrap();
            let refl = run_with_reflection(&t, db, p, &RuleReflector).unwrap();
            assert_eq!(plain, refl);
            assert!(matches!(reflect(&t, &plain, &RuleReflector), Err(ReflectorFailure::EpisodePassed)));
        });
    }

    #[test]
    fn wrong_root_fails_again() {
        let plan = FaultPlan { class: FaultClass::InvalidImport, repair_after: None, fixed_by_correction: false };
        let gen = FaultInjectingGenerator::new(TemplateGenerator).with_plan(STEPS[1], plan);
        let wrong = ScriptedReflector(ReflectionDiagnostic {
            root_step: 0,
            root_cause: "blames the first step".into(),
            cross_step_findings: vec![],
            corrections: vec![vec!["check the weight".into()], vec![], vec![]],
        });
        let ep = with(&gen, |p, db| run_with_reflection(&task(&STEPS), db, p, &wrong).unwrap());
        assert!(!ep.passed);
        assert!(!ep.final_passed());
        assert_eq!(ep.second_pass.as_ref().unwrap().terminated_at, Some(1));
    }
}
