use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Issue, IssueCode};
use crate::depgraph::{DepGraph, NodeKind};
use crate::external::{ExternalCommand, ExternalError};
use crate::qas::{ExprKind, Loc, Script, TypedScript};

#[derive(Debug, Error)]
pub enum JudgeFailure {
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error("judge reply is malformed: {0}")]
    Malformed(String),
}

pub struct JudgeRequest<'a> {
    pub prompt: &'a str,
    pub script: &'a Script,
    pub typed: &'a TypedScript,
    pub graph: &'a DepGraph,
}

/// Semantic consistency check between a program and its prompt. Returns
/// layer-4 issues only.
pub trait SemanticJudge: Send + Sync {
    fn judge(&self, req: &JudgeRequest<'_>) -> Result<Vec<Issue>, JudgeFailure>;
}

/// Deterministic judge driven by the graph's intent annotations.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge;

impl SemanticJudge for RuleJudge {
    fn judge(&self, req: &JudgeRequest<'_>) -> Result<Vec<Issue>, JudgeFailure> {
        let ts = req.typed;
        let g = req.graph;
        let mut out = Vec::new();
        let at = Loc::new(1, 1);

        let actions: Vec<_> = g.action_nodes().collect();
        for a in &actions {
            let m = a.action_method();
            if !ts.call_sites.iter().any(|c| c.method == m) {
                out.push(
                    Issue::new(IssueCode::L4_INCOMPLETE, at, format!("the requested action {m} is never performed"))
                        .with_region(vec![a.id.clone()])
                        .with_hint(format!("call {}", a.label)),
                );
            }
        }

        let mut literals = Vec::new();
        req.script.walk_exprs(|e| {
            if let ExprKind::Str(s) = &e.kind {
                literals.push(s.clone());
            }
        });
        for n in g.nodes.iter().filter(|n| n.kind == NodeKind::Object) {
            if let Some(name) = n.directive("name") {
                if !literals.iter().any(|l| l == name) {
                    out.push(
                        Issue::new(
                            IssueCode::L4_INCOMPLETE,
                            at,
                            format!("the program never selects {} '{name}'", n.type_str()),
                        )
                        .with_region(vec![n.id.clone()]),
                    );
                }
            }
            if let Some(getter) = n.directive("print") {
                if !ts.call_sites.iter().any(|c| c.method == getter) {
                    out.push(
                        Issue::new(IssueCode::L4_INCOMPLETE, at, format!("the requested value {getter} is never read"))
                            .with_region(vec![n.id.clone()]),
                    );
                }
            }
            if n.has_flag("count") && !ts.function_calls.iter().any(|f| f.name == "len") {
                out.push(
                    Issue::new(IssueCode::L4_INCOMPLETE, at, format!("the {} are never counted", n.type_str()))
                        .with_region(vec![n.id.clone()]),
                );
            }
        }

        if actions.is_empty() && ts.output_calls == 0 {
            out.push(
                Issue::new(IssueCode::L4_NO_OUTPUT, at, "the query result is never printed").with_hint("print the result"),
            );
        }
        for op in ts.ill_typed_ops.iter().filter(|o| o.in_output) {
            out.push(Issue::new(
                IssueCode::L4_NO_OUTPUT,
                op.loc,
                format!(
                    "printed expression `{}` cannot be evaluated ({} with {})",
                    op.expr,
                    op.lhs,
                    op.rhs.as_ref().map(|r| r.to_string()).unwrap_or_default()
                ),
            ));
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    source: &'a str,
    graph: &'a DepGraph,
}

#[derive(Deserialize)]
struct WireIssue {
    code: String,
    message: String,
    #[serde(default)]
    line: u32,
    #[serde(default)]
    col: u32,
    #[serde(default)]
    hint: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WireReply {
    List(Vec<WireIssue>),
    Wrapped { issues: Vec<WireIssue> },
}

/// Delegates to an external program. Input: `{prompt, source, graph}`.
/// Output: a list of `{code, message, line?, col?, hint?}`, optionally
/// wrapped as `{"issues": [...]}`.
pub struct CommandJudge {
    pub command: ExternalCommand,
}

impl CommandJudge {
    pub fn new(command: ExternalCommand) -> Self {
        CommandJudge { command }
    }
}

impl SemanticJudge for CommandJudge {
    fn judge(&self, req: &JudgeRequest<'_>) -> Result<Vec<Issue>, JudgeFailure> {
        let input =
            serde_json::to_string(&WireRequest { prompt: req.prompt, source: &req.script.source, graph: req.graph })
                .map_err(|e| JudgeFailure::Malformed(e.to_string()))?;
        let reply = self.command.call(&input)?;
        let parsed: WireReply =
            serde_json::from_str(reply.trim()).map_err(|e| JudgeFailure::Malformed(e.to_string()))?;
        let items = match parsed {
            WireReply::List(v) | WireReply::Wrapped { issues: v } => v,
        };
        items
            .into_iter()
            .map(|w| {
                let code = IssueCode::parse(&w.code)
                    .filter(|c| c.layer() == 4)
                    .ok_or_else(|| JudgeFailure::Malformed(format!("not a semantic issue code: {}", w.code)))?;
                Ok(Issue::new(code, Loc::new(w.line.max(1), w.col.max(1)), w.message).with_hint(w.hint))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::PatternExtractor;
    use crate::fixtures::{odb_schema, CANONICAL_PROGRAM};
    use crate::qas::{infer_types, parse};

    fn judge(prompt: &str, src: &str) -> Vec<IssueCode> {
        let s = odb_schema();
        let g = PatternExtractor::default().graph_for(prompt, &s).unwrap();
        let script = parse(src).unwrap();
        let ts = infer_types(&script, &s);
        RuleJudge
            .judge(&JudgeRequest { prompt, script: &script, typed: &ts, graph: &g })
            .unwrap()
            .into_iter()
            .map(|i| i.code)
            .collect()
    }

    #[test]
    fn rule_judge() {
        assert!(judge("set the weight of net clk to 2", CANONICAL_PROGRAM).is_empty());
        assert_eq!(judge("set the weight of net rst to 2", CANONICAL_PROGRAM), vec![IssueCode::L4_INCOMPLETE]);
        assert_eq!(judge("count the nets", "x = len(design.getBlock().getNets())\n"), vec![IssueCode::L4_NO_OUTPUT]);
        assert!(judge("count the nets", "print(len(design.getBlock().getNets()))\n").is_empty());
        assert_eq!(
            judge("count the nets", "print(\"nets: \" + len(design.getBlock().getNets()))\n"),
            vec![IssueCode::L4_NO_OUTPUT]
        );
        assert_eq!(judge("count the nets", "print(design.getBlock().getNets())\n"), vec![IssueCode::L4_INCOMPLETE]);
    }

    fn command(script: &str) -> CommandJudge {
        CommandJudge::new(ExternalCommand::new(script))
    }

    fn request_judge(j: &CommandJudge) -> Result<Vec<Issue>, JudgeFailure> {
        let script = parse("x = 1\n").unwrap();
        let ts = infer_types(&script, &odb_schema());
        let g = DepGraph::default();
        j.judge(&JudgeRequest { prompt: "p", script: &script, typed: &ts, graph: &g })
    }

    #[test]
    fn command_judge() {
        let j = command(r#"cat >/dev/null; echo '[{"code":"L4_INCOMPLETE","message":"nope","line":2}]'"#);
        let issues = request_judge(&j).unwrap();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].loc.line, 2);
        let j = command(r#"cat >/dev/null; echo '{"issues":[]}'"#);
        assert!(request_judge(&j).unwrap().is_empty());
        let j = command(r#"cat >/dev/null; echo '[{"code":"L2_USE_BEFORE_DEF","message":"x"}]'"#);
        assert!(matches!(request_judge(&j), Err(JudgeFailure::Malformed(_))));
        let j = command("cat >/dev/null; exit 3");
        assert!(matches!(request_judge(&j), Err(JudgeFailure::External(_))));
    }
}
