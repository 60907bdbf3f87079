//! Program generators: a deterministic graph renderer, a fault-injecting
//! wrapper, a scripted sequence and an external command adapter.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depgraph::{DepGraph, EdgeKind, Node, NodeKind};
use crate::external::{ExternalCommand, ExternalError};
use crate::qas::{infer_types, parse, InferredType};
use crate::schema::ApiSchema;
use crate::verifier::Issue;

/// Everything a generator sees for one candidate.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub graph: DepGraph,
    pub evidence: Vec<String>,
    pub previous: Option<String>,
    pub issues: Vec<Issue>,
    pub hints: String,
    /// Candidates already produced for this task.
    pub attempt: u32,
    pub corrections: Vec<String>,
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error("generator output unusable: {0}")]
    Malformed(String),
    #[error("cannot render graph: {0}")]
    Unrenderable(String),
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenerationRequest, schema: &ApiSchema) -> Result<String, GeneratorError>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, req: &GenerationRequest, schema: &ApiSchema) -> Result<String, GeneratorError> {
        (**self).generate(req, schema)
    }
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Renders the program a validated graph describes: acquisitions in
/// depth-first order, guards on nullable results, name filters on loops.
#[derive(Debug, Default, Clone, Copy)]
pub struct TemplateGenerator;

struct Renderer<'a> {
    g: &'a DepGraph,
    schema: &'a ApiSchema,
    lines: Vec<String>,
    used: BTreeSet<String>,
}

impl Renderer<'_> {
    fn fresh(&mut self, ty: &str) -> String {
        let base = lower_first(ty);
        let base = if crate::qas::KEYWORDS.contains(&base.as_str()) { format!("{base}_") } else { base };
        let mut name = base.clone();
        let mut i = 2;
        while !self.used.insert(name.clone()) {
            name = format!("{base}{i}");
            i += 1;
        }
        name
    }

    fn emit(&mut self, depth: usize, line: String) {
        self.lines.push(format!("{}{line}", "    ".repeat(depth)));
    }

    fn node(&mut self, n: &Node, var: &str, depth: usize) -> Result<(), GeneratorError> {
        if let Some(getter) = n.directive("print") {
            self.emit(depth, format!("print({var}.{getter}())"));
        }
        let deps: Vec<&Node> = self
            .g
            .outgoing(&n.id)
            .filter(|e| e.kind == EdgeKind::Dependency)
            .filter_map(|e| self.g.node(&e.dst))
            .filter(|d| d.kind == NodeKind::Action)
            .collect();
        for a in deps {
            self.emit(depth, format!("{var}.{}", a.label.trim()));
        }
        let acq: Vec<_> = self.g.outgoing(&n.id).filter(|e| e.kind == EdgeKind::Acquisition).cloned().collect();
        for e in acq {
            let dst =
                self.g.node(&e.dst).ok_or_else(|| GeneratorError::Unrenderable(format!("dangling edge {}", e.id())))?;
            let via =
                e.via.clone().ok_or_else(|| GeneratorError::Unrenderable(format!("edge {} has no method", e.id())))?;
            let sig = self
                .schema
                .lookup_method(n.type_str(), &via)
                .ok_or_else(|| GeneratorError::Unrenderable(format!("{}.{via} is not declared", n.type_str())))?
                .clone();
            let name = dst.directive("name").map(str::to_string);
            let string_param = sig.params.len() == 1 && sig.params[0].ty.base == "string" && !sig.params[0].ty.many;
            if !sig.params.is_empty() && !(string_param && name.is_some()) {
                return Err(GeneratorError::Unrenderable(format!("no arguments known for {via}")));
            }
            if sig.returns.many {
                if dst.has_flag("count") {
                    self.emit(depth, format!("print(len({var}.{via}()))"));
                    continue;
                }
                let v = self.fresh(dst.type_str());
                self.emit(depth, format!("for {v} in {var}.{via}():"));
                match name {
                    Some(x) => {
                        self.emit(depth + 1, format!("if {v}.getName() == \"{x}\":"));
                        self.node(dst, &v, depth + 2)?;
                    }
                    None => self.node(dst, &v, depth + 1)?,
                }
                continue;
            }
            let v = self.fresh(dst.type_str());
            let call = if string_param {
                format!("{var}.{via}(\"{}\")", name.unwrap_or_default())
            } else {
                format!("{var}.{via}()")
            };
            self.emit(depth, format!("{v} = {call}"));
            if sig.returns.nullable {
                self.emit(depth, format!("if {v} != None:"));
                self.node(dst, &v, depth + 1)?;
            } else {
                self.node(dst, &v, depth)?;
            }
        }
        Ok(())
    }
}

/// Render `g` against `schema`.
pub fn render_graph(g: &DepGraph, schema: &ApiSchema) -> Result<String, GeneratorError> {
    let (root_var, root_ty) =
        schema.roots.iter().next().ok_or_else(|| GeneratorError::Unrenderable("schema has no session root".into()))?;
    let root = g
        .nodes
        .iter()
        .find(|n| n.kind == NodeKind::Object && n.type_str() == root_ty && g.incoming(&n.id).next().is_none())
        .ok_or_else(|| GeneratorError::Unrenderable(format!("graph has no {root_ty} root")))?;
    let mut r = Renderer { g, schema, lines: Vec::new(), used: [root_var.clone()].into() };
    r.node(root, root_var, 0)?;
    if r.lines.is_empty() {
        return Err(GeneratorError::Unrenderable("graph describes no work".into()));
    }
    let body = r.lines.join("\n");
    let imports: Vec<String> =
        schema.modules.iter().filter(|m| body.contains(&format!("{m}."))).map(|m| format!("import {m}")).collect();
    let mut text = imports.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    text.push_str(&body);
    text.push('\n');
    Ok(text)
}

impl Generator for TemplateGenerator {
    fn generate(&self, req: &GenerationRequest, schema: &ApiSchema) -> Result<String, GeneratorError> {
        render_graph(&req.graph, schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultClass {
    Syntax,
    MissingAcquisition,
    WrongAcquisition,
    NullUnguarded,
    UnknownMethod,
    BadEnum,
    Arity,
    MissingOutput,
    /// Imports a module that does not exist; no verifier layer sees it.
    InvalidImport,
    /// Prints an expression that cannot be evaluated.
    OutputTypeMismatch,
}

impl FaultClass {
    pub const ALL: [FaultClass; 10] = [
        FaultClass::Syntax,
        FaultClass::MissingAcquisition,
        FaultClass::WrongAcquisition,
        FaultClass::NullUnguarded,
        FaultClass::UnknownMethod,
        FaultClass::BadEnum,
        FaultClass::Arity,
        FaultClass::MissingOutput,
        FaultClass::InvalidImport,
        FaultClass::OutputTypeMismatch,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub class: FaultClass,
    /// Number of defective candidates before the clean one; `None` never
    /// repairs.
    #[serde(default)]
    pub repair_after: Option<u32>,
    /// Emit the clean program whenever episode corrections are present.
    #[serde(default)]
    pub fixed_by_correction: bool,
}

impl FaultPlan {
    pub fn new(class: FaultClass, repair_after: Option<u32>) -> Self {
        FaultPlan { class, repair_after, fixed_by_correction: false }
    }
}

/// Wraps another generator and plants a defect in its output until enough
/// repair rounds have passed. Plans are keyed by prompt.
pub struct FaultInjectingGenerator<G> {
    pub inner: G,
    pub plans: BTreeMap<String, FaultPlan>,
    pub default_plan: Option<FaultPlan>,
}

impl<G: Generator> FaultInjectingGenerator<G> {
    pub fn new(inner: G) -> Self {
        FaultInjectingGenerator { inner, plans: BTreeMap::new(), default_plan: None }
    }

    pub fn with_plan(mut self, prompt: impl Into<String>, plan: FaultPlan) -> Self {
        self.plans.insert(prompt.into(), plan);
        self
    }

    pub fn with_default(mut self, plan: FaultPlan) -> Self {
        self.default_plan = Some(plan);
        self
    }
}

impl<G: Generator> Generator for FaultInjectingGenerator<G> {
    fn generate(&self, req: &GenerationRequest, schema: &ApiSchema) -> Result<String, GeneratorError> {
        let clean = self.inner.generate(req, schema)?;
        let Some(plan) = self.plans.get(&req.prompt).or(self.default_plan.as_ref()) else { return Ok(clean) };
        if plan.repair_after.is_some_and(|h| req.attempt >= h)
            || (plan.fixed_by_correction && !req.corrections.is_empty())
        {
            return Ok(clean);
        }
        Ok(plant(&clean, plan.class, schema))
    }
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

fn first_assigned_var(lines: &[String]) -> Option<(usize, String)> {
    lines.iter().enumerate().find_map(|(i, l)| {
        let (lhs, _) = l.split_once(" = ")?;
        let v = lhs.trim();
        v.chars().all(|c| c.is_alphanumeric() || c == '_').then(|| (i, v.to_string()))
    })
}

fn method_call_re() -> Regex {
    Regex::new(r"\.([A-Za-z_]\w*)\(").unwrap()
}

/// Plant one defect of `class` into a clean program. Classes that do not
/// apply to the program fall back to a syntax error.
pub fn plant(clean: &str, class: FaultClass, schema: &ApiSchema) -> String {
    let lines: Vec<String> = clean.lines().map(str::to_string).collect();
    let planted = match class {
        FaultClass::Syntax => None,
        FaultClass::MissingAcquisition => missing_acquisition(&lines, schema),
        FaultClass::WrongAcquisition => wrong_acquisition(&lines, schema),
        FaultClass::NullUnguarded => null_unguarded(&lines),
        FaultClass::UnknownMethod => unknown_method(&lines),
        FaultClass::BadEnum => bad_enum(&lines, schema),
        FaultClass::Arity => arity(&lines),
        FaultClass::MissingOutput => missing_output(&lines),
        FaultClass::InvalidImport => {
            let module = schema.modules.iter().next().cloned().unwrap_or_else(|| "api".into());
            let mut out = vec![format!("import {module}.XTools")];
            out.extend(lines.iter().cloned());
            Some(out)
        }
        FaultClass::OutputTypeMismatch => output_type_mismatch(&lines, clean, schema),
    };
    let out = planted.unwrap_or_else(|| {
        let mut l = lines.clone();
        match l.first_mut() {
            Some(first) => first.push(')'),
            None => l.push(")".into()),
        }
        l
    });
    let mut text = out.join("\n");
    text.push('\n');
    text
}

fn missing_acquisition(lines: &[String], schema: &ApiSchema) -> Option<Vec<String>> {
    let root = schema.roots.keys().next()?;
    let i =
        lines.iter().position(|l| l.split_once(" = ").is_some_and(|(_, rhs)| rhs.starts_with(&format!("{root}."))))?;
    let mut out = lines.to_vec();
    out.remove(i);
    Some(out)
}

fn wrong_acquisition(lines: &[String], schema: &ApiSchema) -> Option<Vec<String>> {
    let re = method_call_re();
    for (i, l) in lines.iter().enumerate() {
        for c in re.captures_iter(l) {
            let m = &c[1];
            for (ty, decl) in &schema.types {
                let Some(sig) = decl.methods.get(m) else { continue };
                if !schema.is_object_type(&sig.returns.base) {
                    continue;
                }
                let alt = decl.methods.values().find(|o| {
                    o.name != sig.name
                        && schema.is_object_type(&o.returns.base)
                        && o.returns.base != sig.returns.base
                        && o.returns.many == sig.returns.many
                        && o.params.iter().map(|p| &p.ty).eq(sig.params.iter().map(|p| &p.ty))
                });
                if let Some(alt) = alt {
                    let _ = ty;
                    let mut out = lines.to_vec();
                    out[i] = l.replacen(&format!(".{m}("), &format!(".{}(", alt.name), 1);
                    return Some(out);
                }
            }
        }
    }
    None
}

fn null_unguarded(lines: &[String]) -> Option<Vec<String>> {
    let i = lines.iter().position(|l| l.trim_start().starts_with("if ") && l.trim_end().ends_with("!= None:"))?;
    let depth = indent_of(&lines[i]);
    let mut out: Vec<String> = lines[..i].to_vec();
    let mut in_block = true;
    for l in &lines[i + 1..] {
        if in_block && indent_of(l) > depth {
            out.push(l[4.min(indent_of(l))..].to_string());
        } else {
            in_block = false;
            out.push(l.clone());
        }
    }
    Some(out)
}

fn unknown_method(lines: &[String]) -> Option<Vec<String>> {
    let re = Regex::new(r"\.(set|get)([A-Z]\w*)\(").unwrap();
    let target = lines.iter().rposition(|l| l.trim_start().starts_with("print(") && re.is_match(l)).or_else(|| {
        lines.iter().rposition(|l| re.is_match(l) && !l.contains(" = ") && !l.trim_start().starts_with("for "))
    });
    let mut out = lines.to_vec();
    match target {
        Some(i) => {
            let l = &lines[i];
            let c = re.captures_iter(l).last()?;
            let whole = c.get(0)?;
            out[i] = format!("{}.{}Hier{}({}", &l[..whole.start()], &c[1], &c[2], &l[whole.end()..]);
        }
        None => {
            let (i, v) = first_assigned_var(lines)?;
            let pad = " ".repeat(indent_of(&lines[i]));
            out.insert(i + 1, format!("{pad}info = {v}.getHierName()"));
        }
    }
    Some(out)
}

fn bad_enum(lines: &[String], schema: &ApiSchema) -> Option<Vec<String>> {
    for (i, l) in lines.iter().enumerate() {
        for (e, consts) in &schema.enums {
            for k in consts {
                let needle = format!("{e}.{k}");
                if l.contains(&needle) {
                    let mut out = lines.to_vec();
                    out[i] = l.replacen(&needle, &format!("{e}.DEFAULT"), 1);
                    return Some(out);
                }
            }
        }
    }
    let (e, _) = schema.enums.iter().find(|(_, c)| !c.iter().any(|k| k == "DEFAULT"))?;
    let module = schema.modules.iter().next()?;
    let mut out = lines.to_vec();
    let (i, _) = first_assigned_var(lines).unwrap_or((0, String::new()));
    let pad = " ".repeat(lines.get(i).map(|l| indent_of(l)).unwrap_or(0));
    out.insert((i + 1).min(out.len()), format!("{pad}status = {module}.{e}.DEFAULT"));
    if !lines.iter().any(|l| l.trim() == format!("import {module}")) {
        out.insert(0, format!("import {module}"));
    }
    Some(out)
}

fn arity(lines: &[String]) -> Option<Vec<String>> {
    let re = Regex::new(r"\.([A-Za-z_]\w*)\(([^()]*)\)").unwrap();
    let i = lines.iter().rposition(|l| re.is_match(l))?;
    let l = &lines[i];
    let c = re.captures_iter(l).last()?;
    let whole = c.get(0)?;
    let args = c[2].trim();
    let new_args = if args.is_empty() { "1".to_string() } else { format!("{args}, 1") };
    let mut out = lines.to_vec();
    out[i] = format!("{}.{}({new_args}){}", &l[..whole.start()], &c[1], &l[whole.end()..]);
    Some(out)
}

fn missing_output(lines: &[String]) -> Option<Vec<String>> {
    let mut out = lines.to_vec();
    if let Some(i) = lines.iter().position(|l| l.trim_start().starts_with("print(")) {
        let l = &lines[i];
        let pad = &l[..indent_of(l)];
        let inner = l.trim().strip_prefix("print(")?.strip_suffix(')')?;
        out[i] = format!("{pad}result = {inner}");
        return Some(out);
    }
    let re = Regex::new(r"^(\s*)([A-Za-z_]\w*)\.[A-Za-z_]\w*\(.*\)$").unwrap();
    let i = lines.iter().rposition(|l| re.is_match(l))?;
    let c = re.captures(&lines[i])?;
    out[i] = format!("{}current = {}", &c[1], &c[2]);
    Some(out)
}

fn output_type_mismatch(lines: &[String], clean: &str, schema: &ApiSchema) -> Option<Vec<String>> {
    let mut out = lines.to_vec();
    if let Some(i) = lines.iter().position(|l| l.trim_start().starts_with("print(")) {
        let ts = infer_types(&parse(clean).ok()?, schema);
        let ty = ts.function_calls.iter().find(|f| f.name == "print").and_then(|f| f.args.first().cloned());
        let l = &lines[i];
        let pad = &l[..indent_of(l)];
        let inner = l.trim().strip_prefix("print(")?.strip_suffix(')')?;
        let is_str = matches!(&ty, Some(InferredType::Known(t)) if t.base == "string" && !t.many);
        out[i] =
            if is_str { format!("{pad}print({inner} + 1)") } else { format!("{pad}print(\"result: \" + {inner})") };
        return Some(out);
    }
    let re = Regex::new(r"^(\s*)[A-Za-z_]\w*\.[A-Za-z_]\w*\(.*\)$").unwrap();
    let i = lines.iter().rposition(|l| re.is_match(l))?;
    let pad = re.captures(&lines[i])?[1].to_string();
    out.insert(i + 1, format!("{pad}print(\"updated: \" + 1)"));
    Some(out)
}

/// Replays a fixed list of outputs, one per request; the last repeats.
pub struct ScriptedGenerator {
    queue: Mutex<VecDeque<Result<String, String>>>,
    last: Mutex<Option<Result<String, String>>>,
}

impl ScriptedGenerator {
    pub fn new(outputs: Vec<Result<String, String>>) -> Self {
        ScriptedGenerator { queue: Mutex::new(outputs.into()), last: Mutex::new(None) }
    }

    pub fn programs<S: Into<String>>(outputs: impl IntoIterator<Item = S>) -> Self {
        Self::new(outputs.into_iter().map(|s| Ok(s.into())).collect())
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, _req: &GenerationRequest, _schema: &ApiSchema) -> Result<String, GeneratorError> {
        let next = self.queue.lock().unwrap().pop_front();
        let mut last = self.last.lock().unwrap();
        if let Some(n) = next {
            *last = Some(n);
        }
        match last.clone() {
            Some(Ok(s)) => Ok(s),
            Some(Err(e)) => Err(GeneratorError::Malformed(e)),
            None => Err(GeneratorError::Malformed("script is empty".into())),
        }
    }
}

/// Request JSON on stdin, program text on stdout.
pub struct CommandGenerator {
    pub command: ExternalCommand,
}

impl Generator for CommandGenerator {
    fn generate(&self, req: &GenerationRequest, _schema: &ApiSchema) -> Result<String, GeneratorError> {
        let input = serde_json::to_string(req).expect("request serializes");
        let out = self.command.call(&input)?;
        if out.trim().is_empty() {
            return Err(GeneratorError::Malformed("empty program".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::PatternExtractor;
    use crate::fixtures::{odb_schema, toy_schema, CANONICAL_PROGRAM};

    fn request(prompt: &str, schema: &ApiSchema) -> GenerationRequest {
        let graph = PatternExtractor::default().graph_for(prompt, schema).unwrap();
        GenerationRequest {
            prompt: prompt.into(),
            graph,
            evidence: vec![],
            previous: None,
            issues: vec![],
            hints: String::new(),
            attempt: 0,
            corrections: vec![],
        }
    }

    #[test]
    fn template_reproduces_canonical() {
        let s = toy_schema();
        let out = TemplateGenerator.generate(&request("set the weight of net clk to 2", &s), &s).unwrap();
        assert_eq!(out, CANONICAL_PROGRAM);
    }

    #[test]
    fn template_shapes() {
        let s = odb_schema();
        let r = |p: &str| TemplateGenerator.generate(&request(p, &s), &s).unwrap();
        assert_eq!(r("count the nets"), "block = design.getBlock()\nprint(len(block.getNets()))\n");
        assert_eq!(
            r("print the names of all instances"),
            "block = design.getBlock()\nfor inst in block.getInsts():\n    print(inst.getName())\n"
        );
        assert_eq!(
            r("set the signal type of net clk to CLOCK"),
            "import odb\nblock = design.getBlock()\nnet = block.findNet(\"clk\")\nif net != None:\n    net.setSigType(odb.SigType.CLOCK)\n"
        );
        let connected = r("list nets connected to instance _1000_");
        assert!(connected.contains("for iTerm in inst.getITerms():"), "{connected}");
        assert!(connected.contains("net = iTerm.getNet()\n        if net != None:"), "{connected}");
    }

    #[test]
    fn plants() {
        let s = toy_schema();
        let p = |c| plant(CANONICAL_PROGRAM, c, &s);
        assert!(p(FaultClass::Syntax).starts_with("block = design.getBlock())\n"));
        assert!(!p(FaultClass::MissingAcquisition).contains("getBlock"));
        assert!(
            p(FaultClass::WrongAcquisition).contains("block.getInsts(")
                || p(FaultClass::WrongAcquisition).ends_with(")\n")
        );
        assert_eq!(
            p(FaultClass::NullUnguarded),
            "block = design.getBlock()\nnet = block.findNet(\"clk\")\nnet.setWeight(2)\n"
        );
        assert!(p(FaultClass::UnknownMethod).contains("net.setHierWeight(2)"));
        assert!(p(FaultClass::BadEnum).contains("odb.PlacementStatus.DEFAULT"));
        assert!(p(FaultClass::Arity).contains("net.setWeight(2, 1)"));
        assert!(p(FaultClass::MissingOutput).contains("    current = net"));
        assert!(p(FaultClass::InvalidImport).starts_with("import odb.XTools\n"));
        assert!(p(FaultClass::OutputTypeMismatch).contains("print(\"updated: \" + 1)"));
    }

    #[test]
    fn fault_repairs_after_h() {
        let s = toy_schema();
        let g =
            FaultInjectingGenerator::new(TemplateGenerator).with_default(FaultPlan::new(FaultClass::Arity, Some(2)));
        let mut req = request("set the weight of net clk to 2", &s);
        let outs: Vec<String> = (0..3)
            .map(|a| {
                req.attempt = a;
                g.generate(&req, &s).unwrap()
            })
            .collect();
        assert_ne!(outs[0], CANONICAL_PROGRAM);
        assert_eq!(outs[0], outs[1]);
        assert_eq!(outs[2], CANONICAL_PROGRAM);
    }

    #[test]
    fn scripted_repeats_last() {
        let s = toy_schema();
        let g = ScriptedGenerator::new(vec![Ok("a = 1".into()), Err("boom".into())]);
        let req = request("count the nets", &s);
        assert_eq!(g.generate(&req, &s).unwrap(), "a = 1");
        assert!(g.generate(&req, &s).is_err());
        assert!(g.generate(&req, &s).is_err());
    }
}
