use std::collections::VecDeque;
use std::sync::Mutex;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use super::graph::{DepGraph, Edge, Node};
use super::validate::{apply_repairs, transition_methods, validate_graph, Feedback, GraphReport};
use crate::external::{ExternalCommand, ExternalError};
use crate::schema::{ApiSchema, TypeRef};

/// What a graph extractor sees on each round.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionRequest<'a> {
    pub prompt: &'a str,
    pub previous: Option<&'a DepGraph>,
    pub feedback: &'a [Feedback],
    /// Cross-step corrections from episode reflection.
    pub corrections: &'a [String],
    pub round: usize,
}

#[derive(Debug, Error)]
pub enum ExtractorError {
    #[error("extractor output is not a usable graph: {0}")]
    Unparseable(String),
    #[error(transparent)]
    External(#[from] ExternalError),
}

/// Produces a graph hypothesis from a prompt, optionally refining a previous
/// hypothesis against validation feedback.
pub trait GraphExtractor: Send + Sync {
    fn propose(&self, req: &ExtractionRequest<'_>, schema: &ApiSchema) -> Result<DepGraph, ExtractorError>;
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("extractor failed twice in a row: {0}")]
    ExtractorFailure(String),
    #[error("max_rounds must be at least 1")]
    NoRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extraction {
    pub graph: DepGraph,
    pub report: GraphReport,
    pub rounds_used: usize,
    pub validated: bool,
}

/// Hypothesis-and-validation loop: propose, validate, feed violations back.
pub fn extract_graph(
    prompt: &str,
    extractor: &dyn GraphExtractor,
    schema: &ApiSchema,
    max_rounds: usize,
    corrections: &[String],
) -> Result<Extraction, ExtractError> {
    extract_graph_from(prompt, extractor, schema, max_rounds, corrections, None, &[])
}

/// As [`extract_graph`], seeded with an earlier hypothesis and feedback.
pub fn extract_graph_from(
    prompt: &str,
    extractor: &dyn GraphExtractor,
    schema: &ApiSchema,
    max_rounds: usize,
    corrections: &[String],
    seed: Option<&DepGraph>,
    seed_feedback: &[Feedback],
) -> Result<Extraction, ExtractError> {
    if max_rounds == 0 {
        return Err(ExtractError::NoRounds);
    }
    let mut previous: Option<DepGraph> = seed.cloned();
    let mut feedback: Vec<Feedback> = seed_feedback.to_vec();
    let mut last: Option<(DepGraph, GraphReport)> = None;
    let mut consecutive_failures = 0;
    let mut last_error = String::new();
    for round in 1..=max_rounds {
        let req = ExtractionRequest { prompt, previous: previous.as_ref(), feedback: &feedback, corrections, round };
        let proposal = extractor.propose(&req, schema).map_err(|e| e.to_string()).and_then(|g| {
            let report = validate_graph(&g, schema).map_err(|e| e.to_string())?;
            Ok((g, report))
        });
        match proposal {
            Ok((g, report)) => {
                consecutive_failures = 0;
                if report.is_valid() {
                    return Ok(Extraction { graph: g, report, rounds_used: round, validated: true });
                }
                feedback = report.feedback.clone();
                previous = Some(g.clone());
                last = Some((g, report));
            }
            Err(msg) => {
                consecutive_failures += 1;
                last_error = msg;
                if consecutive_failures >= 2 {
                    return Err(ExtractError::ExtractorFailure(last_error));
                }
            }
        }
    }
    match last {
        Some((graph, report)) => Ok(Extraction { graph, report, rounds_used: max_rounds, validated: false }),
        None => Err(ExtractError::ExtractorFailure(last_error)),
    }
}

/// Returns a fixed sequence of hypotheses, one per round; the last repeats.
pub struct ScriptedExtractor {
    graphs: Mutex<VecDeque<DepGraph>>,
    last: Mutex<Option<DepGraph>>,
}

impl ScriptedExtractor {
    pub fn new(graphs: Vec<DepGraph>) -> Self {
        ScriptedExtractor { graphs: Mutex::new(graphs.into()), last: Mutex::new(None) }
    }
}

impl GraphExtractor for ScriptedExtractor {
    fn propose(&self, _req: &ExtractionRequest<'_>, _schema: &ApiSchema) -> Result<DepGraph, ExtractorError> {
        let next = self.graphs.lock().unwrap().pop_front();
        let mut last = self.last.lock().unwrap();
        match next {
            Some(g) => {
                *last = Some(g.clone());
                Ok(g)
            }
            None => last.clone().ok_or_else(|| ExtractorError::Unparseable("script exhausted".into())),
        }
    }
}

/// Delegates to an external command: request JSON on stdin, graph JSON on
/// stdout.
pub struct CommandExtractor {
    pub command: ExternalCommand,
}

impl GraphExtractor for CommandExtractor {
    fn propose(&self, req: &ExtractionRequest<'_>, _schema: &ApiSchema) -> Result<DepGraph, ExtractorError> {
        let input = serde_json::to_string(req).expect("request serializes");
        let out = self.command.call(&input)?;
        serde_json::from_str(out.trim()).map_err(|e| ExtractorError::Unparseable(e.to_string()))
    }
}

/// Which object a phrase refers to, and how the program should treat it.
#[derive(Debug, Clone, PartialEq)]
enum Intent {
    Set { noun: String, name: Option<String>, prop: String, value: String },
    Print { noun: String, name: Option<String>, prop: String },
    Count { noun: String },
    Connected { name: String },
}

/// Deterministic prompt-to-graph extractor driven by a phrase table over
/// the schema's vocabulary. Paths from the session root are found by
/// unique shortest schema walk.
pub struct PatternExtractor {
    set_named: Regex,
    set_all: Regex,
    print_named: Regex,
    print_all: Regex,
    count: Regex,
    connected: Regex,
    nouns: Vec<(&'static str, &'static str)>,
}

const PROPS: &str = "weight|signal type|placement status|name|width|height|master";
const NOUNS: &str = "nets|net|instances|instance|ports|port|pins|pin|masters|master";

impl Default for PatternExtractor {
    fn default() -> Self {
        let props = format!("({PROPS}|names|weights|signal types|placement statuses|widths|heights|masters)");
        PatternExtractor {
            set_named: Regex::new(&format!(
                r"(?i)\bset the ({PROPS}) of (?:the )?({NOUNS}) ([\w.\[\]/]+?) to ([\w.-]+)"
            ))
            .unwrap(),
            set_all: Regex::new(&format!(
                r"(?i)\bset the ({PROPS}) of (?:all|every|each) (?:the )?({NOUNS})\b.*?\bto ([\w.-]+)"
            ))
            .unwrap(),
            print_named: Regex::new(&format!(
                r"(?i)\b(?:print|show|report|display) the {props} of (?:the )?({NOUNS}) ([\w\[\]/]+)"
            ))
            .unwrap(),
            print_all: Regex::new(&format!(
                r"(?i)\b(?:print|show|report|display|list) (?:the )?{props} of (?:all|every|each) (?:the )?({NOUNS})"
            ))
            .unwrap(),
            count: Regex::new(&format!(r"(?i)\b(?:count (?:the |all )?(?:the )?|how many )({NOUNS})")).unwrap(),
            connected: Regex::new(
                r"(?i)\b(?:list|print|show|report) (?:the )?nets connected to (?:the )?instance ([\w\[\]/]+)",
            )
            .unwrap(),
            nouns: vec![
                ("net", "Net"),
                ("instance", "Inst"),
                ("port", "BTerm"),
                ("pin", "ITerm"),
                ("master", "Master"),
            ],
        }
    }
}

fn singular(word: &str) -> String {
    let w = word.to_lowercase();
    for (plural, single) in [("statuses", "status"), ("instances", "instance")] {
        if w.ends_with(plural) {
            return format!("{}{}", &w[..w.len() - plural.len()], single);
        }
    }
    if w.ends_with("us") || w.ends_with("ss") {
        return w;
    }
    w.strip_suffix('s').map(str::to_string).unwrap_or(w)
}

/// Property phrases whose accessor name is abbreviated.
const PROP_ALIASES: [(&str, &str); 1] = [("signal type", "SigType")];

fn camel(prop: &str) -> String {
    if let Some((_, alias)) = PROP_ALIASES.iter().find(|(p, _)| prop.eq_ignore_ascii_case(p)) {
        return alias.to_string();
    }
    prop.split_whitespace()
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
                None => String::new(),
            }
        })
        .collect()
}

fn clean(token: &str) -> String {
    token.trim_matches(|c: char| c == '.' || c == ',' || c == '"' || c == '\'').to_string()
}

impl PatternExtractor {
    fn intent(&self, prompt: &str) -> Option<Intent> {
        if let Some(c) = self.set_named.captures(prompt) {
            let noun = singular(&c[2]);
            let name = clean(&c[3]);
            if !matches!(name.to_lowercase().as_str(), "all" | "every" | "each") {
                return Some(Intent::Set { noun, name: Some(name), prop: singular(&c[1]), value: clean(&c[4]) });
            }
        }
        if let Some(c) = self.set_all.captures(prompt) {
            return Some(Intent::Set { noun: singular(&c[2]), name: None, prop: singular(&c[1]), value: clean(&c[3]) });
        }
        if let Some(c) = self.connected.captures(prompt) {
            return Some(Intent::Connected { name: clean(&c[1]) });
        }
        if let Some(c) = self.print_all.captures(prompt) {
            return Some(Intent::Print { noun: singular(&c[2]), name: None, prop: singular(&c[1]) });
        }
        if let Some(c) = self.print_named.captures(prompt) {
            return Some(Intent::Print { noun: singular(&c[2]), name: Some(clean(&c[3])), prop: singular(&c[1]) });
        }
        if let Some(c) = self.count.captures(prompt) {
            return Some(Intent::Count { noun: singular(&c[1]) });
        }
        None
    }

    fn type_of(&self, noun: &str) -> Option<&'static str> {
        self.nouns.iter().find(|(n, _)| *n == noun).map(|(_, t)| *t)
    }

    /// Build the graph for a recognized intent against `schema`.
    pub fn graph_for(&self, prompt: &str, schema: &ApiSchema) -> Result<DepGraph, ExtractorError> {
        let intent =
            self.intent(prompt).ok_or_else(|| ExtractorError::Unparseable(format!("no pattern matches: {prompt}")))?;
        let mut b = Builder::new(schema)?;
        match intent {
            Intent::Set { noun, name, prop, value } => {
                let ty = self.type_of(&noun).ok_or_else(|| unknown_noun(&noun))?;
                let target = b.acquire(ty, name.as_deref())?;
                let setter = format!("set{}", camel(&prop));
                let arg = render_arg(schema, ty, &setter, &value);
                let a = b.add(Node::action("a1", format!("{setter}({arg})")));
                b.g.edges.push(Edge::dependency(target, a));
            }
            Intent::Print { noun, name, prop } => {
                let ty = self.type_of(&noun).ok_or_else(|| unknown_noun(&noun))?;
                let target = b.acquire(ty, name.as_deref())?;
                if prop == "master" {
                    let m = b.step(&target, "Master")?;
                    b.label(&m, "print=getName");
                } else {
                    b.label(&target, &format!("print=get{}", camel(&prop)));
                }
            }
            Intent::Count { noun } => {
                let ty = self.type_of(&noun).ok_or_else(|| unknown_noun(&noun))?;
                let target = b.acquire(ty, None)?;
                b.label(&target, "count");
            }
            Intent::Connected { name } => {
                let inst = b.acquire("Inst", Some(&name))?;
                let pin = b.step(&inst, "ITerm")?;
                let net = b.step(&pin, "Net")?;
                b.label(&net, "print=getName");
            }
        }
        Ok(b.g)
    }
}

fn unknown_noun(noun: &str) -> ExtractorError {
    ExtractorError::Unparseable(format!("no object type for '{noun}'"))
}

/// Render a setter argument according to its declared parameter type.
fn render_arg(schema: &ApiSchema, ty: &str, setter: &str, value: &str) -> String {
    let param = schema.lookup_method(ty, setter).and_then(|m| m.params.first()).map(|p| p.ty.clone());
    match param {
        Some(TypeRef { ref base, .. }) if schema.is_enum(base) => {
            let module = schema.modules.iter().next().cloned().unwrap_or_default();
            if module.is_empty() {
                format!("{base}.{value}")
            } else {
                format!("{module}.{base}.{value}")
            }
        }
        Some(TypeRef { ref base, .. }) if base == "string" => format!("\"{value}\""),
        _ => value.to_string(),
    }
}

struct Builder<'a> {
    schema: &'a ApiSchema,
    g: DepGraph,
    root: String,
    next: usize,
}

impl<'a> Builder<'a> {
    fn new(schema: &'a ApiSchema) -> Result<Self, ExtractorError> {
        let (_, root_ty) = schema
            .roots
            .iter()
            .next()
            .ok_or_else(|| ExtractorError::Unparseable("schema has no session root".into()))?;
        let mut b = Builder { schema, g: DepGraph::default(), root: String::new(), next: 1 };
        b.root = b.add_object(root_ty);
        Ok(b)
    }

    fn add(&mut self, n: Node) -> String {
        let id = n.id.clone();
        self.g.nodes.push(n);
        id
    }

    fn add_object(&mut self, ty: &str) -> String {
        let id = format!("n{}", self.next);
        self.next += 1;
        self.add(Node::object(id, ty))
    }

    fn label(&mut self, id: &str, directive: &str) {
        let n = self.g.nodes.iter_mut().find(|n| n.id == id).expect("node exists");
        if n.label.is_empty() {
            n.label = directive.to_string();
        } else {
            n.label = format!("{};{directive}", n.label);
        }
    }

    fn ty(&self, id: &str) -> String {
        self.g.node(id).map(|n| n.type_str().to_string()).unwrap_or_default()
    }

    /// One acquisition step to `dst`, preferring a scalar getter.
    fn step(&mut self, from: &str, dst: &str) -> Result<String, ExtractorError> {
        let src = self.ty(from);
        let via = pick_via(self.schema, &src, dst, None)
            .ok_or_else(|| ExtractorError::Unparseable(format!("no method of {src} yields {dst}")))?;
        let id = self.add_object(dst);
        self.g.edges.push(Edge::acquisition(from, &id, via));
        Ok(id)
    }

    /// Walk from the root to `ty` along the unique shortest schema path.
    fn acquire(&mut self, ty: &str, name: Option<&str>) -> Result<String, ExtractorError> {
        let root_ty = self.ty(&self.root);
        let path = if root_ty == ty {
            vec![]
        } else {
            type_path(self.schema, &root_ty, ty)
                .ok_or_else(|| ExtractorError::Unparseable(format!("no unique path from {root_ty} to {ty}")))?
        };
        let mut cur = self.root.clone();
        for (i, t) in path.iter().enumerate() {
            let last = i + 1 == path.len();
            let src = self.ty(&cur);
            let via = pick_via(self.schema, &src, t, if last { name } else { None })
                .ok_or_else(|| ExtractorError::Unparseable(format!("no method of {src} yields {t}")))?;
            let id = self.add_object(t);
            self.g.edges.push(Edge::acquisition(&cur, &id, via));
            cur = id;
        }
        if let Some(n) = name {
            self.label(&cur, &format!("name={n}"));
        }
        Ok(cur)
    }
}

/// Types strictly after `from` up to and including `to`.
fn type_path(schema: &ApiSchema, from: &str, to: &str) -> Option<Vec<String>> {
    use super::validate::{shortest_paths, SchemaPath};
    if schema.successors(from).contains(to) {
        return Some(vec![to.to_string()]);
    }
    match shortest_paths(schema, from, to) {
        SchemaPath::Unique(mut mids) => {
            mids.push(to.to_string());
            Some(mids)
        }
        _ => None,
    }
}

/// A named lookup uses a finder taking one string when the schema has one;
/// otherwise a collection getter; unnamed steps prefer scalar getters.
fn pick_via(schema: &ApiSchema, src: &str, dst: &str, name: Option<&str>) -> Option<String> {
    let cands = transition_methods(schema, src, dst);
    let sig = |m: &str| schema.lookup_method(src, m);
    let finder = cands.iter().find(|m| {
        sig(m).is_some_and(|s| s.params.len() == 1 && s.params[0].ty == TypeRef::named("string") && !s.returns.many)
    });
    let many = cands.iter().find(|m| sig(m).is_some_and(|s| s.params.is_empty() && s.returns.many));
    let scalar = cands.iter().find(|m| sig(m).is_some_and(|s| s.params.is_empty() && !s.returns.many));
    let pick = match name {
        Some(_) => finder.or(many).or(scalar),
        None => scalar.or(many),
    };
    pick.map(|s| s.to_string())
}

impl GraphExtractor for PatternExtractor {
    fn propose(&self, req: &ExtractionRequest<'_>, schema: &ApiSchema) -> Result<DepGraph, ExtractorError> {
        if let (Some(prev), false) = (req.previous, req.feedback.is_empty()) {
            if let Ok(report) = validate_graph(prev, schema) {
                if !report.inserted_intermediates.is_empty() {
                    return Ok(apply_repairs(prev, &report, schema));
                }
            }
        }
        self.graph_for(req.prompt, schema)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::graph::NodeKind;
    use crate::fixtures::{odb_schema, toy_schema};

    fn extract(prompt: &str, schema: &ApiSchema) -> DepGraph {
        let e = PatternExtractor::default();
        let x = extract_graph(prompt, &e, schema, 3, &[]).unwrap();
        assert!(x.validated, "{prompt}: {:?}", x.report);
        assert_eq!(x.rounds_used, 1);
        x.graph
    }

    #[test]
    fn set_weight_chain() {
        let g = extract("set the weight of net clk to 2", &toy_schema());
        assert_eq!(g.to_string(), "Design -> Block -> Net -> setWeight(2)");
        assert_eq!(g.edges[1].via.as_deref(), Some("findNet"));
        assert_eq!(g.node("n3").unwrap().directive("name"), Some("clk"));
    }

    #[test]
    fn toy_instance_lookup_falls_back_to_collection() {
        let g = extract("Set the placement status of instance u_ff0 to FIRM.", &toy_schema());
        assert_eq!(g.edges[1].via.as_deref(), Some("getInsts"));
        let a = g.action_nodes().next().unwrap();
        assert_eq!(a.label, "setPlacementStatus(odb.PlacementStatus.FIRM)");
    }

    #[test]
    fn odb_intents() {
        let s = odb_schema();
        let g = extract("List the nets connected to instance _411_", &s);
        assert_eq!(g.to_string(), "Design -> Block -> Inst -> ITerm -> Net");
        let g = extract("how many ports does the design have", &s);
        assert!(g.nodes.last().unwrap().has_flag("count"));
        let g = extract("print the master of instance _500_", &s);
        assert_eq!(g.to_string(), "Design -> Block -> Inst -> Master");
        let g = extract("set the signal type of all nets in the block to CLOCK", &s);
        assert_eq!(g.action_nodes().next().unwrap().label, "setSigType(odb.SigType.CLOCK)");
        assert!(g.nodes.iter().all(|n| n.kind != NodeKind::Object || n.directive("name").is_none()));
    }

    #[test]
    fn unmatched_prompt_fails_twice() {
        let e = PatternExtractor::default();
        let err = extract_graph("make it faster", &e, &toy_schema(), 3, &[]).unwrap_err();
        assert!(matches!(err, ExtractError::ExtractorFailure(_)));
    }

    #[test]
    fn scripted_correction_takes_two_rounds() {
        let s = toy_schema();
        let good = PatternExtractor::default().graph_for("set the weight of net clk to 2", &s).unwrap();
        let mut bad = good.clone();
        bad.nodes[2].type_name = Some("Wire".into());
        let e = ScriptedExtractor::new(vec![bad.clone(), good]);
        let x = extract_graph("p", &e, &s, 3, &[]).unwrap();
        assert!(x.validated);
        assert_eq!(x.rounds_used, 2);

        let e = ScriptedExtractor::new(vec![bad]);
        let x = extract_graph("p", &e, &s, 1, &[]).unwrap();
        assert!(!x.validated);
    }

    #[test]
    fn repairs_skipped_intermediate_on_feedback() {
        let s = toy_schema();
        let skip = DepGraph {
            nodes: vec![Node::object("n1", "Design"), Node::object("n3", "Net")],
            edges: vec![Edge::acquisition("n1", "n3", "getNets")],
        };
        struct Once(ScriptedExtractor, PatternExtractor);
        impl GraphExtractor for Once {
            fn propose(&self, req: &ExtractionRequest<'_>, schema: &ApiSchema) -> Result<DepGraph, ExtractorError> {
                if req.round == 1 {
                    self.0.propose(req, schema)
                } else {
                    self.1.propose(req, schema)
                }
            }
        }
        let e = Once(ScriptedExtractor::new(vec![skip]), PatternExtractor::default());
        let x = extract_graph("unused", &e, &s, 2, &[]).unwrap();
        assert!(x.validated);
        assert_eq!(x.graph.to_string(), "Design -> Block -> Net");
    }
}
