use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use structverify::bench::{self, load_snapshots, load_suite, parse_sweep, resolve_snapshot, SuiteConfig, SuiteEnv};
use structverify::controller::SynthesisResult;
use structverify::controller::{CommandGenerator, Generator, SynthConfig, TemplateGenerator};
use structverify::depgraph::{extract_graph, CommandExtractor, DepGraph, GraphExtractor, PatternExtractor};
use structverify::external::ExternalCommand;
use structverify::fixtures;
use structverify::orchestrator::{
    run_multistep, run_with_reflection, CommandReflector, EpisodeReflector, MultiTask, Pipeline, RuleReflector,
};
use structverify::qas::{infer_types, parse};
use structverify::retrieval::{retrieve, CorpusIndex};
use structverify::runtime::{execute, Session};
use structverify::schema::{load_schema, ApiSchema};
use structverify::uncertainty::{score, UncertaintyConfig};
use structverify::verifier::{verify_all, CommandJudge, RuleJudge, SemanticJudge, VerifierConfig, VerifyContext};

#[derive(Parser, Debug)]
#[command(
    name = "structverify",
    version,
    about = "Verify, repair and run design-database scripts before they touch the tool"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the four verifier layers over a program.
    Verify(VerifyArgs),
    /// Synthesize a verified program from a prompt.
    Synth(SynthArgs),
    /// Execute a program against a design snapshot.
    Run(RunArgs),
    /// Run a multi-step task in one session, optionally with reflection.
    Multistep(MultistepArgs),
    /// Extract and validate the dependency graph of a prompt.
    ExtractGraph(ExtractArgs),
    /// Score a synthesis result's post-verification uncertainty.
    Score(ScoreArgs),
    /// Run a task suite and write metrics.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct SchemaArgs {
    /// Schema JSON, or `odb` / `toy` for the bundled ones.
    #[arg(long, default_value = "odb")]
    schema: String,
}

#[derive(Args, Debug, Clone)]
struct ToolArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Usage corpus JSON; defaults to the bundled corpus of a bundled schema.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// External graph extractor command; the pattern extractor otherwise.
    #[arg(long)]
    extractor: Option<String>,
    /// External generator command; the template generator otherwise.
    #[arg(long)]
    generator: Option<String>,
    /// External semantic judge command; the rule judge otherwise.
    #[arg(long)]
    judge: Option<String>,
    /// Timeout for external commands, in seconds.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    /// Extraction rounds.
    #[arg(long, default_value_t = 3)]
    rounds: usize,
}

#[derive(Args, Debug, Clone)]
struct PromptArgs {
    #[arg(long, conflicts_with = "prompt_file")]
    prompt: Option<String>,
    #[arg(long)]
    prompt_file: Option<PathBuf>,
}

impl PromptArgs {
    fn get(&self) -> Result<Option<String>> {
        match (&self.prompt, &self.prompt_file) {
            (Some(p), _) => Ok(Some(p.clone())),
            (None, Some(f)) => Ok(Some(read(f)?.trim().to_string())),
            (None, None) => Ok(None),
        }
    }

    fn require(&self) -> Result<String> {
        self.get()?.context("a prompt is required (--prompt or --prompt-file)")
    }
}

#[derive(Args, Debug)]
struct VerifyArgs {
    program: PathBuf,
    #[command(flatten)]
    tools: ToolArgs,
    #[command(flatten)]
    prompt: PromptArgs,
    /// Graph JSON; extracted from the prompt when absent.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
    max_layer: u8,
    /// Evidence snippets per retrieval target.
    #[arg(long, default_value_t = 3)]
    k: usize,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    tools: ToolArgs,
    #[command(flatten)]
    prompt: PromptArgs,
    #[arg(long, default_value_t = 5)]
    budget: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
    max_layer: u8,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    program: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Snapshot JSON, or `synthetic:gcd[:seed]`.
    #[arg(long)]
    snapshot: String,
    /// Print the full outcome as JSON instead of the program output.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct MultistepArgs {
    #[command(flatten)]
    tools: ToolArgs,
    /// Task JSON with `id`, `snapshot` and `steps`.
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    reflect: bool,
    /// External reflector command; the rule reflector otherwise.
    #[arg(long)]
    reflector: Option<String>,
    #[arg(long, default_value_t = 5)]
    budget: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[command(flatten)]
    tools: ToolArgs,
    #[command(flatten)]
    prompt: PromptArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Synthesis result JSON written by `synth`.
    #[arg(long)]
    result: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Uncertainty configuration JSON; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    tools: ToolArgs,
    /// Directory of task JSON files.
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Execute rejected programs too, to label verifier decisions.
    #[arg(long)]
    force_exec: bool,
    #[arg(long, default_value = "0:1:0.05")]
    theta_sweep: String,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 5)]
    budget: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
    max_layer: u8,
    /// Reflect on failed multi-step tasks and rerun them once.
    #[arg(long)]
    reflect: bool,
    /// Uncertainty configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).context("cannot serialize output")
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

impl SchemaArgs {
    fn load(&self) -> Result<ApiSchema> {
        match self.schema.as_str() {
            "odb" => Ok(fixtures::odb_schema()),
            "toy" => Ok(fixtures::toy_schema()),
            path => load_schema(path).with_context(|| format!("cannot load schema {path}")),
        }
    }
}

struct Tools {
    schema: Arc<ApiSchema>,
    index: CorpusIndex,
    extractor: Box<dyn GraphExtractor>,
    generator: Box<dyn Generator>,
    judge: Box<dyn SemanticJudge>,
    rounds: usize,
}

impl ToolArgs {
    fn command(&self, cmd: &str) -> ExternalCommand {
        ExternalCommand::new(cmd).with_timeout(Duration::from_secs(self.timeout))
    }

    fn load(&self) -> Result<Tools> {
        let schema = self.schema.load()?;
        let index = match (&self.corpus, self.schema.schema.as_str()) {
            (Some(p), _) => CorpusIndex::load(p).with_context(|| format!("cannot load corpus {}", p.display()))?,
            (None, "odb") => fixtures::odb_index(),
            (None, "toy") => fixtures::toy_index(),
            (None, _) => bail!("--corpus is required with a schema file"),
        };
        let extractor: Box<dyn GraphExtractor> = match &self.extractor {
            Some(c) => Box::new(CommandExtractor { command: self.command(c) }),
            None => Box::new(PatternExtractor::default()),
        };
        let generator: Box<dyn Generator> = match &self.generator {
            Some(c) => Box::new(CommandGenerator { command: self.command(c) }),
            None => Box::new(TemplateGenerator),
        };
        let judge: Box<dyn SemanticJudge> = match &self.judge {
            Some(c) => Box::new(CommandJudge::new(self.command(c))),
            None => Box::new(RuleJudge),
        };
        Ok(Tools { schema: Arc::new(schema), index, extractor, generator, judge, rounds: self.rounds })
    }
}

impl Tools {
    fn pipeline(&self, config: SynthConfig) -> Pipeline<'_> {
        Pipeline {
            schema: self.schema.clone(),
            index: &self.index,
            extractor: self.extractor.as_ref(),
            generator: self.generator.as_ref(),
            judge: self.judge.as_ref(),
            config,
        }
    }

    fn synth_config(&self, budget: usize, max_layer: u8) -> SynthConfig {
        SynthConfig {
            budget,
            extraction_rounds: self.rounds,
            verifier: VerifierConfig { max_layer },
            ..Default::default()
        }
    }
}

fn load_uncertainty(path: Option<&Path>) -> Result<UncertaintyConfig> {
    let cfg: UncertaintyConfig = match path {
        Some(p) => {
            serde_json::from_str(&read(p)?).with_context(|| format!("invalid uncertainty config {}", p.display()))?
        }
        None => UncertaintyConfig::default(),
    };
    cfg.validate().context("invalid uncertainty config")?;
    Ok(cfg)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let tools = a.tools.load()?;
    let source = read(&a.program)?;
    let prompt = a.prompt.get()?.unwrap_or_default();
    let graph = match (&a.graph, prompt.is_empty()) {
        (Some(p), _) => DepGraph::load(p).with_context(|| format!("cannot load graph {}", p.display()))?,
        (None, false) => extract_graph(&prompt, tools.extractor.as_ref(), &tools.schema, tools.rounds, &[])?.graph,
        (None, true) => bail!("verify needs --graph or a prompt"),
    };
    let evidence = retrieve(&graph, &tools.index, a.k);
    let ctx = VerifyContext {
        schema: &tools.schema,
        graph: &graph,
        evidence: &evidence,
        judge: tools.judge.as_ref(),
        prompt: &prompt,
        config: VerifierConfig { max_layer: a.max_layer },
    };
    let report = verify_all(&source, &ctx)?;
    println!("{}", to_json(&report)?);
    Ok(status(report.pass))
}

fn cmd_synth(a: SynthArgs) -> Result<ExitCode> {
    let tools = a.tools.load()?;
    let prompt = a.prompt.require()?;
    let pipe = tools.pipeline(tools.synth_config(a.budget, a.max_layer));
    let res = pipe.synthesize(&prompt, &[])?;
    write_or_print(a.out.as_deref(), &to_json(&res)?)?;
    eprintln!(
        "{:?} after {} candidate(s), final layer {}",
        res.accept_mode,
        res.trajectory.len(),
        res.final_report.layer
    );
    Ok(status(res.accepted))
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let schema = Arc::new(a.schema.load()?);
    let db = resolve_snapshot(&a.snapshot, Path::new("."), &schema)?;
    let source = read(&a.program)?;
    let script = match parse(&source) {
        Ok(s) => s,
        Err(f) => {
            eprintln!("{}: does not parse: {f:?}", a.program.display());
            return Ok(ExitCode::from(1));
        }
    };
    let mut session = Session::new(schema, db);
    let out = execute(&script, &mut session);
    if a.json {
        println!("{}", to_json(&out)?);
    } else {
        for line in &out.output {
            println!("{line}");
        }
        if let Some(e) = &out.error {
            eprintln!("{e}");
        }
    }
    Ok(ExitCode::from(out.exit_code() as u8))
}

fn cmd_multistep(a: MultistepArgs) -> Result<ExitCode> {
    let tools = a.tools.load()?;
    let task: MultiTask =
        serde_json::from_str(&read(&a.task)?).with_context(|| format!("invalid task {}", a.task.display()))?;
    let base = a.task.parent().unwrap_or(Path::new("."));
    let db = resolve_snapshot(&task.snapshot, base, &tools.schema)?;
    let pipe = tools.pipeline(tools.synth_config(a.budget, 4));
    let ep = if a.reflect {
        let reflector: Box<dyn EpisodeReflector> = match &a.reflector {
            Some(c) => Box::new(CommandReflector { command: a.tools.command(c) }),
            None => Box::new(RuleReflector),
        };
        run_with_reflection(&task, &db, &pipe, reflector.as_ref())?
    } else {
        run_multistep(&task, &db, &pipe, &[])?
    };
    write_or_print(a.out.as_deref(), &to_json(&ep)?)?;
    eprintln!(
        "{}: first pass {}, final {}, {} tool call(s)",
        task.id,
        if ep.passed { "passed" } else { "failed" },
        if ep.final_passed() { "passed" } else { "failed" },
        ep.total_tool_calls()
    );
    Ok(status(ep.final_passed()))
}

fn cmd_extract(a: ExtractArgs) -> Result<ExitCode> {
    let tools = a.tools.load()?;
    let prompt = a.prompt.require()?;
    let ex = extract_graph(&prompt, tools.extractor.as_ref(), &tools.schema, tools.rounds, &[])?;
    write_or_print(a.out.as_deref(), &to_json(&ex)?)?;
    Ok(status(ex.validated))
}

fn cmd_score(a: ScoreArgs) -> Result<ExitCode> {
    let schema = a.schema.load()?;
    let cfg = load_uncertainty(a.config.as_deref())?;
    let res: SynthesisResult =
        serde_json::from_str(&read(&a.result)?).with_context(|| format!("invalid result {}", a.result.display()))?;
    if res.trajectory.is_empty() {
        bail!("result has an empty trajectory");
    }
    let script = parse(&res.final_source).map_err(|f| anyhow::anyhow!("final program does not parse: {f:?}"))?;
    let s = score(&infer_types(&script, &schema), &res.trajectory, &schema, &cfg);
    println!("{}", to_json(&s)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let tools = a.tools.load()?;
    let tasks = load_suite(&a.suite)?;
    let snapshots = load_snapshots(&tasks, &a.suite, &tools.schema)?;
    let thetas =
        parse_sweep(&a.theta_sweep).with_context(|| format!("bad sweep {:?}, want start:stop:step", a.theta_sweep))?;
    let cfg = SuiteConfig {
        synth: tools.synth_config(a.budget, a.max_layer),
        uncertainty: load_uncertainty(a.config.as_deref())?,
        force_exec: a.force_exec,
        workers: a.workers,
        thetas,
        reflect: a.reflect,
    };
    let reflector = RuleReflector;
    let env = SuiteEnv {
        schema: tools.schema.clone(),
        index: &tools.index,
        extractor: tools.extractor.as_ref(),
        generator: tools.generator.as_ref(),
        judge: tools.judge.as_ref(),
        reflector: Some(&reflector),
    };
    let out = bench::run_suite(&tasks, &snapshots, &env, &cfg);
    let written = bench::write_outputs(&a.out, &out).with_context(|| format!("cannot write {}", a.out.display()))?;
    let r = &out.report;
    eprintln!(
        "{} tasks, {} passed, {} calls over {} executed programs, {} infrastructure failure(s)",
        r.tasks, r.passed, r.total_calls, r.executed_steps, r.infra_failures
    );
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Multistep(a) => cmd_multistep(a),
        Cmd::ExtractGraph(a) => cmd_extract(a),
        Cmd::Score(a) => cmd_score(a),
        Cmd::Bench(a) => cmd_bench(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {}", describe(&e));
        ExitCode::from(2)
    })
}

/// Joins the error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !prev.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        prev = msg;
    }
    out
}
