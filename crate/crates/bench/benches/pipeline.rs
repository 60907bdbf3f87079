use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use structverify::bench::{run_suite, SuiteConfig, SuiteEnv};
use structverify::controller::{SynthConfig, TemplateGenerator};
use structverify::depgraph::{extract_graph, PatternExtractor};
use structverify::fixtures::CANONICAL_PROGRAM;
use structverify::orchestrator::Pipeline;
use structverify::retrieval::retrieve;
use structverify::verifier::{verify_all, RuleJudge, VerifierConfig, VerifyContext};
use structverify_bench::Workload;

fn pipeline(c: &mut Criterion) {
    let w = Workload::odb().expect("bundled suite loads");
    let ex = PatternExtractor::default();
    let prompt = "set the weight of net clk to 2";

    let graph = extract_graph(prompt, &ex, &w.schema, 3, &[]).unwrap().graph;
    let evidence = retrieve(&graph, &w.index, 3);
    let ctx = VerifyContext {
        schema: &w.schema,
        graph: &graph,
        evidence: &evidence,
        judge: &RuleJudge,
        prompt,
        config: VerifierConfig::default(),
    };
    c.bench_function("verify_all", |b| b.iter(|| verify_all(black_box(CANONICAL_PROGRAM), &ctx).unwrap()));

    let pipe = Pipeline {
        schema: w.schema.clone(),
        index: &w.index,
        extractor: &ex,
        generator: &TemplateGenerator,
        judge: &RuleJudge,
        config: SynthConfig::default(),
    };
    let prompts = w.clean_prompts();
    c.bench_function("synthesize", |b| {
        b.iter(|| {
            for p in &prompts {
                black_box(pipe.synthesize(p, &[]).unwrap());
            }
        })
    });

    let env = SuiteEnv {
        schema: w.schema.clone(),
        index: &w.index,
        extractor: &ex,
        generator: &TemplateGenerator,
        judge: &RuleJudge,
        reflector: None,
    };
    let cfg = SuiteConfig { workers: 1, ..Default::default() };
    let mut group = c.benchmark_group("suite");
    group.sample_size(10);
    group.bench_function("run_suite", |b| b.iter(|| black_box(run_suite(&w.tasks, &w.snapshots, &env, &cfg))));
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
