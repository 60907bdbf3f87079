mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::gen::random_program;
use structverify::bench::{parse_sweep, uncertainty_eval, verifier_quality, Labeled};
use structverify::controller::{
    synthesize, ActionKind, FaultClass, FaultInjectingGenerator, FaultPlan, SynthConfig, SynthContext,
    TemplateGenerator,
};
use structverify::depgraph::{graph_metrics, DepGraph, Edge, Node, PatternExtractor};
use structverify::fixtures::{odb_index, odb_schema};
use structverify::qas::{infer_types, jaccard, normalize_source, parse};
use structverify::uncertainty::{
    code_uncertainty, combine, coverage_uncertainty, trajectory_terms, LayerDistanceMode, UncertaintyConfig,
};
use structverify::verifier::RuleJudge;

const TYPES: [&str; 7] = ["Design", "Block", "Net", "Inst", "ITerm", "BTerm", "Master"];

fn graph() -> impl Strategy<Value = DepGraph> {
    (prop::collection::vec(0..TYPES.len(), 0..6), prop::collection::vec((0..6usize, 0..6usize, any::<bool>()), 0..8))
        .prop_map(|(types, edges)| {
            let nodes: Vec<Node> =
                types.iter().enumerate().map(|(i, &t)| Node::object(format!("n{i}"), TYPES[t])).collect();
            let n = nodes.len();
            let edges = edges
                .into_iter()
                .filter(|&(a, b, _)| a < b && b < n)
                .map(|(a, b, acq)| {
                    if acq {
                        Edge::acquisition(format!("n{a}"), format!("n{b}"), "get")
                    } else {
                        Edge::dependency(format!("n{a}"), format!("n{b}"))
                    }
                })
                .collect();
            DepGraph { nodes, edges }
        })
}

fn config() -> impl Strategy<Value = UncertaintyConfig> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, any::<bool>(), any::<bool>()).prop_map(|(a, b, l, remap, zero)| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        UncertaintyConfig {
            alpha: [lo, hi - lo, 1.0 - hi],
            lambda_i: l,
            lambda_e: l / 2.0,
            lambda_r: 1.0 - l,
            layer_distance_mode: if remap { LayerDistanceMode::Remapped } else { LayerDistanceMode::Literal },
            zero_conv_on_first_pass: zero,
            ..Default::default()
        }
    })
}

proptest! {
    #[test]
    fn graph_metrics_are_symmetric_and_bounded(a in graph(), b in graph()) {
        let ab = graph_metrics(&a, &b);
        let ba = graph_metrics(&b, &a);
        prop_assert_eq!(ab.node_p, ba.node_r);
        prop_assert_eq!(ab.edge_p, ba.edge_r);
        prop_assert_eq!(ab.node_f1, ba.node_f1);
        prop_assert_eq!(ab.exact_match, ba.exact_match);
        for v in [ab.node_p, ab.node_r, ab.node_f1, ab.edge_p, ab.edge_r, ab.edge_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(ab.exact_match, ab.node_f1 == 1.0 && ab.edge_f1 == 1.0);
        prop_assert!(graph_metrics(&a, &a).exact_match);
    }

    #[test]
    fn passing_trajectories_score_within_unit_range(
        earlier in prop::collection::vec(1u8..=4, 0..6),
        repair_mask in prop::collection::vec(any::<bool>(), 6),
        cfg in config(),
        seed in any::<u64>(),
    ) {
        let schema = odb_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = earlier.clone();
        layers.push(0);
        let sources: Vec<String> = layers.iter().map(|_| random_program(&schema, &mut rng)).collect();
        let repairs: BTreeSet<usize> = (1..layers.len()).filter(|&t| repair_mask[t - 1]).collect();
        let t = trajectory_terms(&layers, &sources, &repairs, &cfg);
        for v in [t.tau_conv, t.tau_stag, t.tau_eff, t.u_traj] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{:?}", t);
        }
        let ts = infer_types(&parse(sources.last().unwrap()).unwrap(), &schema);
        let c = code_uncertainty(&ts, &schema, &cfg);
        let v = coverage_uncertainty(&ts, &schema);
        prop_assert!((0.0..=1.0).contains(&c.c_code) && (c.u_code - (1.0 - c.c_code)).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&v.c_cov) && v.covered <= v.total);
        let u = cfg.alpha[0] * c.u_code + cfg.alpha[1] * t.u_traj + cfg.alpha[2] * v.u_cov;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&u));
    }

    #[test]
    fn distance_modes_agree_on_binary_trajectories(l0 in 0u8..=4, tail in prop::collection::vec(any::<bool>(), 0..5)) {
        let mut layers = vec![l0];
        layers.extend(tail.iter().map(|&keep| if keep { l0 } else { 0 }));
        let sources: Vec<String> = layers.iter().map(|l| format!("print({l})\n")).collect();
        let repairs: BTreeSet<usize> = (1..layers.len()).collect();
        let lit = UncertaintyConfig::default();
        let rem = UncertaintyConfig { layer_distance_mode: LayerDistanceMode::Remapped, ..lit };
        prop_assert_eq!(trajectory_terms(&layers, &sources, &repairs, &lit).tau_conv, trajectory_terms(&layers, &sources, &repairs, &rem).tau_conv);
    }

    #[test]
    fn combined_score_is_monotone_and_permutable(
        c in prop::array::uniform3(0.0..=1.0f64),
        bump in 0.0..=1.0f64,
        which in 0usize..3,
        cfg in config(),
    ) {
        let (u, _) = combine(c[0], c[1], c[2], &cfg);
        let mut d = c;
        d[which] = (d[which] + bump).min(1.0);
        let (v, _) = combine(d[0], d[1], d[2], &cfg);
        prop_assert!(v >= u);
        let swapped = UncertaintyConfig { alpha: [cfg.alpha[0], cfg.alpha[2], cfg.alpha[1]], ..cfg };
        let (w, _) = combine(c[0], c[2], c[1], &swapped);
        prop_assert!((w - u).abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&u));
    }

    #[test]
    fn stagnation_is_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
        let schema = odb_schema();
        let a = normalize_source(&random_program(&schema, &mut ChaCha8Rng::seed_from_u64(s1)));
        let b = normalize_source(&random_program(&schema, &mut ChaCha8Rng::seed_from_u64(s2)));
        prop_assert_eq!(jaccard(&a, &b), jaccard(&b, &a));
        prop_assert!((0.0..=1.0).contains(&jaccard(&a, &b)));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
    }

    #[test]
    fn printed_programs_reparse_to_the_same_shape(seed in any::<u64>()) {
        let schema = odb_schema();
        let src = random_program(&schema, &mut ChaCha8Rng::seed_from_u64(seed));
        let s = parse(&src).unwrap();
        let again = parse(&s.serialize()).unwrap();
        prop_assert!(s.same_shape(&again), "{}\n---\n{}", src, s.serialize());
    }

    #[test]
    fn theta_one_keeps_every_pass(recs in prop::collection::vec((any::<bool>(), any::<bool>(), 0.0..=1.0f64), 0..40)) {
        let scored: Vec<(Labeled, f64)> = recs.iter().map(|&(p, e, u)| (Labeled { pass: p, exec_ok: e }, u)).collect();
        let labeled: Vec<Labeled> = scored.iter().map(|(l, _)| *l).collect();
        let q = verifier_quality(&labeled);
        let row = uncertainty_eval(&scored, &[1.0])[0];
        prop_assert_eq!(row.precision, q.precision);
        prop_assert_eq!(row.false_positive_rate, q.false_positive_rate);
        prop_assert_eq!(row.recall, q.recall);
    }

    #[test]
    fn sweeps_are_increasing(start in 0.0..0.5f64, step in 0.01..0.3f64) {
        let spec = format!("{start}:1:{step}");
        let v = parse_sweep(&spec).unwrap();
        prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*v.last().unwrap() <= 1.0 + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectories_respect_budget_and_bookkeeping(
        class in prop::sample::select(FaultClass::ALL.to_vec()),
        h in prop::option::of(0u32..7),
        budget in 1usize..6,
        prompt in prop::sample::select(vec![
            "set the weight of net clk to 2",
            "print the weight of net reset",
            "print the master of instance _1000_",
            "count the nets",
        ]),
    ) {
        let s = odb_schema();
        let idx = odb_index();
        let ex = PatternExtractor::default();
        let g = FaultInjectingGenerator::new(TemplateGenerator).with_default(FaultPlan::new(class, h));
        let ctx = SynthContext { schema: &s, index: &idx, extractor: &ex, generator: &g, judge: &RuleJudge, corrections: &[] };
        let cfg = SynthConfig { budget, ..Default::default() };
        let r = synthesize(prompt, &ctx, &cfg).unwrap();
        let t = &r.trajectory;
        prop_assert_eq!(t.len(), t.actions.len() + 1);
        prop_assert_eq!(t.verdicts.len(), t.len());
        prop_assert_eq!(t.reports.len(), t.len());
        prop_assert_eq!(t.evidence_versions.len(), t.len());
        prop_assert!(t.len() <= budget + 1);
        prop_assert!(t.evidence_versions.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(t.window_start <= t.len());
        prop_assert!(t.actions.iter().all(|a| a.kind() != ActionKind::Accept));
        prop_assert_eq!(r.final_source.as_str(), t.candidates.last().unwrap().as_str());
        if r.accepted {
            prop_assert_eq!(*t.verdicts.last().unwrap(), 0);
        } else {
            prop_assert_eq!(t.actions.len(), budget);
        }
        for e in &t.escalations {
            prop_assert!(e.step < t.actions.len());
            prop_assert_eq!(t.actions[e.step].kind(), e.to);
        }
    }
}
