//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its elapsed time (run with `--nocapture` to see them).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use arise_core::build::build_graph;
use arise_core::bundle::{
    build_context_bundle, rank_suspect_regions, score_span, BundleStrategy, BundleWeights,
};
use arise_core::graph::{BuildMode, EdgeKind, NodeKind, RepoGraph};
use arise_core::metrics;
use arise_core::persist;
use arise_core::session::RetrievalSession;
use arise_core::slicer::{get_dataflow_slice, DataflowSlice, SliceDirection};
use arise_testkit::gen::{GeneratedFunction, VARIABLES};
use arise_testkit::oracle::{oracle_reaching_defs, oracle_slice, OracleDirection, OracleEdge};
use arise_testkit::randgraph::{oracle_bfs, random_call_graph};

fn f1_root() -> PathBuf {
    arise_testkit::f1_root()
}

fn finish(name: &str, started: Instant, budget_ms: u128) {
    let elapsed = started.elapsed().as_millis();
    assert!(
        elapsed <= budget_ms,
        "criterion {name} exceeded its time budget: {elapsed} ms > {budget_ms} ms"
    );
    println!("acceptance {name}: PASS ({elapsed} ms)");
}

const RUN: &str = "Function:pkg.main.run:3";
const INC: &str = "Function:pkg.util.inc:1";

#[test]
fn criterion_1_fixture_census() {
    let started = Instant::now();
    let graph = build_graph(f1_root(), BuildMode::Full).unwrap().graph;
    assert_eq!(graph.count_kind(NodeKind::Directory), 2);
    assert_eq!(graph.count_kind(NodeKind::Module), 3);
    assert_eq!(graph.count_kind(NodeKind::Function), 2);
    assert_eq!(graph.count_kind(NodeKind::Statement), 7);

    assert!(graph.has_edge(RUN, INC, EdgeKind::Calls, ""));
    assert!(graph.has_edge(INC, RUN, EdgeKind::CalledBy, ""));
    assert_eq!(
        graph.edges().filter(|e| e.kind == EdgeKind::Calls).count(),
        1
    );
    assert!(graph.has_edge(
        "Module:pkg.main:1",
        "Module:pkg.util:1",
        EdgeKind::Imports,
        ""
    ));
    assert!(graph.has_edge(
        "Module:pkg.util:1",
        "Module:pkg.main:1",
        EdgeKind::ImportedBy,
        ""
    ));
    assert_eq!(
        graph
            .edges()
            .filter(|e| e.kind == EdgeKind::Imports)
            .count(),
        1
    );

    let sig = "Statement:pkg.main.run.s0:3";
    let s1 = "Statement:pkg.main.run.s1:4";
    let s2 = "Statement:pkg.main.run.s2:5";
    let s3 = "Statement:pkg.main.run.s3:6";
    for (src, dst, variable) in [(sig, s1, "x"), (s1, s2, "y"), (s2, s3, "y")] {
        assert!(graph.has_edge(src, dst, EdgeKind::DataflowDefUse, variable));
        assert!(graph.has_edge(dst, src, EdgeKind::DataflowUseDef, variable));
    }
    finish("1 fixture census", started, 1_000);
}

fn statement_position(qualified_name: &str) -> usize {
    qualified_name
        .rsplit('.')
        .next()
        .and_then(|s| s.strip_prefix('s'))
        .and_then(|s| s.parse().ok())
        .expect("statement ordinal")
}

fn production_edges(graph: &RepoGraph) -> BTreeSet<OracleEdge> {
    graph
        .edges()
        .filter(|e| e.kind == EdgeKind::DataflowDefUse)
        .map(|e| OracleEdge {
            def_pos: statement_position(&graph.node(&e.src).unwrap().qualified_name),
            use_pos: statement_position(&graph.node(&e.dst).unwrap().qualified_name),
            variable: e.variable.chars().next().unwrap(),
        })
        .collect()
}

fn slice_positions(slice: &DataflowSlice) -> BTreeSet<usize> {
    slice
        .steps
        .iter()
        .map(|step| statement_position(step.statement.split(':').nth(1).unwrap()))
        .collect()
}

#[test]
fn criterion_2_oracle_equivalence_over_1000_functions() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.py");
    let directions = [
        (SliceDirection::Backward, OracleDirection::Backward),
        (SliceDirection::Forward, OracleDirection::Forward),
        (SliceDirection::Both, OracleDirection::Both),
    ];
    for seed in 0..1000u64 {
        let function = GeneratedFunction::generate(seed);
        std::fs::write(&file, &function.source).unwrap();
        let graph = build_graph(dir.path(), BuildMode::Full).unwrap().graph;
        let expected_edges = oracle_reaching_defs(&function);
        assert_eq!(
            production_edges(&graph),
            expected_edges,
            "edges diverge at seed {seed}\n{}",
            function.source
        );

        let session = RetrievalSession::open(Arc::new(graph), dir.path());
        for position in 0..=function.body_len() {
            for variable in VARIABLES {
                for (slice_direction, oracle_direction) in directions {
                    let slice = get_dataflow_slice(
                        &session,
                        "m.py",
                        function.line_of(position),
                        &variable.to_string(),
                        slice_direction,
                        50,
                    )
                    .unwrap();
                    let expected = oracle_slice(
                        &function,
                        &expected_edges,
                        position,
                        variable,
                        oracle_direction,
                    );
                    if function.references_at(position).contains(&variable) {
                        assert_eq!(
                            slice_positions(&slice),
                            expected,
                            "slice diverges at seed {seed} position {position} variable {variable} {slice_direction:?}"
                        );
                    } else {
                        assert!(slice.steps.is_empty() && !slice.note.is_empty());
                        assert!(expected.is_empty());
                    }
                }
            }
        }
    }
    finish("2 oracle equivalence (1000 seeds)", started, 30_000);
}

#[test]
fn criterion_3_coarse_mode_contract() {
    let started = Instant::now();
    let graph = build_graph(f1_root(), BuildMode::Coarse).unwrap().graph;
    assert_eq!(graph.count_kind(NodeKind::Statement), 0);
    assert_eq!(graph.edges().filter(|e| e.kind.is_dataflow()).count(), 0);
    let session = RetrievalSession::open(Arc::new(graph), f1_root());
    for (file, line, variable) in [
        ("pkg/main.py", 4, "y"),
        ("pkg/main.py", 6, "y"),
        ("pkg/util.py", 2, "b"),
        ("pkg/main.py", 1, "inc"),
    ] {
        for direction in [
            SliceDirection::Backward,
            SliceDirection::Forward,
            SliceDirection::Both,
        ] {
            let slice = get_dataflow_slice(&session, file, line, variable, direction, 50).unwrap();
            assert!(slice.steps.is_empty());
            assert!(!slice.note.is_empty());
        }
    }
    finish("3 coarse-mode contract", started, 1_000);
}

#[test]
fn criterion_4_scoring_and_packing() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5C04E);
    for _ in 0..10_000 {
        let weights = BundleWeights {
            alpha: rng.gen_range(0.0..3.0),
            beta: rng.gen_range(0.0..3.0),
            gamma: rng.gen_range(0.0..3.0),
        };
        let rel = rng.gen_range(0.0..=1.0);
        let prox = rng.gen_range(0.0..=1.0);
        let in_slice = rng.gen_bool(0.5);
        let expected =
            weights.alpha * rel + weights.beta * prox + weights.gamma * f64::from(in_slice as u8);
        assert!((score_span(rel, prox, in_slice, &weights) - expected).abs() < 1e-9);
    }

    let graph = Arc::new(build_graph(f1_root(), BuildMode::Full).unwrap().graph);
    let session = RetrievalSession::open(graph, f1_root());
    let slice = get_dataflow_slice(
        &session,
        "pkg/main.py",
        6,
        "y",
        SliceDirection::Backward,
        50,
    )
    .unwrap();
    for budget in [0u64, 1, 5, 10, 20, 50, 200, 8_000] {
        let bundle = build_context_bundle(
            &session,
            &[RUN.to_string()],
            std::slice::from_ref(&slice),
            BundleStrategy::Hybrid,
            "inc wrong value",
            budget,
        )
        .unwrap();
        assert!(bundle.total_tokens <= budget);
        let active = BundleWeights::for_strategy(BundleStrategy::Hybrid);
        for span in &bundle.spans {
            assert_eq!(span.score, score_span(span.rel, span.prox, span.in_slice, &active));
        }
        for pair in bundle.spans.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
        assert_eq!(
            bundle.total_tokens,
            bundle.spans.iter().map(|s| s.token_cost).sum::<u64>()
        );
    }

    let strategies_equal = |issue: &str| {
        let hybrid = build_context_bundle(
            &session,
            &[RUN.to_string(), INC.to_string()],
            &[],
            BundleStrategy::Hybrid,
            issue,
            8_000,
        )
        .unwrap();
        let structural = build_context_bundle(
            &session,
            &[RUN.to_string(), INC.to_string()],
            &[],
            BundleStrategy::StructuralOnly,
            issue,
            8_000,
        )
        .unwrap();
        assert_eq!(hybrid.spans.len(), structural.spans.len());
        for (a, b) in hybrid.spans.iter().zip(&structural.spans) {
            assert_eq!(
                (&a.entity, a.start_line, a.end_line),
                (&b.entity, b.start_line, b.end_line)
            );
            assert_eq!(a.score, b.score);
        }
    };
    strategies_equal("");
    strategies_equal("inc util value");
    finish("4 scoring and packing", started, 5_000);
}

#[test]
fn criterion_5_metric_unit_suite() {
    let started = Instant::now();
    let gold: BTreeSet<String> = ["b.py".to_string()].into();
    let predicted = vec!["a.py".to_string(), "b.py".to_string()];
    assert_eq!(metrics::recall_at_k(&predicted, &gold, 1), 0.0);
    assert_eq!(metrics::recall_at_k(&predicted, &gold, 3), 1.0);
    assert_eq!(metrics::mrr(&predicted, &gold), 0.5);
    assert_eq!(metrics::mrr(&predicted[1..], &gold), 1.0);
    assert_eq!(metrics::mrr(&predicted[..1], &gold), 0.0);

    let functions = vec!["f".to_string(), "g".to_string(), "h".to_string()];
    assert_eq!(
        metrics::f1_at_k(&functions, &["f".to_string()].into(), 3),
        0.5
    );

    let lines = |values: &[u32]| -> BTreeSet<(String, u32)> {
        values.iter().map(|v| ("m.py".to_string(), *v)).collect()
    };
    assert_eq!(
        metrics::line_iou(&lines(&[3, 4, 5]), &lines(&[4, 5, 6])),
        0.5
    );
    assert_eq!(
        metrics::coverage_at_budget(&[("m.py".to_string(), 1, 3)], &lines(&[1, 2, 3, 9])),
        0.75
    );
    assert_eq!(
        metrics::spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]),
        Some(1.0)
    );
    assert_eq!(
        metrics::spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]),
        Some(-1.0)
    );
    assert_eq!(
        metrics::spearman_rho(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
        None
    );

    // R@k monotone in k, and F1@k equal to an independent 2PR/(P+R),
    // over random ranked lists.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC5);
    for _ in 0..1000 {
        let universe: Vec<u32> = (0..rng.gen_range(1..40)).collect();
        let predicted: Vec<u32> = (0..rng.gen_range(0..30))
            .map(|_| universe[rng.gen_range(0..universe.len())])
            .collect();
        let gold: BTreeSet<u32> = (0..rng.gen_range(1..10))
            .map(|_| universe[rng.gen_range(0..universe.len())])
            .collect();
        let mut previous = 0.0;
        for k in 1..=12 {
            let value = metrics::recall_at_k(&predicted, &gold, k);
            assert!(value >= previous);
            previous = value;

            let top: BTreeSet<u32> = predicted.iter().take(k).copied().collect();
            let hits = top.intersection(&gold).count() as f64;
            let expected = if hits == 0.0 {
                0.0
            } else {
                let p = hits / k as f64;
                let r = hits / gold.len() as f64;
                2.0 * p * r / (p + r)
            };
            assert!((metrics::f1_at_k(&predicted, &gold, k) - expected).abs() < 1e-12);
        }
    }
    finish("5 metric unit suite", started, 5_000);
}

#[test]
fn criterion_6_persistence_determinism() {
    let started = Instant::now();
    let first = build_graph(f1_root(), BuildMode::Full).unwrap().graph;
    let second = build_graph(f1_root(), BuildMode::Full).unwrap().graph;
    let bytes_a = persist::save_to_bytes(&first);
    let bytes_b = persist::save_to_bytes(&second);
    assert_eq!(
        bytes_a, bytes_b,
        "independent builds must serialize identically"
    );
    let reloaded = persist::load_from_reader(bytes_a.as_slice()).unwrap();
    assert_eq!(first, reloaded);
    finish("6 persistence determinism", started, 1_000);
}

#[test]
fn criterion_7_traversal_against_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7_BF5);
    for seed in 0..100u64 {
        let random = random_call_graph(seed);
        let node_count = random.node_ids.len();
        let reference = random_call_graph(seed);
        let session = RetrievalSession::open(Arc::new(random.graph), "/nonexistent");
        for kinds in [
            vec![EdgeKind::Calls],
            vec![EdgeKind::CalledBy],
            vec![EdgeKind::Calls, EdgeKind::CalledBy],
        ] {
            let adjacency = reference.adjacency(&kinds);
            let seed_index = rng.gen_range(0..node_count);
            let max_hops = rng.gen_range(1..=5u32);
            let budget = rng.gen_range(1..=node_count);

            let unbounded = session
                .traverse_relations(
                    &reference.node_ids[seed_index],
                    &kinds,
                    max_hops,
                    node_count + 1,
                )
                .unwrap();
            let expected = oracle_bfs(&adjacency, seed_index, max_hops);
            let actual: HashMap<usize, u32> = unbounded
                .nodes
                .iter()
                .map(|n| (reference.index_of(&n.id), n.hop))
                .collect();
            assert_eq!(actual, expected, "seed {seed} kinds {kinds:?}");

            let bounded = session
                .traverse_relations(&reference.node_ids[seed_index], &kinds, max_hops, budget)
                .unwrap();
            assert!(bounded.nodes.len() <= budget);
            for node in &bounded.nodes {
                assert!(node.hop <= max_hops);
                assert_eq!(expected[&reference.index_of(&node.id)], node.hop);
            }
        }
    }
    finish("7 traversal vs oracle BFS", started, 10_000);
}

#[test]
fn criterion_8_service_fidelity() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let graph_path = dir.path().join("f1.jsonl");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_arise"))
        .arg("build")
        .arg(f1_root())
        .arg("--out")
        .arg(&graph_path)
        .status()
        .unwrap();
    assert!(status.success());

    let trace = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/f1_trace.jsonl");
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_arise"))
        .arg("replay")
        .arg(&trace)
        .arg(&graph_path)
        .arg("--repo")
        .arg(f1_root())
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "golden replay failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&output.stdout).lines().count(), 10);

    // A malformed request keeps the server alive and answers parse_error.
    use std::io::Write;
    let mut child = std::process::Command::new(env!("CARGO_BIN_EXE_arise"))
        .arg("serve")
        .arg(&graph_path)
        .arg("--repo")
        .arg(f1_root())
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(
            b"%%%garbage%%%\n{\"id\":\"after\",\"tool\":\"search_entities\",\"arguments\":{\"query\":\"inc\",\"k\":1}}\n",
        )
        .unwrap();
    let served = child.wait_with_output().unwrap();
    let lines: Vec<Value> = String::from_utf8(served.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["error"]["code"], "parse_error");
    assert_eq!(lines[1]["ok"], true);
    finish("8 service fidelity", started, 5_000);
}

#[test]
fn criterion_9_registry_monotonicity() {
    let started = Instant::now();
    let graph = Arc::new(build_graph(f1_root(), BuildMode::Full).unwrap().graph);
    let session = RetrievalSession::open(graph, f1_root());
    let issue = "inc returns wrong value";

    let score_of = |ranked: &[arise_core::bundle::SuspectRegion]| {
        ranked
            .iter()
            .find(|r| r.entity == RUN)
            .expect("run is a candidate")
            .score
    };
    let before = score_of(&rank_suspect_regions(&session, issue, None));
    get_dataflow_slice(
        &session,
        "pkg/main.py",
        6,
        "y",
        SliceDirection::Backward,
        50,
    )
    .unwrap();
    let after = score_of(&rank_suspect_regions(&session, issue, None));
    assert_eq!(
        after,
        before + 1.5,
        "slice membership must add exactly gamma"
    );
    finish("9 registry monotonicity", started, 1_000);
}

#[test]
fn metrics_round_trip_through_eval_report() {
    // Companion check: BTreeMap-driven evaluate_set is deterministic.
    let graph = Arc::new(build_graph(f1_root(), BuildMode::Full).unwrap().graph);
    let session = RetrievalSession::open(graph, f1_root());
    let diff =
        "--- a/pkg/util.py\n+++ b/pkg/util.py\n@@ -2,1 +2,1 @@\n-    b = a + 1\n+    b = a + 2\n";
    let gold = metrics::parse_gold_patch(diff, session.graph()).unwrap();
    let golds = BTreeMap::from([("demo".to_string(), gold)]);
    let predictions = BTreeMap::from([(
        "demo".to_string(),
        metrics::RankedPrediction {
            instance_id: "demo".to_string(),
            predictions: vec![metrics::PredictionRecord {
                file: "pkg/util.py".to_string(),
                function: "inc".to_string(),
                start_line: 1,
                end_line: 3,
                score: 1.0,
            }],
        },
    )]);
    let report_a = metrics::evaluate_set(&session, &golds, &predictions, 8_000, None);
    let report_b = metrics::evaluate_set(&session, &golds, &predictions, 8_000, None);
    assert_eq!(
        serde_json::to_string(&report_a).unwrap(),
        serde_json::to_string(&report_b).unwrap()
    );
    assert_eq!(report_a.aggregate.function_r1, 1.0);
}
