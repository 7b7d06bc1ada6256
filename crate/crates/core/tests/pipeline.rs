//! End-to-end pipeline tests over the committed fixtures plus property
//! tests for the cross-module invariants.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use gctd_core::config::RunConfig;
use gctd_core::decompose::{
    decompose_observed, DecomposeConfig, ObservedEntry, ObservedSet,
};
use gctd_core::graph::{Graph, SplitTag, Task};
use gctd_core::multiview::{build_tensor, sample_negatives, PerturbSpec};
use gctd_core::pipeline::{condense_graph, evaluate_condensed, evaluate_full};
use ndarray::Array2;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn fast_config(ratio: f64) -> RunConfig {
    RunConfig {
        ratio,
        views: 1,
        drop_prob: 0.1,
        add_prob: 0.05,
        batch_size: 256,
        dec_epochs: 120,
        eval_epochs: 150,
        hidden: 32,
        runs: 2,
        seed: Some(11),
        deterministic: true,
        ..RunConfig::default()
    }
}

#[test]
fn fixtures_load_with_expected_shapes() {
    let karate = Graph::load(fixture("karate")).unwrap();
    assert_eq!(karate.num_nodes, 34);
    assert_eq!(karate.num_edges(), 78);
    assert_eq!(karate.num_classes, 2);
    assert_eq!(karate.task, Task::Transductive);

    let sbm = Graph::load(fixture("sbm80i")).unwrap();
    assert_eq!(sbm.task, Task::Inductive);
    assert_eq!(sbm.condensation_base_count(), 40);
}

#[test]
fn condense_pipeline_invariants_on_sbm60() {
    let g = Graph::load(fixture("sbm60")).unwrap();
    let cfg = fast_config(0.15);
    let out = condense_graph(&g, &cfg, 11).unwrap();
    assert_eq!(out.n_prime, 9);
    let cg = &out.condensed;
    assert_eq!(cg.num_nodes(), 9);
    assert_eq!(cg.feature_dim(), g.feature_dim());
    // symmetric, nonnegative adjacency
    for i in 0..9 {
        for j in 0..9 {
            assert!(cg.adjacency[[i, j]] >= 0.0);
            assert_eq!(cg.adjacency[[i, j]].to_bits(), cg.adjacency[[j, i]].to_bits());
        }
    }
    // provenance covers every original node exactly once
    let mut members: Vec<u32> = cg.provenance.iter().flat_map(|p| p.members.clone()).collect();
    members.sort_unstable();
    let expect: Vec<u32> = (0..g.num_nodes as u32).collect();
    assert_eq!(members, expect);
    // factors stayed nonnegative
    assert!(out.decomposition.factors.min_entry() >= 0.0);
    // loss history bounded by the epoch budget
    assert!(out.decomposition.loss_history().len() <= cfg.dec_epochs);
}

#[test]
fn condense_then_evaluate_is_deterministic() {
    let g = Graph::load(fixture("sbm60")).unwrap();
    let cfg = fast_config(0.15);
    let a = condense_graph(&g, &cfg, 42).unwrap();
    let b = condense_graph(&g, &cfg, 42).unwrap();
    assert_eq!(a.condensed, b.condensed);
    assert_eq!(a.decomposition.loss_history(), b.decomposition.loss_history());

    let ra = evaluate_condensed(&a.condensed, &g, &cfg, 42).unwrap();
    let rb = evaluate_condensed(&b.condensed, &g, &cfg, 42).unwrap();
    assert_eq!(ra.mean.to_bits(), rb.mean.to_bits());
    for (x, y) in ra.runs.iter().zip(&rb.runs) {
        assert_eq!(x.test_accuracy.to_bits(), y.test_accuracy.to_bits());
    }
}

#[test]
fn different_seeds_usually_differ() {
    let g = Graph::load(fixture("sbm60")).unwrap();
    let cfg = fast_config(0.15);
    let a = condense_graph(&g, &cfg, 1).unwrap();
    let b = condense_graph(&g, &cfg, 2).unwrap();
    assert_ne!(a.condensed.adjacency, b.condensed.adjacency);
}

#[test]
fn inductive_pipeline_condenses_train_subgraph() {
    let g = Graph::load(fixture("sbm80i")).unwrap();
    let cfg = fast_config(0.2);
    let out = condense_graph(&g, &cfg, 5).unwrap();
    // 40 train nodes at ratio 0.2 -> 8 synthetic nodes
    assert_eq!(out.base_nodes, 40);
    assert_eq!(out.n_prime, 8);
    // provenance refers to original (train) node ids
    let train: HashSet<u32> = g.nodes_in_split(SplitTag::Train).into_iter().collect();
    for p in &out.condensed.provenance {
        for m in &p.members {
            assert!(train.contains(m), "member {m} is not a train node");
        }
    }
    // every synthetic node sits in the train split
    assert!(out.condensed.splits.iter().all(|&s| s == SplitTag::Train));
    let report = evaluate_condensed(&out.condensed, &g, &cfg, 5).unwrap();
    assert!(report.mean > 50.0, "inductive condensed accuracy {}", report.mean);
}

#[test]
fn full_baseline_on_inductive_fixture_trains_on_train_subgraph() {
    let g = Graph::load(fixture("sbm80i")).unwrap();
    let cfg = fast_config(0.2);
    let report = evaluate_full(&g, &cfg, 7).unwrap();
    assert!(report.mean > 40.0, "inductive baseline too weak: {}", report.mean);
}

#[test]
fn condensed_graph_trains_close_to_full_baseline_on_sbm60() {
    let g = Graph::load(fixture("sbm60")).unwrap();
    let mut cfg = fast_config(0.15);
    cfg.dec_epochs = 300;
    cfg.eval_epochs = 300;
    cfg.runs = 3;
    let full = evaluate_full(&g, &cfg, 11).unwrap();
    let out = condense_graph(&g, &cfg, 11).unwrap();
    let cond = evaluate_condensed(&out.condensed, &g, &cfg, 11).unwrap();
    assert!(full.mean > 85.0, "full baseline too weak: {}", full.mean);
    assert!(
        cond.mean > full.mean - 20.0,
        "condensed {} collapsed relative to full {}",
        cond.mean,
        full.mean
    );
}

/// Per-epoch time should scale roughly linearly in the number of observed
/// entries at fixed rank and view count. The bound is deliberately loose:
/// wall-clock noise on shared machines is the norm.
#[test]
fn epoch_time_scales_about_linearly_in_entries() {
    let n = 400;
    let rank = 16;
    let make_obs = |entries: usize| -> ObservedSet {
        let mut rng = gctd_core::seed::rng(9);
        let mut out = Vec::with_capacity(entries);
        for t in 0..entries {
            let i = rand::Rng::random_range(&mut rng, 0..n as u32);
            let j = rand::Rng::random_range(&mut rng, 0..n as u32);
            out.push(ObservedEntry {
                i,
                j,
                k: 0,
                value: (t % 2) as f64,
            });
        }
        ObservedSet::from_entries(n, 1, out)
    };
    let time_epochs = |obs: &ObservedSet| -> f64 {
        let cfg = DecomposeConfig {
            rank,
            batch_size: 4096,
            max_epochs: 3,
            tolerance: 0.0,
            seed: 1,
            ..DecomposeConfig::new(rank)
        };
        // warm-up run, then take the best of three timings
        decompose_observed(obs, &cfg, |_, _, _| {}).unwrap();
        (0..3)
            .map(|_| {
                let t0 = Instant::now();
                decompose_observed(obs, &cfg, |_, _, _| {}).unwrap();
                t0.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let small = make_obs(40_000);
    let large = make_obs(80_000);
    let t_small = time_epochs(&small);
    let t_large = time_epochs(&large);
    assert!(
        t_large <= 4.0 * t_small,
        "doubling entries grew epoch time {t_small:.4}s -> {t_large:.4}s (more than 4x)"
    );
}

fn arbitrary_graph() -> impl Strategy<Value = Graph> {
    (2usize..24, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = gctd_core::seed::rng(seed);
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if rand::Rng::random::<f64>(&mut rng) < 0.3 {
                    edges.push((u, v));
                }
            }
        }
        let num_classes = 1 + (n / 8).min(2);
        let labels: Vec<u16> = (0..n).map(|i| (i % num_classes) as u16).collect();
        let splits: Vec<SplitTag> = (0..n)
            .map(|i| {
                if i < num_classes {
                    SplitTag::Train
                } else {
                    match i % 3 {
                        0 => SplitTag::Val,
                        1 => SplitTag::Test,
                        _ => SplitTag::Unlabeled,
                    }
                }
            })
            .collect();
        Graph {
            num_nodes: n,
            num_classes,
            edges,
            self_loops: Vec::new(),
            features: Array2::zeros((n, 3)),
            labels,
            splits,
            task: Task::Transductive,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dataset_roundtrip_preserves_graph(g in arbitrary_graph()) {
        let dir = tempfile::tempdir().unwrap();
        g.save(dir.path()).unwrap();
        let back = Graph::load(dir.path()).unwrap();
        prop_assert_eq!(g.num_nodes, back.num_nodes);
        prop_assert_eq!(&g.edges, &back.edges);
        prop_assert_eq!(&g.labels, &back.labels);
        prop_assert_eq!(&g.splits, &back.splits);
        prop_assert_eq!(g.stats(), back.stats());
    }

    #[test]
    fn tensor_slices_stay_symmetric_and_balanced(
        g in arbitrary_graph(),
        views in 0usize..3,
        seed in any::<u64>(),
    ) {
        let spec = PerturbSpec { drop_prob: 0.2, add_prob: 0.1, seed };
        let mut t = build_tensor(&g, views, &spec);
        if sample_negatives(&mut t, seed).is_err() {
            // graph too dense to draw negatives; nothing to check
            return Ok(());
        }
        prop_assert_eq!(t.num_views(), views + 1);
        // slice 0 must equal the original adjacency exactly
        let mut expect: Vec<(u32, u32)> = g
            .edges
            .iter()
            .flat_map(|&(u, v)| [(u, v), (v, u)])
            .collect();
        expect.sort_unstable();
        prop_assert_eq!(&t.slices[0].positives, &expect);
        for slice in &t.slices {
            prop_assert_eq!(slice.negatives.len(), slice.positives.len());
            for list in [&slice.positives, &slice.negatives] {
                let set: HashSet<(u32, u32)> = list.iter().copied().collect();
                for &(i, j) in list.iter() {
                    prop_assert!(set.contains(&(j, i)));
                    prop_assert!(i != j || list == &slice.positives);
                }
            }
        }
    }

    #[test]
    fn condensed_size_exact_regardless_of_cluster_collapse(
        seed in any::<u64>(),
        rank in 2usize..6,
    ) {
        // factors whose rows collapse into few distinct values force empty
        // clusters; the condensed graph must still have exactly `rank` nodes
        let n = 12;
        let mut rng = gctd_core::seed::rng(seed);
        let mut u = Array2::<f64>::zeros((n, rank));
        for i in 0..n {
            let bucket = rand::Rng::random_range(&mut rng, 0..2usize);
            u[[i, bucket]] = 1.0;
        }
        let core = ndarray::Array3::<f64>::from_elem((2, rank, rank), 0.5);
        let factors = gctd_core::decompose::Factors { u, core };
        let g = Graph {
            num_nodes: n,
            num_classes: 2,
            edges: vec![(0, 1)],
            self_loops: vec![],
            features: Array2::zeros((n, 2)),
            labels: (0..n).map(|i| (i % 2) as u16).collect(),
            splits: vec![SplitTag::Train; n],
            task: Task::Transductive,
        };
        let opts = gctd_core::condense::CondenseOptions {
            seed,
            ..Default::default()
        };
        let cg = gctd_core::condense::condense(&g, &factors, &opts).unwrap();
        prop_assert_eq!(cg.num_nodes(), rank);
        prop_assert_eq!(cg.labels.len(), rank);
        prop_assert_eq!(cg.splits.len(), rank);
        prop_assert_eq!(cg.provenance.len(), rank);
    }
}
