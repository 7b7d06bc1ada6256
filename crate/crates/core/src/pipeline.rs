//! End-to-end orchestration: dataset -> multi-view tensor -> decomposition
//! -> condensed graph, and the evaluation entry points used by the CLI and
//! the acceptance suite.

use crate::condense::{condense, CondenseOptions, CondensedGraph};
use crate::config::RunConfig;
use crate::decompose::{decompose_observed, DecomposeConfig, Decomposition, Factors, ObservedSet};
use crate::error::{Error, Result};
use crate::eval::{train_eval, EvalConfig, EvalData, EvalReport, TrainData};
use crate::graph::{condensed_size, Graph, Task};
use crate::multiview::{build_tensor, sample_negatives, PerturbSpec};

/// Everything produced by a condensation run.
pub struct CondenseOutput {
    pub condensed: CondensedGraph,
    pub decomposition: Decomposition,
    pub n_prime: usize,
    /// Node count the ratio was applied to (train split for inductive).
    pub base_nodes: usize,
}

/// Data-dependent warnings for a condensation config. The add probability
/// applies to every absent node pair, so on sparse graphs even small values
/// swamp the views with random edges and shrink the normalized loss scale
/// below the convergence tolerance.
pub fn condense_warnings(g: &Graph, cfg: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.views == 0 || cfg.add_prob == 0.0 {
        return out;
    }
    let base_nodes = g.condensation_base_count() as f64;
    let m = g.num_edges() as f64;
    let kept = m * (1.0 - cfg.drop_prob);
    let pool = base_nodes * (base_nodes - 1.0) / 2.0 - kept;
    let expected_add = cfg.add_prob * pool.max(0.0);
    if expected_add > 2.0 * m && m > 0.0 {
        out.push(format!(
            "add_prob={} draws from all {:.0} absent pairs and will add ~{:.0} random edges \
             per view against {:.0} original ones; size-preserving augmentation here needs \
             add_prob ≈ {:.1e}",
            cfg.add_prob,
            pool,
            expected_add,
            m,
            (m * cfg.drop_prob / pool.max(1.0)),
        ));
    }
    out
}

/// Run the condensation pipeline with an observer called after every
/// decomposition epoch (post projection), optionally reusing a tensor
/// cache file keyed by (graph hash, views, probabilities, seed).
pub fn condense_graph_cached(
    g: &Graph,
    cfg: &RunConfig,
    seed: u64,
    tensor_cache: Option<&std::path::Path>,
    observer: impl FnMut(usize, &Factors, f64),
) -> Result<CondenseOutput> {
    // inductive condensation sees only the train-induced subgraph
    let (base, id_map): (Graph, Option<Vec<u32>>) = match g.task {
        Task::Transductive => (g.clone(), None),
        Task::Inductive => {
            let (sub, ids) = g.train_subgraph();
            (sub, Some(ids))
        }
    };
    let n_prime =
        condensed_size(base.num_nodes, cfg.ratio, g.num_classes).map_err(|e| e.in_module("graph-model"))?;

    let spec = PerturbSpec {
        drop_prob: cfg.drop_prob,
        add_prob: cfg.add_prob,
        seed,
    };
    let key = crate::multiview::cache_key(
        base.content_hash(),
        cfg.views,
        cfg.drop_prob,
        cfg.add_prob,
        seed,
    );
    let cached = match tensor_cache {
        Some(path) if path.is_file() => {
            let (stored_key, tensor) =
                crate::multiview::read_cache(path).map_err(|e| e.in_module("multiview"))?;
            if stored_key == key && tensor.num_nodes == base.num_nodes {
                Some(tensor)
            } else {
                None // stale cache: different graph or parameters
            }
        }
        _ => None,
    };
    let tensor = match cached {
        Some(tensor) => tensor,
        None => {
            let mut tensor = build_tensor(&base, cfg.views, &spec);
            sample_negatives(&mut tensor, seed).map_err(|e| e.in_module("multiview"))?;
            if let Some(path) = tensor_cache {
                crate::multiview::write_cache(path, &tensor, key)
                    .map_err(|e| e.in_module("multiview"))?;
            }
            tensor
        }
    };

    let dec_cfg = DecomposeConfig {
        rank: n_prime,
        learning_rate: cfg.dec_learning_rate,
        weight_decay: cfg.dec_weight_decay,
        batch_size: cfg.batch_size,
        max_epochs: cfg.dec_epochs,
        tolerance: cfg.tolerance,
        seed,
    };
    let obs = ObservedSet::from_tensor(&tensor);
    let decomposition =
        decompose_observed(&obs, &dec_cfg, observer).map_err(|e| e.in_module("decomposer"))?;

    let opts = CondenseOptions {
        strategy: cfg.assign.clone(),
        kmeans_iters: cfg.kmeans_iters,
        seed,
        edge_threshold: cfg.edge_threshold,
    };
    let mut condensed =
        condense(&base, &decomposition.factors, &opts).map_err(|e| e.in_module("condenser"))?;
    if let Some(ids) = id_map {
        for prov in condensed.provenance.iter_mut() {
            for m in prov.members.iter_mut() {
                *m = ids[*m as usize];
            }
        }
    }
    Ok(CondenseOutput {
        condensed,
        decomposition,
        n_prime,
        base_nodes: base.num_nodes,
    })
}

pub fn condense_graph_observed(
    g: &Graph,
    cfg: &RunConfig,
    seed: u64,
    observer: impl FnMut(usize, &Factors, f64),
) -> Result<CondenseOutput> {
    condense_graph_cached(g, cfg, seed, None, observer)
}

pub fn condense_graph(g: &Graph, cfg: &RunConfig, seed: u64) -> Result<CondenseOutput> {
    condense_graph_observed(g, cfg, seed, |_, _, _| {})
}

fn eval_config(cfg: &RunConfig, seed: u64) -> EvalConfig {
    EvalConfig {
        learning_rate: cfg.eval_learning_rate,
        weight_decay: cfg.eval_weight_decay,
        epochs: cfg.eval_epochs,
        hidden: cfg.hidden,
        runs: cfg.runs,
        seed,
        feature_norm: cfg.feature_norm,
    }
}

/// Train on a condensed graph, select on the original validation split and
/// report accuracy on the original test split.
pub fn evaluate_condensed(
    cg: &CondensedGraph,
    original: &Graph,
    cfg: &RunConfig,
    seed: u64,
) -> Result<EvalReport> {
    if cg.feature_dim() != original.feature_dim() {
        return Err(Error::data(format!(
            "condensed feature dimension {} does not match the dataset's {}",
            cg.feature_dim(),
            original.feature_dim()
        )));
    }
    let train = TrainData::from_condensed(cg, original.num_classes, cfg.feature_norm)?;
    let eval = EvalData::from_graph(original, cfg.feature_norm)?;
    train_eval(&cfg.model, &train, &eval, &eval_config(cfg, seed))
}

/// Full-dataset baseline: train on the original graph itself (the train
/// subgraph for inductive tasks) and evaluate on the original graph.
pub fn evaluate_full(g: &Graph, cfg: &RunConfig, seed: u64) -> Result<EvalReport> {
    let eval = EvalData::from_graph(g, cfg.feature_norm)?;
    let train = match g.task {
        Task::Transductive => TrainData::from_graph(g, cfg.feature_norm)?,
        Task::Inductive => {
            let (sub, _) = g.train_subgraph();
            TrainData::from_graph(&sub, cfg.feature_norm)?
        }
    };
    train_eval(&cfg.model, &train, &eval, &eval_config(cfg, seed))
}

/// One grid-search row.
#[derive(Debug, Clone)]
pub struct GridResult {
    pub index: usize,
    pub config: RunConfig,
    pub n_prime: usize,
    pub val_mean: f64,
    pub test_mean: f64,
    pub test_std: f64,
    pub final_loss: f64,
}

/// Condense + evaluate each combination; ranking is by validation accuracy
/// (the selection metric), never by test accuracy. The callback fires after
/// each combination so partial results can be flushed.
pub fn run_grid(
    g: &Graph,
    combos: &[RunConfig],
    seed: u64,
    mut on_result: impl FnMut(&GridResult),
) -> Result<Vec<GridResult>> {
    let mut results = Vec::with_capacity(combos.len());
    for (index, combo) in combos.iter().enumerate() {
        let out = condense_graph(g, combo, seed)?;
        let report = evaluate_condensed(&out.condensed, g, combo, seed)?;
        let result = GridResult {
            index,
            config: combo.clone(),
            n_prime: out.n_prime,
            val_mean: report.val_mean,
            test_mean: report.mean,
            test_std: report.std,
            final_loss: out.decomposition.loss_history().last().copied().unwrap_or(f64::NAN),
        };
        on_result(&result);
        results.push(result);
    }
    results.sort_by(|a, b| {
        b.val_mean
            .partial_cmp(&a.val_mean)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    Ok(results)
}
