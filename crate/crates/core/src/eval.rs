//! Evaluation harness: train a small GNN on a graph (condensed or original)
//! and measure test accuracy on the original graph.
//!
//! Protocol: full-batch cross-entropy on the training graph's train nodes,
//! Adam, no dropout; after every epoch the current weights are scored by
//! validation loss on the *original* graph's val split, and the weights with
//! the lowest validation loss are restored for the final test-set report.
//! The whole procedure repeats over independent seeds and reports mean and
//! standard deviation.
//!
//! Two probe models live behind [`EvalModel`], selected by registry name:
//! a 2-layer GCN and SGC (2-hop propagated features into a linear head).

use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::condense::CondensedGraph;
use crate::error::{Error, Result};
use crate::graph::{Graph, SplitTag};
use crate::seed::{self, stage};
use crate::sparse::Csr;

/// Symmetric normalization of a dense adjacency: `D^{-1/2} (A + I) D^{-1/2}`
/// with `D` the weighted degree of `A + I`. Rows of isolated nodes become
/// `e_i` once self-loops are added; without them the convention is an
/// all-zero row. Symmetry of the output is exact: each unordered pair is
/// written from one computed value.
pub fn normalize_adjacency(a: ArrayView2<'_, f64>, add_self_loops: bool) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "adjacency must be square");
    let loop_w = if add_self_loops { 1.0 } else { 0.0 };
    let mut deg = vec![0.0f64; n];
    for i in 0..n {
        deg[i] = a.row(i).sum() + loop_w;
    }
    // normalized weight as a_ij / sqrt(d_i d_j): one rounding step, and the
    // commutative product keeps the output bitwise symmetric
    let norm = |w: f64, di: f64, dj: f64| -> f64 {
        let dd = di * dj;
        if w != 0.0 && dd > 0.0 {
            w / dd.sqrt()
        } else {
            0.0
        }
    };
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        out[[i, i]] = norm(a[[i, i]] + loop_w, deg[i], deg[i]);
        for j in (i + 1)..n {
            let v = norm(a[[i, j]], deg[i], deg[j]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Sparse counterpart of [`normalize_adjacency`] built straight from a
/// graph's edge list (all weights 1).
pub fn normalize_graph_adjacency(g: &Graph, add_self_loops: bool) -> Csr {
    let n = g.num_nodes;
    let loop_w: f64 = if add_self_loops { 1.0 } else { 0.0 };
    let mut deg = vec![loop_w; n];
    for &(u, v) in &g.edges {
        deg[u as usize] += 1.0;
        deg[v as usize] += 1.0;
    }
    for &u in &g.self_loops {
        deg[u as usize] += 1.0;
    }
    let norm = |w: f64, di: f64, dj: f64| -> f64 {
        let dd = di * dj;
        if w != 0.0 && dd > 0.0 {
            w / dd.sqrt()
        } else {
            0.0
        }
    };
    let mut triplets = Vec::with_capacity(2 * g.edges.len() + n);
    for &(u, v) in &g.edges {
        let w = norm(1.0, deg[u as usize], deg[v as usize]);
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    for i in 0..n as u32 {
        let mut diag = loop_w;
        if g.self_loops.binary_search(&i).is_ok() {
            diag += 1.0;
        }
        if diag > 0.0 {
            let d = deg[i as usize];
            triplets.push((i, i, norm(diag, d, d)));
        }
    }
    Csr::from_triplets(n, n, triplets)
}

/// Row-normalize features to unit sum. Unit-sum scaling is only meaningful
/// for count-like nonnegative features (bags of words); matrices with
/// negative entries pass through untouched.
fn row_normalized(features: ArrayView2<'_, f32>) -> Array2<f32> {
    if features.iter().any(|&x| x < 0.0) {
        return features.to_owned();
    }
    let mut out = features.to_owned();
    for mut row in out.rows_mut() {
        let s: f32 = row.sum();
        if s > 1e-12 {
            row.mapv_inplace(|x| x / s);
        }
    }
    out
}

/// A graph prepared for training: normalized propagation matrix, sparse
/// features and the train-node list.
pub struct TrainData {
    pub prop: Csr,
    pub features: Csr,
    pub labels: Vec<u16>,
    pub train_nodes: Vec<u32>,
    pub num_classes: usize,
}

/// The original graph prepared for model selection and testing.
pub struct EvalData {
    pub prop: Csr,
    pub features: Csr,
    pub labels: Vec<u16>,
    pub val_nodes: Vec<u32>,
    pub test_nodes: Vec<u32>,
    pub num_classes: usize,
}

impl TrainData {
    pub fn from_graph(g: &Graph, feature_norm: bool) -> Result<TrainData> {
        let train_nodes = g.nodes_in_split(SplitTag::Train);
        if train_nodes.is_empty() {
            return Err(Error::data("training graph has no train nodes"));
        }
        let features = prepared_features(g.features.view(), feature_norm);
        Ok(TrainData {
            prop: normalize_graph_adjacency(g, true),
            features,
            labels: g.labels.clone(),
            train_nodes,
            num_classes: g.num_classes,
        })
    }

    /// Condensed graphs keep their learned edge weights in the
    /// normalization. A condensed graph is a distilled training set, so
    /// every synthetic node supervises the loss; the split tags describe
    /// which region of the original graph a node stands for, they are not
    /// holdout markers. The class count comes from the original dataset: a
    /// condensed graph may not realize every class.
    pub fn from_condensed(
        cg: &CondensedGraph,
        num_classes: usize,
        feature_norm: bool,
    ) -> Result<TrainData> {
        let train_nodes: Vec<u32> = (0..cg.num_nodes() as u32).collect();
        if cg.labels.iter().any(|&c| c as usize >= num_classes) {
            return Err(Error::data("condensed labels exceed the dataset's class count"));
        }
        let prop = Csr::from_dense(normalize_adjacency(cg.adjacency.view(), true).view());
        let features = prepared_features(cg.features.view(), feature_norm);
        Ok(TrainData {
            prop,
            features,
            labels: cg.labels.clone(),
            train_nodes,
            num_classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

impl EvalData {
    pub fn from_graph(g: &Graph, feature_norm: bool) -> Result<EvalData> {
        let val_nodes = g.nodes_in_split(SplitTag::Val);
        let test_nodes = g.nodes_in_split(SplitTag::Test);
        if val_nodes.is_empty() {
            return Err(Error::data("evaluation graph has no val split"));
        }
        if test_nodes.is_empty() {
            return Err(Error::data("evaluation graph has no test split"));
        }
        Ok(EvalData {
            prop: normalize_graph_adjacency(g, true),
            features: prepared_features(g.features.view(), feature_norm),
            labels: g.labels.clone(),
            val_nodes,
            test_nodes,
            num_classes: g.num_classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

fn prepared_features(features: ArrayView2<'_, f32>, feature_norm: bool) -> Csr {
    if feature_norm {
        Csr::from_dense_f32(row_normalized(features).view())
    } else {
        Csr::from_dense_f32(features)
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub hidden: usize,
    pub runs: usize,
    pub seed: u64,
    pub feature_norm: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            learning_rate: 0.01,
            weight_decay: 5e-4,
            epochs: 600,
            hidden: 256,
            runs: 10,
            seed: 0,
            feature_norm: true,
        }
    }
}

/// Outcome of a single seeded run.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub best_val_epoch: usize,
    pub best_val_loss: f64,
    #[serde(skip)]
    pub epoch_losses: Vec<(f64, f64)>,
    #[serde(skip)]
    pub val_loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub runs: Vec<RunResult>,
    pub mean: f64,
    pub std: f64,
    pub val_mean: f64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl EvalReport {
    fn aggregate(model: &str, runs: Vec<RunResult>, wall_time_s: f64) -> EvalReport {
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.test_accuracy).sum::<f64>() / n;
        let var = runs
            .iter()
            .map(|r| (r.test_accuracy - mean).powi(2))
            .sum::<f64>()
            / n;
        let val_mean = runs.iter().map(|r| r.val_accuracy).sum::<f64>() / n;
        EvalReport {
            model: model.to_string(),
            runs,
            mean,
            std: var.sqrt(),
            val_mean,
            wall_time_s,
        }
    }
}

/// An evaluation probe model.
pub trait EvalModel: Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, train: &TrainData, eval: &EvalData, cfg: &EvalConfig) -> Result<EvalReport>;
}

pub struct Gcn;
pub struct Sgc;

pub struct EvalModelEntry {
    pub name: &'static str,
    pub build: fn() -> Box<dyn EvalModel>,
}

/// Name-keyed registry of evaluation models.
pub static EVAL_MODELS: &[EvalModelEntry] = &[
    EvalModelEntry {
        name: "gcn",
        build: || Box::new(Gcn),
    },
    EvalModelEntry {
        name: "sgc",
        build: || Box::new(Sgc),
    },
];

pub fn eval_model(name: &str) -> Result<Box<dyn EvalModel>> {
    EVAL_MODELS
        .iter()
        .find(|e| e.name == name)
        .map(|e| (e.build)())
        .ok_or_else(|| {
            let names: Vec<&str> = EVAL_MODELS.iter().map(|e| e.name).collect();
            Error::config(format!(
                "unknown eval model {name:?} (available: {})",
                names.join(", ")
            ))
        })
}

/// Train and evaluate by registry name, repeating over `cfg.runs` seeds.
pub fn train_eval(
    model_name: &str,
    train: &TrainData,
    eval: &EvalData,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let model = eval_model(model_name)?;
    model.evaluate(train, eval, cfg)
}

fn check_compatible(train: &TrainData, eval: &EvalData) -> Result<()> {
    if train.dim() != eval.dim() {
        return Err(Error::data(format!(
            "feature dimension mismatch: training graph has {}, evaluation graph has {}",
            train.dim(),
            eval.dim()
        )));
    }
    if train.num_classes != eval.num_classes {
        return Err(Error::data(format!(
            "class count mismatch: {} vs {}",
            train.num_classes, eval.num_classes
        )));
    }
    Ok(())
}

fn run_seeds(cfg: &EvalConfig) -> Vec<u64> {
    (0..cfg.runs)
        .map(|i| seed::derive_indexed(cfg.seed, stage::EVAL, i as u64))
        .collect()
}

/// Percentage of mask nodes whose argmax logit equals the label; argmax
/// ties break toward the lowest class id.
pub fn accuracy(logits: ArrayView2<'_, f64>, labels: &[u16], mask: &[u32]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::data("accuracy over an empty mask"));
    }
    let mut correct = 0usize;
    for &i in mask {
        let row = logits.row(i as usize);
        let mut best = 0usize;
        let mut best_v = row[0];
        for (c, &v) in row.iter().enumerate().skip(1) {
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        if best == labels[i as usize] as usize {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / mask.len() as f64)
}

/// Mean cross-entropy of softmax(logits) over the mask.
fn masked_cross_entropy(logits: ArrayView2<'_, f64>, labels: &[u16], mask: &[u32]) -> f64 {
    let mut loss = 0.0;
    for &i in mask {
        let row = logits.row(i as usize);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        loss += lse - row[labels[i as usize] as usize];
    }
    loss / mask.len() as f64
}

/// Cross-entropy plus its gradient w.r.t. the logits (zero off the mask).
fn masked_cross_entropy_grad(
    logits: ArrayView2<'_, f64>,
    labels: &[u16],
    mask: &[u32],
) -> (f64, Array2<f64>) {
    let mut grad = Array2::<f64>::zeros(logits.dim());
    let inv = 1.0 / mask.len() as f64;
    let mut loss = 0.0;
    for &i in mask {
        let row = logits.row(i as usize);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&x| (x - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - row[labels[i as usize] as usize];
        let mut g = grad.row_mut(i as usize);
        for (c, gv) in g.iter_mut().enumerate() {
            let p = (row[c] - m).exp() / sum;
            *gv = p * inv;
        }
        g[labels[i as usize] as usize] -= inv;
    }
    (loss * inv, grad)
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || (rng.random::<f64>() * 2.0 - 1.0) * limit)
}

/// Per-parameter Adam with PyTorch-style coupled weight decay
/// (`g += wd * θ` before the moment updates).
struct Adam {
    lr: f64,
    wd: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    fn new(params: &[&Array2<f64>], lr: f64, wd: f64) -> Adam {
        Adam {
            lr,
            wd,
            step: 0,
            m: params.iter().map(|p| Array2::zeros(p.dim())).collect(),
            v: params.iter().map(|p| Array2::zeros(p.dim())).collect(),
        }
    }

    fn apply(&mut self, params: &mut [&mut Array2<f64>], grads: &[Array2<f64>]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - B1.powi(self.step as i32);
        let bc2 = 1.0 - B2.powi(self.step as i32);
        for (idx, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            ndarray::Zip::from(&mut **p)
                .and(m)
                .and(v)
                .and(&grads[idx])
                .for_each(|t, m, v, &g0| {
                    let g = g0 + self.wd * *t;
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *t -= self.lr * m_hat / (v_hat.sqrt() + EPS);
                });
        }
    }
}

fn add_row_bias(z: &mut Array2<f64>, b: &Array2<f64>) {
    for mut row in z.rows_mut() {
        row += &b.row(0);
    }
}

struct GcnWeights {
    w1: Array2<f64>,
    b1: Array2<f64>,
    w2: Array2<f64>,
    b2: Array2<f64>,
}

impl GcnWeights {
    fn init(dim: usize, hidden: usize, classes: usize, seed: u64) -> GcnWeights {
        let mut rng = seed::rng(seed);
        GcnWeights {
            w1: glorot(dim, hidden, &mut rng),
            b1: Array2::zeros((1, hidden)),
            w2: glorot(hidden, classes, &mut rng),
            b2: Array2::zeros((1, classes)),
        }
    }

    fn clone_from_other(&mut self, other: &GcnWeights) {
        self.w1.assign(&other.w1);
        self.b1.assign(&other.b1);
        self.w2.assign(&other.w2);
        self.b2.assign(&other.b2);
    }
}

/// Forward pass `Z = Â ReLU(Â X W1 + b1) W2 + b2`; optionally returns the
/// intermediates needed by the backward pass.
fn gcn_forward(
    prop: &Csr,
    features: &Csr,
    w: &GcnWeights,
    keep_intermediates: bool,
) -> (Array2<f64>, Option<(Array2<f64>, Array2<f64>)>) {
    let s = features.matmul_dense(w.w1.view());
    let mut z1 = prop.matmul_dense(s.view());
    add_row_bias(&mut z1, &w.b1);
    let mut a1 = z1.clone();
    a1.mapv_inplace(|x| if x > 0.0 { x } else { 0.0 });
    let t = a1.dot(&w.w2);
    let mut z2 = prop.matmul_dense(t.view());
    add_row_bias(&mut z2, &w.b2);
    if keep_intermediates {
        (z2, Some((z1, a1)))
    } else {
        (z2, None)
    }
}

fn gcn_single_run(
    train: &TrainData,
    eval: &EvalData,
    cfg: &EvalConfig,
    run_seed: u64,
) -> Result<RunResult> {
    let dim = train.dim();
    let classes = train.num_classes;
    let mut w = GcnWeights::init(dim, cfg.hidden, classes, run_seed);
    let mut best = GcnWeights::init(dim, cfg.hidden, classes, run_seed);
    let mut adam = {
        let params = [&w.w1, &w.b1, &w.w2, &w.b2];
        Adam::new(&params, cfg.learning_rate, cfg.weight_decay)
    };

    let mut val_loss_trace = Vec::with_capacity(cfg.epochs + 1);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 0usize;

    let eval_val = |w: &GcnWeights| -> f64 {
        let (z, _) = gcn_forward(&eval.prop, &eval.features, w, false);
        masked_cross_entropy(z.view(), &eval.labels, &eval.val_nodes)
    };

    // the initial weights take part in model selection (epoch 0)
    let mut best_val = eval_val(&w);
    val_loss_trace.push(best_val);
    best.clone_from_other(&w);

    for epoch in 1..=cfg.epochs {
        let (z2, inter) = gcn_forward(&train.prop, &train.features, &w, true);
        let (z1, a1) = inter.expect("intermediates kept");
        let (train_loss, g2) =
            masked_cross_entropy_grad(z2.view(), &train.labels, &train.train_nodes);
        if !train_loss.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite training loss at epoch {epoch}"
            )));
        }
        // backward: prop is symmetric, so Pᵀ· = P·
        let dt = train.prop.matmul_dense(g2.view());
        let dw2 = a1.t().dot(&dt);
        let db2 = sum_rows(&g2);
        let mut dz1 = dt.dot(&w.w2.t());
        ndarray::Zip::from(&mut dz1).and(&z1).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        let db1 = sum_rows(&dz1);
        let ds = train.prop.matmul_dense(dz1.view());
        let dw1 = train.features.transpose_matmul_dense(ds.view());

        let mut params = [&mut w.w1, &mut w.b1, &mut w.w2, &mut w.b2];
        adam.apply(&mut params, &[dw1, db1, dw2, db2]);

        let val_loss = eval_val(&w);
        val_loss_trace.push(val_loss);
        epoch_losses.push((train_loss, val_loss));
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best.clone_from_other(&w);
        }
    }

    let (z_eval, _) = gcn_forward(&eval.prop, &eval.features, &best, false);
    let restored_val = masked_cross_entropy(z_eval.view(), &eval.labels, &eval.val_nodes);
    debug_assert!(
        (restored_val - best_val).abs() <= 1e-9_f64.max(best_val.abs() * 1e-12),
        "restored weights do not reproduce the best validation loss"
    );
    Ok(RunResult {
        seed: run_seed,
        test_accuracy: accuracy(z_eval.view(), &eval.labels, &eval.test_nodes)?,
        val_accuracy: accuracy(z_eval.view(), &eval.labels, &eval.val_nodes)?,
        best_val_epoch: best_epoch,
        best_val_loss: best_val,
        epoch_losses,
        val_loss_trace,
    })
}

fn sum_rows(a: &Array2<f64>) -> Array2<f64> {
    let cols = a.ncols();
    let mut out = Array2::<f64>::zeros((1, cols));
    for row in a.rows() {
        let mut o = out.row_mut(0);
        o += &row;
    }
    out
}

impl EvalModel for Gcn {
    fn name(&self) -> &'static str {
        "gcn"
    }

    fn evaluate(&self, train: &TrainData, eval: &EvalData, cfg: &EvalConfig) -> Result<EvalReport> {
        check_compatible(train, eval)?;
        let start = Instant::now();
        let seeds = run_seeds(cfg);
        let runs: Result<Vec<RunResult>> = seeds
            .par_iter()
            .map(|&s| gcn_single_run(train, eval, cfg, s))
            .collect();
        Ok(EvalReport::aggregate(
            self.name(),
            runs?,
            start.elapsed().as_secs_f64(),
        ))
    }
}

/// Rows of the 2-hop propagated features `Â² X` for the given nodes.
fn propagated_rows(prop: &Csr, features: &Csr, nodes: &[u32]) -> Array2<f64> {
    let px = prop.matmul_csr_dense(features);
    let full = prop.matmul_dense(px.view());
    let mut out = Array2::<f64>::zeros((nodes.len(), full.ncols()));
    for (r, &i) in nodes.iter().enumerate() {
        out.row_mut(r).assign(&full.row(i as usize));
    }
    out
}

fn sgc_single_run(
    f_train: &Array2<f64>,
    train_labels: &[u16],
    f_val: &Array2<f64>,
    f_test: &Array2<f64>,
    eval_val_labels: &[u16],
    eval_test_labels: &[u16],
    classes: usize,
    cfg: &EvalConfig,
    run_seed: u64,
) -> Result<RunResult> {
    let dim = f_train.ncols();
    let mut rng = seed::rng(run_seed);
    let mut w = glorot(dim, classes, &mut rng);
    let mut b = Array2::<f64>::zeros((1, classes));
    let mut best_w = w.clone();
    let mut best_b = b.clone();
    let mut adam = Adam::new(&[&w, &b], cfg.learning_rate, cfg.weight_decay);

    let train_mask: Vec<u32> = (0..f_train.nrows() as u32).collect();
    let val_mask: Vec<u32> = (0..f_val.nrows() as u32).collect();
    let test_mask: Vec<u32> = (0..f_test.nrows() as u32).collect();

    let logits = |f: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>| {
        let mut z = f.dot(w);
        add_row_bias(&mut z, b);
        z
    };

    let mut val_loss_trace = Vec::with_capacity(cfg.epochs + 1);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let v0 = masked_cross_entropy(logits(f_val, &w, &b).view(), eval_val_labels, &val_mask);
    let mut best_val = v0;
    let mut best_epoch = 0usize;
    val_loss_trace.push(v0);

    for epoch in 1..=cfg.epochs {
        let z = logits(f_train, &w, &b);
        let (train_loss, g) = masked_cross_entropy_grad(z.view(), train_labels, &train_mask);
        if !train_loss.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite training loss at epoch {epoch}"
            )));
        }
        let dw = f_train.t().dot(&g);
        let db = sum_rows(&g);
        let mut params = [&mut w, &mut b];
        adam.apply(&mut params, &[dw, db]);

        let val_loss = masked_cross_entropy(logits(f_val, &w, &b).view(), eval_val_labels, &val_mask);
        val_loss_trace.push(val_loss);
        epoch_losses.push((train_loss, val_loss));
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_w.assign(&w);
            best_b.assign(&b);
        }
    }

    let z_val = logits(f_val, &best_w, &best_b);
    let z_test = logits(f_test, &best_w, &best_b);
    Ok(RunResult {
        seed: run_seed,
        test_accuracy: accuracy(z_test.view(), eval_test_labels, &test_mask)?,
        val_accuracy: accuracy(z_val.view(), eval_val_labels, &val_mask)?,
        best_val_epoch: best_epoch,
        best_val_loss: best_val,
        epoch_losses,
        val_loss_trace,
    })
}

impl EvalModel for Sgc {
    fn name(&self) -> &'static str {
        "sgc"
    }

    fn evaluate(&self, train: &TrainData, eval: &EvalData, cfg: &EvalConfig) -> Result<EvalReport> {
        check_compatible(train, eval)?;
        let start = Instant::now();
        // Â²X is precomputed once and shared across every run
        let f_train = propagated_rows(&train.prop, &train.features, &train.train_nodes);
        let train_labels: Vec<u16> = train
            .train_nodes
            .iter()
            .map(|&i| train.labels[i as usize])
            .collect();
        let f_val = propagated_rows(&eval.prop, &eval.features, &eval.val_nodes);
        let f_test = propagated_rows(&eval.prop, &eval.features, &eval.test_nodes);
        let val_labels: Vec<u16> = eval.val_nodes.iter().map(|&i| eval.labels[i as usize]).collect();
        let test_labels: Vec<u16> = eval
            .test_nodes
            .iter()
            .map(|&i| eval.labels[i as usize])
            .collect();
        let seeds = run_seeds(cfg);
        let runs: Result<Vec<RunResult>> = seeds
            .par_iter()
            .map(|&s| {
                sgc_single_run(
                    &f_train,
                    &train_labels,
                    &f_val,
                    &f_test,
                    &val_labels,
                    &test_labels,
                    train.num_classes,
                    cfg,
                    s,
                )
            })
            .collect();
        Ok(EvalReport::aggregate(
            self.name(),
            runs?,
            start.elapsed().as_secs_f64(),
        ))
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    runs: &'a [RunResult],
    mean: f64,
    std: f64,
    val_mean: f64,
    model: &'a str,
    config: serde_json::Value,
    seed: u64,
    git_ref: &'a str,
}

/// Write the evaluation report as JSON. Wall time is intentionally not part
/// of the file so identical runs produce identical bytes.
pub fn write_report(
    path: impl AsRef<Path>,
    report: &EvalReport,
    config: serde_json::Value,
    seed: u64,
    git_ref: &str,
) -> Result<()> {
    let path = path.as_ref();
    let file = ReportFile {
        runs: &report.runs,
        mean: report.mean,
        std: report.std,
        val_mean: report.val_mean,
        model: &report.model,
        config,
        seed,
        git_ref,
    };
    let text = serde_json::to_string_pretty(&file).expect("report serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-epoch train/val losses for every run, as CSV.
pub fn write_epoch_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("run,epoch,train_loss,val_loss\n");
    for (r, run) in report.runs.iter().enumerate() {
        for (e, (tl, vl)) in run.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{r},{},{tl},{vl}\n", e + 1));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
