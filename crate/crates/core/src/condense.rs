//! Condensed-graph extraction from trained factors.
//!
//! Rows of the factor matrix are grouped into N′ clusters (K-Means by
//! default, row-wise argmax as an ablation; both live behind
//! [`AssignStrategy`] and are selected by name). The condensed adjacency is
//! the core tensor averaged along the view axis and symmetrized by adding
//! the transposed off-diagonal entries. Each synthetic node then receives a
//! split, class and feature row from its cluster members, steering choices
//! toward underrepresented splits and classes so the condensed graph keeps
//! the original distribution.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decompose::Factors;
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphStats, SplitTag, SPLIT_TAGS};
use crate::seed::{self, stage};

/// Output of a node-assignment strategy.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    /// Cluster id per original node.
    pub membership: Vec<u32>,
    /// One centroid per cluster in factor space.
    pub centroids: Array2<f64>,
    /// Sum of squared distances from rows to their centroid.
    pub objective: f64,
}

/// Maps original nodes to synthetic nodes from the factor matrix.
pub trait AssignStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn assign(&self, u: ArrayView2<'_, f64>, clusters: usize, seed: u64) -> ClusterAssignment;
}

/// Lloyd's algorithm with centroids initialized from distinct random rows.
pub struct KMeansAssign {
    pub iters: usize,
}

/// Row-wise argmax over the factor columns (ablation baseline).
pub struct ArgmaxAssign;

pub struct AssignStrategyEntry {
    pub name: &'static str,
    pub build: fn(&CondenseOptions) -> Box<dyn AssignStrategy>,
}

/// Name-keyed registry of assignment strategies.
pub static ASSIGN_STRATEGIES: &[AssignStrategyEntry] = &[
    AssignStrategyEntry {
        name: "kmeans",
        build: |o| Box::new(KMeansAssign { iters: o.kmeans_iters }),
    },
    AssignStrategyEntry {
        name: "argmax",
        build: |_| Box::new(ArgmaxAssign),
    },
];

pub fn assign_strategy(options: &CondenseOptions) -> Result<Box<dyn AssignStrategy>> {
    ASSIGN_STRATEGIES
        .iter()
        .find(|e| e.name == options.strategy)
        .map(|e| (e.build)(options))
        .ok_or_else(|| {
            let names: Vec<&str> = ASSIGN_STRATEGIES.iter().map(|e| e.name).collect();
            Error::config(format!(
                "unknown assignment strategy {:?} (available: {})",
                options.strategy,
                names.join(", ")
            ))
        })
}

#[derive(Debug, Clone)]
pub struct CondenseOptions {
    /// Registry name of the assignment strategy.
    pub strategy: String,
    pub kmeans_iters: usize,
    pub seed: u64,
    /// Zero adjacency entries strictly below this cutoff (storage knob).
    pub edge_threshold: Option<f64>,
}

impl Default for CondenseOptions {
    fn default() -> Self {
        CondenseOptions {
            strategy: "kmeans".into(),
            kmeans_iters: 20,
            seed: 0,
            edge_threshold: None,
        }
    }
}

fn squared_distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Lloyd's K-Means. Ties in the nearest-centroid argmin break toward the
/// lowest cluster index; empty clusters keep their previous centroid.
pub fn kmeans(u: ArrayView2<'_, f64>, clusters: usize, iters: usize, seed: u64) -> ClusterAssignment {
    let n = u.nrows();
    let d = u.ncols();
    assert!(clusters >= 1 && n >= clusters, "need at least one row per cluster");
    assert!(iters >= 1);

    // Initialize from distinct random rows, reseeding when a draw collapses
    // two clusters onto identical rows. Graphs with fewer distinct rows than
    // clusters accept duplicates; the empty-cluster rule covers them later.
    let distinct_rows = {
        let mut set = HashSet::new();
        for row in u.rows() {
            let bits: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
            set.insert(bits);
        }
        set.len()
    };
    let mut centroids = Array2::<f64>::zeros((clusters, d));
    for attempt in 0..16u64 {
        let mut rng = seed::rng(seed::splitmix64(seed ^ attempt));
        let mut picked: Vec<usize> = Vec::with_capacity(clusters);
        let mut taken = HashSet::new();
        while picked.len() < clusters {
            let ix = rng.random_range(0..n);
            if taken.insert(ix) {
                picked.push(ix);
            }
        }
        for (c, &ix) in picked.iter().enumerate() {
            centroids.row_mut(c).assign(&u.row(ix));
        }
        let mut seen = HashSet::new();
        let all_distinct = centroids
            .rows()
            .into_iter()
            .all(|row| seen.insert(row.iter().map(|x| x.to_bits()).collect::<Vec<_>>()));
        if all_distinct || distinct_rows < clusters {
            break;
        }
    }

    let mut membership = vec![0u32; n];
    let mut objective = 0.0;
    let mut prev_membership: Option<Vec<u32>> = None;
    for _ in 0..iters {
        objective = 0.0;
        for (i, row) in u.rows().into_iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = squared_distance(row, centroids.row(0));
            for c in 1..clusters {
                let dist = squared_distance(row, centroids.row(c));
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            membership[i] = best as u32;
            objective += best_d;
        }
        if prev_membership.as_deref() == Some(&membership) {
            break;
        }
        prev_membership = Some(membership.clone());
        let mut sums = Array2::<f64>::zeros((clusters, d));
        let mut counts = vec![0usize; clusters];
        for (i, &c) in membership.iter().enumerate() {
            let mut s = sums.row_mut(c as usize);
            s += &u.row(i);
            counts[c as usize] += 1;
        }
        for c in 0..clusters {
            if counts[c] > 0 {
                let mut row = centroids.row_mut(c);
                row.assign(&sums.row(c));
                row.mapv_inplace(|x| x / counts[c] as f64);
            }
        }
    }
    ClusterAssignment {
        membership,
        centroids,
        objective,
    }
}

impl AssignStrategy for KMeansAssign {
    fn name(&self) -> &'static str {
        "kmeans"
    }

    fn assign(&self, u: ArrayView2<'_, f64>, clusters: usize, seed: u64) -> ClusterAssignment {
        kmeans(u, clusters, self.iters, seed)
    }
}

impl AssignStrategy for ArgmaxAssign {
    fn name(&self) -> &'static str {
        "argmax"
    }

    fn assign(&self, u: ArrayView2<'_, f64>, clusters: usize, _seed: u64) -> ClusterAssignment {
        let d = u.ncols();
        assert_eq!(clusters, d, "argmax assignment needs one cluster per factor column");
        let mut membership = vec![0u32; u.nrows()];
        for (i, row) in u.rows().into_iter().enumerate() {
            let mut best = 0usize;
            let mut best_v = row[0];
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            membership[i] = best as u32;
        }
        // report cluster means so the objective is comparable with kmeans
        let mut centroids = Array2::<f64>::zeros((clusters, d));
        let mut counts = vec![0usize; clusters];
        for (i, &c) in membership.iter().enumerate() {
            let mut row = centroids.row_mut(c as usize);
            row += &u.row(i);
            counts[c as usize] += 1;
        }
        for c in 0..clusters {
            if counts[c] > 0 {
                centroids.row_mut(c).mapv_inplace(|x| x / counts[c] as f64);
            }
        }
        let mut objective = 0.0;
        for (i, &c) in membership.iter().enumerate() {
            objective += squared_distance(u.row(i), centroids.row(c as usize));
        }
        ClusterAssignment {
            membership,
            centroids,
            objective,
        }
    }
}

/// Average the core tensor over views and symmetrize by adding the opposite
/// off-diagonal entry; the diagonal stays the plain average. Symmetry is
/// exact because each unordered pair is written from a single computed value.
pub fn build_condensed_adjacency(core: &Array3<f64>) -> Array2<f64> {
    let rank = core.len_of(Axis(1));
    let mean = core.mean_axis(Axis(0)).expect("at least one view");
    let mut a = Array2::<f64>::zeros((rank, rank));
    for i in 0..rank {
        a[[i, i]] = mean[[i, i]];
        for j in (i + 1)..rank {
            let w = mean[[i, j]] + mean[[j, i]];
            a[[i, j]] = w;
            a[[j, i]] = w;
        }
    }
    a
}

/// Target proportions derived from the original graph: overall split shares
/// and per-split class shares.
#[derive(Debug, Clone)]
pub struct Targets {
    pub split_share: [f64; 4],
    /// class_share[split][class]
    pub class_share: [Vec<f64>; 4],
}

impl Targets {
    pub fn from_graph(g: &Graph) -> Targets {
        let mut split_counts = [0usize; 4];
        let mut cell_counts = [
            vec![0usize; g.num_classes],
            vec![0usize; g.num_classes],
            vec![0usize; g.num_classes],
            vec![0usize; g.num_classes],
        ];
        for i in 0..g.num_nodes {
            let s = g.splits[i].index();
            split_counts[s] += 1;
            cell_counts[s][g.labels[i] as usize] += 1;
        }
        let n = g.num_nodes as f64;
        let mut split_share = [0.0; 4];
        let mut class_share: [Vec<f64>; 4] = Default::default();
        for s in 0..4 {
            split_share[s] = split_counts[s] as f64 / n;
            class_share[s] = cell_counts[s]
                .iter()
                .map(|&c| {
                    if split_counts[s] > 0 {
                        c as f64 / split_counts[s] as f64
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        Targets {
            split_share,
            class_share,
        }
    }
}

/// Running counts of split/class assignments made so far.
#[derive(Debug, Clone, Default)]
pub struct AssignState {
    pub total: usize,
    pub per_split: [usize; 4],
    pub per_cell: [Vec<usize>; 4],
}

impl AssignState {
    pub fn new(num_classes: usize) -> AssignState {
        AssignState {
            total: 0,
            per_split: [0; 4],
            per_cell: [
                vec![0; num_classes],
                vec![0; num_classes],
                vec![0; num_classes],
                vec![0; num_classes],
            ],
        }
    }

    pub fn record(&mut self, split: SplitTag, class: u16) {
        self.total += 1;
        self.per_split[split.index()] += 1;
        self.per_cell[split.index()][class as usize] += 1;
    }
}

const SHARE_EPS: f64 = 1e-12;

/// Pick the split and class for a synthetic node from its cluster members.
///
/// Split: the most frequent split among members, unless a member split is
/// currently behind its target share of the nodes assigned so far, in which
/// case the most underrepresented such split wins. Class: among the classes
/// of members in the chosen split (ascending id), the first whose running
/// count is below its proportional target; when all are satisfied, a
/// seeded-uniform pick among the candidates.
pub fn assign_split_and_class(
    members: &[u32],
    g: &Graph,
    targets: &Targets,
    state: &mut AssignState,
    rng: &mut impl Rng,
) -> (SplitTag, u16, Vec<String>) {
    assert!(!members.is_empty(), "assignment needs at least one member");
    let mut notes = Vec::new();
    let mut split_counts = [0usize; 4];
    for &m in members {
        split_counts[g.splits[m as usize].index()] += 1;
    }

    let mut chosen_split: Option<SplitTag> = None;
    let mut best_deficit = SHARE_EPS;
    for tag in SPLIT_TAGS {
        let s = tag.index();
        if split_counts[s] == 0 {
            continue;
        }
        let deficit = targets.split_share[s] * state.total as f64 - state.per_split[s] as f64;
        let better = deficit > best_deficit + SHARE_EPS
            || (deficit > best_deficit - SHARE_EPS
                && chosen_split
                    .map(|c| split_counts[s] > split_counts[c.index()])
                    .unwrap_or(false));
        if deficit > SHARE_EPS && (chosen_split.is_none() || better) {
            chosen_split = Some(tag);
            best_deficit = deficit.max(best_deficit);
        }
    }
    let split = chosen_split.unwrap_or_else(|| {
        // plurality; ties break in SplitTag order
        let mut best = SPLIT_TAGS[0];
        for tag in SPLIT_TAGS {
            if split_counts[tag.index()] > split_counts[best.index()] {
                best = tag;
            }
        }
        best
    });

    let (class, class_notes) = choose_class(members, split, g, targets, state, rng);
    notes.extend(class_notes);
    state.record(split, class);
    (split, class, notes)
}

/// Class choice within a chosen split. When no member belongs to the split
/// (cannot happen through [`assign_split_and_class`], which only picks
/// member splits) the class falls back to a plurality vote over all
/// members, recorded in the notes.
pub(crate) fn choose_class(
    members: &[u32],
    split: SplitTag,
    g: &Graph,
    targets: &Targets,
    state: &AssignState,
    rng: &mut impl Rng,
) -> (u16, Vec<String>) {
    let s = split.index();
    let mut freq = vec![0usize; g.num_classes];
    let mut any = false;
    for &m in members {
        if g.splits[m as usize] == split {
            freq[g.labels[m as usize] as usize] += 1;
            any = true;
        }
    }

    if !any {
        let mut counts = vec![0usize; g.num_classes];
        for &m in members {
            counts[g.labels[m as usize] as usize] += 1;
        }
        let class = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c as u16)
            .unwrap_or(0);
        return (class, vec!["class-vote-all-members".to_string()]);
    }
    // candidates by descending member frequency (class id breaks ties), the
    // first one still behind its proportional target wins; plurality only
    // yields to balance, never to an absent class
    let mut candidates: Vec<u16> = (0..g.num_classes as u16).filter(|&c| freq[c as usize] > 0).collect();
    candidates.sort_by_key(|&c| (std::cmp::Reverse(freq[c as usize]), c));
    let below = candidates.iter().copied().find(|&c| {
        let target = targets.class_share[s][c as usize] * (state.per_split[s] + 1) as f64;
        (state.per_cell[s][c as usize] as f64) < target - SHARE_EPS
    });
    let class = match below {
        Some(c) => c,
        None => candidates[rng.random_range(0..candidates.len())],
    };
    (class, Vec::new())
}

/// Features of a synthetic node: the mean feature row of members matching
/// both split and class, falling back to class-only members, then to all
/// members. The fallback level is reported for provenance.
pub fn build_features(
    members: &[u32],
    split: SplitTag,
    class: u16,
    g: &Graph,
) -> (Array1<f32>, Vec<String>) {
    assert!(!members.is_empty());
    let mut notes = Vec::new();
    let matching: Vec<u32> = members
        .iter()
        .copied()
        .filter(|&m| g.splits[m as usize] == split && g.labels[m as usize] == class)
        .collect();
    let pool: Vec<u32> = if !matching.is_empty() {
        matching
    } else {
        let class_only: Vec<u32> = members
            .iter()
            .copied()
            .filter(|&m| g.labels[m as usize] == class)
            .collect();
        if !class_only.is_empty() {
            notes.push("features-class-only".to_string());
            class_only
        } else {
            notes.push("features-all-members".to_string());
            members.to_vec()
        }
    };
    (mean_feature_row(&pool, g), notes)
}

fn mean_feature_row(nodes: &[u32], g: &Graph) -> Array1<f32> {
    let d = g.feature_dim();
    let mut acc = vec![0.0f64; d];
    for &m in nodes {
        for (a, &v) in acc.iter_mut().zip(g.features.row(m as usize)) {
            *a += v as f64;
        }
    }
    let inv = 1.0 / nodes.len() as f64;
    Array1::from_iter(acc.into_iter().map(|x| (x * inv) as f32))
}

/// Where a synthetic node's attributes came from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub members: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// The synthesized graph: weighted symmetric adjacency, per-node features,
/// labels, splits and cluster provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedGraph {
    pub adjacency: Array2<f64>,
    pub features: Array2<f32>,
    pub labels: Vec<u16>,
    pub splits: Vec<SplitTag>,
    pub provenance: Vec<Provenance>,
    pub num_classes: usize,
}

impl CondensedGraph {
    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Strictly positive entries of the upper triangle plus diagonal.
    pub fn num_edges(&self) -> usize {
        let n = self.num_nodes();
        let mut count = 0;
        for i in 0..n {
            for j in i..n {
                if self.adjacency[[i, j]] > 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    pub fn nnz(&self) -> usize {
        self.adjacency.iter().filter(|&&x| x > 0.0).count()
    }

    pub fn stats(&self) -> GraphStats {
        let n = self.num_nodes() as f64;
        GraphStats {
            num_nodes: self.num_nodes(),
            num_edges: self.num_edges(),
            num_classes: self.num_classes,
            sparsity: 100.0 * self.nnz() as f64 / (n * n),
            storage_bytes: 8 * self.nnz() as u64
                + 4 * (self.num_nodes() * self.feature_dim()) as u64,
        }
    }
}

/// Run the full extraction: cluster the factor rows, build the adjacency
/// from the core tensor, then assign splits, classes and features cluster by
/// cluster in order of descending size. Empty clusters are filled from the
/// most underrepresented (split, class) cell of the original graph.
pub fn condense(g: &Graph, factors: &Factors, options: &CondenseOptions) -> Result<CondensedGraph> {
    let n_prime = factors.rank();
    if factors.num_nodes() != g.num_nodes {
        return Err(Error::config(format!(
            "factors cover {} nodes but the graph has {}",
            factors.num_nodes(),
            g.num_nodes
        )));
    }
    let strategy = assign_strategy(options)?;
    let assignment = strategy.assign(
        factors.u.view(),
        n_prime,
        seed::derive(options.seed, stage::KMEANS),
    );

    let mut adjacency = build_condensed_adjacency(&factors.core);
    if let Some(threshold) = options.edge_threshold {
        adjacency.mapv_inplace(|x| if x < threshold { 0.0 } else { x });
    }

    let mut clusters: Vec<Vec<u32>> = vec![Vec::new(); n_prime];
    for (node, &c) in assignment.membership.iter().enumerate() {
        clusters[c as usize].push(node as u32);
    }
    let mut order: Vec<usize> = (0..n_prime).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(clusters[c].len()), c));

    let targets = Targets::from_graph(g);
    let mut state = AssignState::new(g.num_classes);
    let mut rng = seed::rng(seed::derive(options.seed, stage::ASSIGN));

    // original nodes per (split, class) cell, for empty-cluster fills
    let mut cell_nodes: Vec<Vec<Vec<u32>>> = vec![vec![Vec::new(); g.num_classes]; 4];
    for i in 0..g.num_nodes {
        cell_nodes[g.splits[i].index()][g.labels[i] as usize].push(i as u32);
    }

    let d = g.feature_dim();
    let mut features = Array2::<f32>::zeros((n_prime, d));
    let mut labels = vec![0u16; n_prime];
    let mut splits = vec![SplitTag::Train; n_prime];
    let mut provenance = vec![
        Provenance {
            members: Vec::new(),
            notes: Vec::new(),
        };
        n_prime
    ];

    for &c in &order {
        let members = &clusters[c];
        if members.is_empty() {
            let (split, class) = most_underrepresented_cell(&targets, &state, &cell_nodes, n_prime);
            state.record(split, class);
            let pool = &cell_nodes[split.index()][class as usize];
            features
                .row_mut(c)
                .assign(&mean_feature_row(pool, g));
            labels[c] = class;
            splits[c] = split;
            provenance[c] = Provenance {
                members: Vec::new(),
                notes: vec!["empty-cluster-fill".to_string()],
            };
            continue;
        }
        let (split, class, mut notes) =
            assign_split_and_class(members, g, &targets, &mut state, &mut rng);
        let (row, feat_notes) = build_features(members, split, class, g);
        notes.extend(feat_notes);
        features.row_mut(c).assign(&row);
        labels[c] = class;
        splits[c] = split;
        provenance[c] = Provenance {
            members: members.clone(),
            notes,
        };
    }

    Ok(CondensedGraph {
        adjacency,
        features,
        labels,
        splits,
        provenance,
        num_classes: g.num_classes,
    })
}

/// Cell with the largest deficit against its share of the condensed size;
/// only cells populated in the original graph qualify. Ties break in split
/// order, then by ascending class id.
fn most_underrepresented_cell(
    targets: &Targets,
    state: &AssignState,
    cell_nodes: &[Vec<Vec<u32>>],
    n_prime: usize,
) -> (SplitTag, u16) {
    let mut best: Option<(SplitTag, u16)> = None;
    let mut best_deficit = f64::NEG_INFINITY;
    for tag in SPLIT_TAGS {
        let s = tag.index();
        for (class, nodes) in cell_nodes[s].iter().enumerate() {
            if nodes.is_empty() {
                continue;
            }
            let share = targets.split_share[s] * targets.class_share[s][class];
            let deficit = share * n_prime as f64 - state.per_cell[s][class] as f64;
            if deficit > best_deficit + SHARE_EPS {
                best_deficit = deficit;
                best = Some((tag, class as u16));
            }
        }
    }
    best.expect("original graph has at least one node")
}

#[derive(Serialize, Deserialize)]
struct CondensedFile {
    num_nodes: usize,
    adjacency: Vec<(u32, u32, f64)>,
    features: Vec<Vec<f32>>,
    labels: Vec<u16>,
    splits: Vec<String>,
    provenance: Vec<Provenance>,
    config: serde_json::Value,
    seed: u64,
}

/// Write the condensed graph as JSON. The adjacency is stored as the
/// nonzero entries of the upper triangle plus diagonal.
pub fn write_condensed(
    path: impl AsRef<Path>,
    cg: &CondensedGraph,
    config: serde_json::Value,
    seed: u64,
) -> Result<()> {
    let path = path.as_ref();
    let n = cg.num_nodes();
    let mut adjacency = Vec::new();
    for i in 0..n {
        for j in i..n {
            let w = cg.adjacency[[i, j]];
            if w != 0.0 {
                adjacency.push((i as u32, j as u32, w));
            }
        }
    }
    let file = CondensedFile {
        num_nodes: n,
        adjacency,
        features: cg
            .features
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        labels: cg.labels.clone(),
        splits: cg.splits.iter().map(|s| s.as_str().to_string()).collect(),
        provenance: cg.provenance.clone(),
        config,
        seed,
    };
    let text = serde_json::to_string_pretty(&file).expect("condensed graph serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a condensed-graph file. Returns the graph plus the embedded config
/// and seed. The class count is recovered from the labels; evaluation
/// overrides it with the original dataset's count.
pub fn read_condensed(path: impl AsRef<Path>) -> Result<(CondensedGraph, serde_json::Value, u64)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CondensedFile = serde_json::from_str(&text)
        .map_err(|e| Error::data_at(path, e.line(), e.to_string()))?;
    let n = file.num_nodes;
    let mut adjacency = Array2::<f64>::zeros((n, n));
    for &(i, j, w) in &file.adjacency {
        if i as usize >= n || j as usize >= n || i > j {
            return Err(Error::data(format!(
                "{}: bad adjacency entry ({i}, {j})",
                path.display()
            )));
        }
        adjacency[[i as usize, j as usize]] = w;
        adjacency[[j as usize, i as usize]] = w;
    }
    if file.features.len() != n || file.labels.len() != n || file.splits.len() != n {
        return Err(Error::data(format!(
            "{}: row counts disagree with num_nodes {n}",
            path.display()
        )));
    }
    let d = file.features.first().map(|r| r.len()).unwrap_or(0);
    let mut features = Array2::<f32>::zeros((n, d));
    for (i, row) in file.features.iter().enumerate() {
        if row.len() != d {
            return Err(Error::data(format!(
                "{}: ragged feature rows",
                path.display()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    let mut splits = Vec::with_capacity(n);
    for s in &file.splits {
        splits.push(SplitTag::parse(s).ok_or_else(|| {
            Error::data(format!("{}: unknown split tag {s:?}", path.display()))
        })?);
    }
    let num_classes = file.labels.iter().map(|&c| c as usize + 1).max().unwrap_or(1);
    Ok((
        CondensedGraph {
            adjacency,
            features,
            labels: file.labels,
            splits,
            provenance: file.provenance,
            num_classes,
        },
        file.config,
        file.seed,
    ))
}

const DOT_PALETTE: [&str; 10] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
    "#ccb974", "#64b5cd",
];

/// Graphviz export; node fill color encodes the class.
pub fn export_dot(cg: &CondensedGraph) -> String {
    let mut out = String::from("graph condensed {\n  node [style=filled, shape=circle];\n");
    let max_w = cg
        .adjacency
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for i in 0..cg.num_nodes() {
        let color = DOT_PALETTE[cg.labels[i] as usize % DOT_PALETTE.len()];
        out.push_str(&format!(
            "  n{i} [label=\"{i}\", fillcolor=\"{color}\", tooltip=\"class {} / {}\"];\n",
            cg.labels[i], cg.splits[i]
        ));
    }
    for i in 0..cg.num_nodes() {
        for j in i..cg.num_nodes() {
            let w = cg.adjacency[[i, j]];
            if w > 0.0 {
                let width = 0.5 + 2.5 * w / max_w;
                out.push_str(&format!("  n{i} -- n{j} [penwidth={width:.2}];\n"));
            }
        }
    }
    out.push_str("}\n");
    out
}
