//! Graph data model, dataset ingestion and statistics.
//!
//! Datasets live in a directory of plain-text files (see [`Graph::load`]):
//!
//! ```text
//! meta.json     {"num_nodes": N, "num_classes": C, "feature_dim": d,
//!                "task": "transductive" | "inductive"}
//! edges.tsv     one "u<TAB>v" per line, undirected, 0-indexed
//! features.tsv  N lines of d tab-separated floats
//! labels.tsv    N lines, one class id each
//! splits.tsv    N lines, one of train | val | test | none
//! ```
//!
//! The `none` tag marks nodes that belong to no split (citation benchmarks
//! publish train/val/test sets that do not cover the full graph).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Transductive,
    Inductive,
}

/// Per-node split tag. Order matters: it is the deterministic tie-break
/// used by the assignment policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitTag {
    Train,
    Val,
    Test,
    Unlabeled,
}

pub const SPLIT_TAGS: [SplitTag; 4] = [
    SplitTag::Train,
    SplitTag::Val,
    SplitTag::Test,
    SplitTag::Unlabeled,
];

impl SplitTag {
    pub fn parse(s: &str) -> Option<SplitTag> {
        match s {
            "train" => Some(SplitTag::Train),
            "val" => Some(SplitTag::Val),
            "test" => Some(SplitTag::Test),
            "none" => Some(SplitTag::Unlabeled),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::Unlabeled => "none",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            SplitTag::Train => 0,
            SplitTag::Val => 1,
            SplitTag::Test => 2,
            SplitTag::Unlabeled => 3,
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Meta {
    num_nodes: usize,
    num_classes: usize,
    feature_dim: usize,
    task: Task,
}

/// A labeled undirected graph with node features and a train/val/test split.
///
/// Edges are stored canonically: one `(u, v)` pair with `u < v` per
/// undirected edge, plus an explicit list of self-loop endpoints.
#[derive(Debug, Clone)]
pub struct Graph {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub edges: Vec<(u32, u32)>,
    pub self_loops: Vec<u32>,
    pub features: Array2<f32>,
    pub labels: Vec<u16>,
    pub splits: Vec<SplitTag>,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_classes: usize,
    /// Percentage of nonzero adjacency entries; (i,j) and (j,i) both count.
    pub sparsity: f64,
    /// 8 bytes per stored directed edge index pair + 4 bytes per feature value.
    pub storage_bytes: u64,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Graph {
    /// Load and validate a dataset directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Graph> {
        let dir = dir.as_ref();
        let meta_path = dir.join("meta.json");
        let meta: Meta = serde_json::from_str(&read_to_string(&meta_path)?)
            .map_err(|e| Error::data_at(&meta_path, e.line(), e.to_string()))?;
        let n = meta.num_nodes;
        if n == 0 {
            return Err(Error::data_at(&meta_path, 1, "num_nodes must be positive"));
        }
        if meta.num_classes == 0 {
            return Err(Error::data_at(&meta_path, 1, "num_classes must be positive"));
        }

        let edges_path = dir.join("edges.tsv");
        let mut edges = Vec::new();
        let mut self_loops = Vec::new();
        let mut seen: HashSet<(u32, u32)> = HashSet::new();
        let mut loop_seen: HashSet<u32> = HashSet::new();
        for (lineno, line) in read_to_string(&edges_path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<u32> {
                tok.and_then(|t| t.parse::<u32>().ok()).ok_or_else(|| {
                    Error::data_at(&edges_path, lineno + 1, format!("bad edge line {line:?}"))
                })
            };
            let u = parse(it.next())?;
            let v = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::data_at(
                    &edges_path,
                    lineno + 1,
                    format!("bad edge line {line:?}"),
                ));
            }
            if u as usize >= n || v as usize >= n {
                return Err(Error::data_at(
                    &edges_path,
                    lineno + 1,
                    format!("edge endpoint out of range: {u} {v} (num_nodes {n})"),
                ));
            }
            if u == v {
                if loop_seen.insert(u) {
                    self_loops.push(u);
                }
            } else {
                let key = (u.min(v), u.max(v));
                if seen.insert(key) {
                    edges.push(key);
                }
            }
        }
        edges.sort_unstable();
        self_loops.sort_unstable();

        let feat_path = dir.join("features.tsv");
        let feat_text = read_to_string(&feat_path)?;
        let mut features = Array2::<f32>::zeros((n, meta.feature_dim));
        let mut rows = 0usize;
        for (lineno, line) in feat_text.lines().enumerate() {
            if rows >= n {
                return Err(Error::data_at(&feat_path, lineno + 1, "more rows than num_nodes"));
            }
            let mut col = 0usize;
            for tok in line.split_whitespace() {
                if col >= meta.feature_dim {
                    return Err(Error::data_at(
                        &feat_path,
                        lineno + 1,
                        format!("more than feature_dim={} values", meta.feature_dim),
                    ));
                }
                let v: f32 = tok.parse().map_err(|_| {
                    Error::data_at(&feat_path, lineno + 1, format!("bad float {tok:?}"))
                })?;
                features[[rows, col]] = v;
                col += 1;
            }
            if col != meta.feature_dim {
                return Err(Error::data_at(
                    &feat_path,
                    lineno + 1,
                    format!("expected {} values, found {col}", meta.feature_dim),
                ));
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::data_at(
                &feat_path,
                rows + 1,
                format!("row count {rows} != num_nodes {n}"),
            ));
        }

        let labels_path = dir.join("labels.tsv");
        let mut labels = Vec::with_capacity(n);
        for (lineno, line) in read_to_string(&labels_path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let c: usize = line.parse().map_err(|_| {
                Error::data_at(&labels_path, lineno + 1, format!("bad label {line:?}"))
            })?;
            if c >= meta.num_classes {
                return Err(Error::data_at(
                    &labels_path,
                    lineno + 1,
                    format!("label {c} out of range (num_classes {})", meta.num_classes),
                ));
            }
            labels.push(c as u16);
        }
        if labels.len() != n {
            return Err(Error::data_at(
                &labels_path,
                labels.len() + 1,
                format!("row count {} != num_nodes {n}", labels.len()),
            ));
        }

        let splits_path = dir.join("splits.tsv");
        let mut splits = Vec::with_capacity(n);
        for (lineno, line) in read_to_string(&splits_path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let tag = SplitTag::parse(line).ok_or_else(|| {
                Error::data_at(&splits_path, lineno + 1, format!("unknown split tag {line:?}"))
            })?;
            splits.push(tag);
        }
        if splits.len() != n {
            return Err(Error::data_at(
                &splits_path,
                splits.len() + 1,
                format!("row count {} != num_nodes {n}", splits.len()),
            ));
        }

        let g = Graph {
            num_nodes: n,
            num_classes: meta.num_classes,
            edges,
            self_loops,
            features,
            labels,
            splits,
            task: meta.task,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let mut train_classes = vec![false; self.num_classes];
        for i in 0..self.num_nodes {
            if self.splits[i] == SplitTag::Train {
                train_classes[self.labels[i] as usize] = true;
            }
        }
        if let Some(missing) = train_classes.iter().position(|seen| !seen) {
            return Err(Error::data(format!(
                "class {missing} has no training node"
            )));
        }
        Ok(())
    }

    /// Write the dataset directory back out in canonical form.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, contents: String| -> Result<()> {
            let path = dir.join(name);
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(contents.as_bytes()).map_err(|e| Error::io(&path, e))
        };
        let meta = Meta {
            num_nodes: self.num_nodes,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim(),
            task: self.task,
        };
        write("meta.json", serde_json::to_string_pretty(&meta).expect("meta json"))?;
        let mut edges = String::new();
        for &(u, v) in &self.edges {
            edges.push_str(&format!("{u}\t{v}\n"));
        }
        for &u in &self.self_loops {
            edges.push_str(&format!("{u}\t{u}\n"));
        }
        write("edges.tsv", edges)?;
        let mut feats = String::new();
        for row in self.features.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    feats.push('\t');
                }
                feats.push_str(&format!("{v}"));
                first = false;
            }
            feats.push('\n');
        }
        write("features.tsv", feats)?;
        write(
            "labels.tsv",
            self.labels.iter().map(|c| format!("{c}\n")).collect(),
        )?;
        write(
            "splits.tsv",
            self.splits.iter().map(|s| format!("{s}\n")).collect(),
        )
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Undirected edge count, self-loops included.
    pub fn num_edges(&self) -> usize {
        self.edges.len() + self.self_loops.len()
    }

    /// Nonzero adjacency entries: both orientations of each edge plus loops.
    pub fn nnz(&self) -> usize {
        2 * self.edges.len() + self.self_loops.len()
    }

    pub fn stats(&self) -> GraphStats {
        let n = self.num_nodes as f64;
        GraphStats {
            num_nodes: self.num_nodes,
            num_edges: self.num_edges(),
            num_classes: self.num_classes,
            sparsity: 100.0 * self.nnz() as f64 / (n * n),
            storage_bytes: 8 * self.nnz() as u64
                + 4 * (self.num_nodes * self.feature_dim()) as u64,
        }
    }

    pub fn nodes_in_split(&self, tag: SplitTag) -> Vec<u32> {
        (0..self.num_nodes as u32)
            .filter(|&i| self.splits[i as usize] == tag)
            .collect()
    }

    /// Node count that the condensation ratio applies to: the full graph for
    /// transductive tasks, the train split for inductive ones.
    pub fn condensation_base_count(&self) -> usize {
        match self.task {
            Task::Transductive => self.num_nodes,
            Task::Inductive => self.nodes_in_split(SplitTag::Train).len(),
        }
    }

    /// Subgraph induced by the train split, with nodes reindexed. Returns the
    /// subgraph and the original ids in new-index order.
    pub fn train_subgraph(&self) -> (Graph, Vec<u32>) {
        let keep = self.nodes_in_split(SplitTag::Train);
        let mut new_id = vec![u32::MAX; self.num_nodes];
        for (ni, &oi) in keep.iter().enumerate() {
            new_id[oi as usize] = ni as u32;
        }
        let mut edges = Vec::new();
        for &(u, v) in &self.edges {
            let (nu, nv) = (new_id[u as usize], new_id[v as usize]);
            if nu != u32::MAX && nv != u32::MAX {
                edges.push((nu.min(nv), nu.max(nv)));
            }
        }
        edges.sort_unstable();
        let mut self_loops = Vec::new();
        for &u in &self.self_loops {
            if new_id[u as usize] != u32::MAX {
                self_loops.push(new_id[u as usize]);
            }
        }
        self_loops.sort_unstable();
        let mut features = Array2::<f32>::zeros((keep.len(), self.feature_dim()));
        for (ni, &oi) in keep.iter().enumerate() {
            features.row_mut(ni).assign(&self.features.row(oi as usize));
        }
        let labels = keep.iter().map(|&i| self.labels[i as usize]).collect();
        let splits = vec![SplitTag::Train; keep.len()];
        (
            Graph {
                num_nodes: keep.len(),
                num_classes: self.num_classes,
                edges,
                self_loops,
                features,
                labels,
                splits,
                task: self.task,
            },
            keep,
        )
    }

    /// Stable content hash used for cache keys (FNV-1a over the structure).
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.num_nodes as u64);
        h.write_u64(self.num_classes as u64);
        h.write_u64(self.feature_dim() as u64);
        for &(u, v) in &self.edges {
            h.write_u64(((u as u64) << 32) | v as u64);
        }
        for &u in &self.self_loops {
            h.write_u64(u as u64);
        }
        for &c in &self.labels {
            h.write_u64(c as u64);
        }
        h.finish()
    }
}

/// FNV-1a, kept local so hashes are stable across toolchain versions.
pub(crate) struct Fnv(u64);

impl Fnv {
    pub fn new() -> Fnv {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Number of synthetic nodes for ratio `r`.
///
/// Published ratios are rounded to two significant figures, so a bare floor
/// of `r * n` can land one short of the intended size (e.g. 0.9% of 3327
/// is 29.943 for an intended 30). A slack of 0.1 nodes absorbs that quoting
/// error while keeping the floor semantics everywhere else.
pub fn condensed_size(n: usize, ratio: f64, num_classes: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!(
            "condensation ratio must be in (0, 1), got {ratio}"
        )));
    }
    let n_prime = (ratio * n as f64 + 0.1).floor() as usize;
    if n_prime < num_classes {
        return Err(Error::config(format!(
            "condensed size {n_prime} is smaller than the number of classes {num_classes} \
             (ratio {ratio} on {n} nodes)"
        )));
    }
    Ok(n_prime)
}
