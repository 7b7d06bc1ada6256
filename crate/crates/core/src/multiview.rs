//! Multi-view tensor construction.
//!
//! The decomposition input is a stack of K+1 adjacency views: slice 0 is the
//! original adjacency, slices 1..=K are randomly perturbed copies (edges
//! dropped with probability `drop_prob`, then absent pairs added with
//! probability `add_prob`). Entries are stored sparsely as ordered index
//! pairs; every undirected edge contributes both orientations. Negative
//! samples (zero entries) are drawn once per slice in 1:1 proportion to the
//! positives and reused by every training epoch.

use std::collections::HashSet;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::graph::{Fnv, Graph};
use crate::seed::{self, stage};

/// Edge perturbation parameters for one view.
#[derive(Debug, Clone, Copy)]
pub struct PerturbSpec {
    /// Probability of dropping each original edge.
    pub drop_prob: f64,
    /// Probability of adding each absent pair.
    pub add_prob: f64,
    pub seed: u64,
}

impl PerturbSpec {
    /// Warnings for probabilities outside the recommended [0.05, 0.2] range.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, p) in [("drop_prob", self.drop_prob), ("add_prob", self.add_prob)] {
            if p != 0.0 && !(0.05..=0.2).contains(&p) {
                out.push(format!(
                    "{name}={p} is outside the recommended range [0.05, 0.2]"
                ));
            }
        }
        out
    }
}

/// One adjacency view: positive entries (value 1) and sampled negative
/// entries (value 0), both as ordered (i, j) pairs covering each orientation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slice {
    pub positives: Vec<(u32, u32)>,
    pub negatives: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiViewTensor {
    pub num_nodes: usize,
    pub slices: Vec<Slice>,
}

impl MultiViewTensor {
    /// Total slice count K+1.
    pub fn num_views(&self) -> usize {
        self.slices.len()
    }

    pub fn total_positives(&self) -> usize {
        self.slices.iter().map(|s| s.positives.len()).sum()
    }
}

/// Expand undirected pairs plus self-loops into a sorted ordered-pair list.
fn expand_symmetric(pairs: &[(u32, u32)], self_loops: &[u32]) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(2 * pairs.len() + self_loops.len());
    for &(u, v) in pairs {
        out.push((u, v));
        out.push((v, u));
    }
    for &u in self_loops {
        out.push((u, u));
    }
    out.sort_unstable();
    out
}

/// Apply one round of edge perturbation to the graph's undirected edge set.
///
/// Self-loops are not perturbed; they pass through to every view unchanged
/// (the add step draws from the N(N-1)/2 loop-free pair universe).
/// The add step samples a binomial count and then that many distinct absent
/// pairs, which matches per-pair Bernoulli trials in distribution without an
/// O(N²) scan.
pub fn perturb_view(g: &Graph, spec: &PerturbSpec) -> Vec<(u32, u32)> {
    let mut rng = seed::rng(spec.seed);
    let n = g.num_nodes as u64;
    let mut kept: Vec<(u32, u32)> = Vec::with_capacity(g.edges.len());
    for &e in &g.edges {
        if !(rng.random::<f64>() < spec.drop_prob) {
            kept.push(e);
        }
    }
    if spec.add_prob > 0.0 && n > 1 {
        let total_pairs = n * (n - 1) / 2;
        let absent = total_pairs - kept.len() as u64;
        let n_add = Binomial::new(absent, spec.add_prob)
            .expect("valid binomial parameters")
            .sample(&mut rng);
        let mut present: HashSet<(u32, u32)> = kept.iter().copied().collect();
        if n_add * 4 >= absent.max(1) {
            // dense regime: enumerate the absent pairs and take a prefix of a
            // seeded shuffle so the draw stays uniform
            let mut pool: Vec<(u32, u32)> = Vec::with_capacity(absent as usize);
            for u in 0..g.num_nodes as u32 {
                for v in (u + 1)..g.num_nodes as u32 {
                    if !present.contains(&(u, v)) {
                        pool.push((u, v));
                    }
                }
            }
            partial_shuffle(&mut pool, n_add as usize, &mut rng);
            kept.extend(pool.into_iter().take(n_add as usize));
        } else {
            let mut added = 0u64;
            while added < n_add {
                let u = rng.random_range(0..g.num_nodes as u32);
                let v = rng.random_range(0..g.num_nodes as u32);
                if u == v {
                    continue;
                }
                let key = (u.min(v), u.max(v));
                if present.insert(key) {
                    kept.push(key);
                    added += 1;
                }
            }
        }
    }
    kept.sort_unstable();
    kept
}

/// In-place partial Fisher-Yates: after the call the first `k` elements are
/// a uniform draw without replacement.
fn partial_shuffle<T>(items: &mut [T], k: usize, rng: &mut impl Rng) {
    let n = items.len();
    for i in 0..k.min(n.saturating_sub(1)) {
        let j = rng.random_range(i..n);
        items.swap(i, j);
    }
}

/// Build the K+1 view tensor. Slice 0 is the unperturbed adjacency; the K
/// augmented views use seeds derived per slice so generation order (or
/// parallelism) cannot change the result.
pub fn build_tensor(g: &Graph, augmented_views: usize, spec: &PerturbSpec) -> MultiViewTensor {
    let mut slices = Vec::with_capacity(augmented_views + 1);
    slices.push(Slice {
        positives: expand_symmetric(&g.edges, &g.self_loops),
        negatives: Vec::new(),
    });
    for k in 0..augmented_views {
        let view_spec = PerturbSpec {
            seed: seed::derive_indexed(spec.seed, stage::MULTIVIEW, k as u64),
            ..*spec
        };
        let pairs = perturb_view(g, &view_spec);
        slices.push(Slice {
            positives: expand_symmetric(&pairs, &g.self_loops),
            negatives: Vec::new(),
        });
    }
    MultiViewTensor {
        num_nodes: g.num_nodes,
        slices,
    }
}

/// Fill the negative entries of every slice: per slice, exactly
/// |positives| zero-valued ordered pairs, drawn uniformly off the diagonal
/// and stored with both orientations.
pub fn sample_negatives(tensor: &mut MultiViewTensor, master_seed: u64) -> Result<()> {
    let n = tensor.num_nodes as u64;
    for (k, slice) in tensor.slices.iter_mut().enumerate() {
        let needed = slice.positives.len();
        if needed == 0 {
            slice.negatives.clear();
            continue;
        }
        let mut pos_pairs: HashSet<(u32, u32)> = HashSet::with_capacity(needed / 2 + 1);
        for &(i, j) in &slice.positives {
            if i != j {
                pos_pairs.insert((i.min(j), i.max(j)));
            }
        }
        let total_pairs = n * (n - 1) / 2;
        let available = total_pairs - pos_pairs.len() as u64;
        if (needed as u64) > 2 * available {
            return Err(Error::data(format!(
                "slice {k}: cannot draw {needed} negative entries, only {} zero pairs \
                 available off the diagonal",
                available
            )));
        }
        let needed_pairs = needed.div_ceil(2);
        let mut rng = seed::rng(seed::derive_indexed(master_seed, stage::NEGATIVES, k as u64));
        let mut chosen: Vec<(u32, u32)> = Vec::with_capacity(needed_pairs);
        if (needed_pairs as u64) * 2 > available {
            let mut pool: Vec<(u32, u32)> = Vec::with_capacity(available as usize);
            for u in 0..tensor.num_nodes as u32 {
                for v in (u + 1)..tensor.num_nodes as u32 {
                    if !pos_pairs.contains(&(u, v)) {
                        pool.push((u, v));
                    }
                }
            }
            partial_shuffle(&mut pool, needed_pairs, &mut rng);
            chosen.extend(pool.into_iter().take(needed_pairs));
        } else {
            let mut taken: HashSet<(u32, u32)> = HashSet::with_capacity(needed_pairs);
            while chosen.len() < needed_pairs {
                let u = rng.random_range(0..tensor.num_nodes as u32);
                let v = rng.random_range(0..tensor.num_nodes as u32);
                if u == v {
                    continue;
                }
                let key = (u.min(v), u.max(v));
                if !pos_pairs.contains(&key) && taken.insert(key) {
                    chosen.push(key);
                }
            }
        }
        let mut negatives = Vec::with_capacity(2 * chosen.len());
        for (u, v) in chosen {
            negatives.push((u, v));
            negatives.push((v, u));
        }
        negatives.sort_unstable();
        // a slice with self-loop positives can have an odd entry count; drop
        // one orientation of the last pair to keep the 1:1 balance exact
        negatives.truncate(needed);
        slice.negatives = negatives;
    }
    Ok(())
}

/// Cache key over everything that determines the tensor.
pub fn cache_key(
    dataset_hash: u64,
    augmented_views: usize,
    drop_prob: f64,
    add_prob: f64,
    seed: u64,
) -> u64 {
    let mut h = Fnv::new();
    h.write_u64(dataset_hash);
    h.write_u64(augmented_views as u64);
    h.write_u64(drop_prob.to_bits());
    h.write_u64(add_prob.to_bits());
    h.write_u64(seed);
    h.finish()
}

const CACHE_MAGIC: u32 = 0x4743_5456; // "GCTV"
const CACHE_VERSION: u32 = 1;

/// Binary tensor cache: little-endian header {magic, version, key, N,
/// K_total, per-slice counts} followed by (i: u32, j: u32) pairs for the
/// positives and negatives of each slice.
pub fn write_cache(path: impl AsRef<Path>, tensor: &MultiViewTensor, key: u64) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_u32::<LittleEndian>(CACHE_MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(CACHE_VERSION).map_err(io_err)?;
    w.write_u64::<LittleEndian>(key).map_err(io_err)?;
    w.write_u32::<LittleEndian>(tensor.num_nodes as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(tensor.num_views() as u32).map_err(io_err)?;
    for slice in &tensor.slices {
        w.write_u64::<LittleEndian>(slice.positives.len() as u64).map_err(io_err)?;
        w.write_u64::<LittleEndian>(slice.negatives.len() as u64).map_err(io_err)?;
    }
    for slice in &tensor.slices {
        for list in [&slice.positives, &slice.negatives] {
            for &(i, j) in list {
                w.write_u32::<LittleEndian>(i).map_err(io_err)?;
                w.write_u32::<LittleEndian>(j).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

/// Read a tensor cache, returning the stored key alongside the tensor.
pub fn read_cache(path: impl AsRef<Path>) -> Result<(u64, MultiViewTensor)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);
    let magic = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if magic != CACHE_MAGIC {
        return Err(Error::data(format!("{}: not a tensor cache", path.display())));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != CACHE_VERSION {
        return Err(Error::data(format!(
            "{}: unsupported cache version {version}",
            path.display()
        )));
    }
    let key = r.read_u64::<LittleEndian>().map_err(io_err)?;
    let num_nodes = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let k_total = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut counts = Vec::with_capacity(k_total);
    for _ in 0..k_total {
        let p = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let ng = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        counts.push((p, ng));
    }
    let mut slices = Vec::with_capacity(k_total);
    for &(p, ng) in &counts {
        let mut read_pairs = |count: usize| -> Result<Vec<(u32, u32)>> {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let i = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
                let j = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
                out.push((i, j));
            }
            Ok(out)
        };
        let positives = read_pairs(p)?;
        let negatives = read_pairs(ng)?;
        slices.push(Slice {
            positives,
            negatives,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(Error::data(format!(
            "{}: trailing bytes after tensor payload",
            path.display()
        )));
    }
    Ok((key, MultiViewTensor { num_nodes, slices }))
}

/// Minimal graph for decomposition tests.
#[cfg(test)]
pub(crate) fn toy_graph(num_nodes: usize, edges: Vec<(u32, u32)>) -> Graph {
    use crate::graph::{SplitTag, Task};
    let labels = vec![0u16; num_nodes];
    let mut splits = vec![SplitTag::Test; num_nodes];
    splits[0] = SplitTag::Train;
    Graph {
        num_nodes,
        num_classes: 1,
        edges,
        self_loops: Vec::new(),
        features: ndarray::Array2::zeros((num_nodes, 2)),
        labels,
        splits,
        task: Task::Transductive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_perturbation_keeps_edges() {
        let g = toy_graph(5, vec![(0, 1), (1, 2), (3, 4)]);
        let spec = PerturbSpec {
            drop_prob: 0.0,
            add_prob: 0.0,
            seed: 9,
        };
        assert_eq!(perturb_view(&g, &spec), g.edges);
    }

    #[test]
    fn total_drop_empties_path_graph() {
        let g = toy_graph(4, vec![(0, 1), (1, 2), (2, 3)]);
        let spec = PerturbSpec {
            drop_prob: 1.0,
            add_prob: 0.0,
            seed: 3,
        };
        assert!(perturb_view(&g, &spec).is_empty());
    }

    #[test]
    fn add_prob_one_completes_graph() {
        let g = toy_graph(4, vec![(0, 1)]);
        let spec = PerturbSpec {
            drop_prob: 0.0,
            add_prob: 1.0,
            seed: 3,
        };
        assert_eq!(perturb_view(&g, &spec).len(), 6);
    }

    #[test]
    fn build_tensor_zero_views_single_slice() {
        let g = toy_graph(4, vec![(0, 1), (1, 2)]);
        let spec = PerturbSpec {
            drop_prob: 0.1,
            add_prob: 0.1,
            seed: 5,
        };
        let t = build_tensor(&g, 0, &spec);
        assert_eq!(t.num_views(), 1);
        assert_eq!(t.slices[0].positives, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn build_tensor_zero_perturbation_identical_slices() {
        let g = toy_graph(5, vec![(0, 1), (2, 3), (3, 4)]);
        let spec = PerturbSpec {
            drop_prob: 0.0,
            add_prob: 0.0,
            seed: 11,
        };
        let t = build_tensor(&g, 2, &spec);
        assert_eq!(t.num_views(), 3);
        assert_eq!(t.slices[0], t.slices[1]);
        assert_eq!(t.slices[0], t.slices[2]);
    }

    #[test]
    fn build_tensor_is_deterministic() {
        let g = toy_graph(30, (0..29).map(|i| (i, i + 1)).collect());
        let spec = PerturbSpec {
            drop_prob: 0.1,
            add_prob: 0.1,
            seed: 77,
        };
        let mut a = build_tensor(&g, 3, &spec);
        let mut b = build_tensor(&g, 3, &spec);
        sample_negatives(&mut a, 123).unwrap();
        sample_negatives(&mut b, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slices_are_symmetric_and_balanced() {
        let g = toy_graph(20, (0..19).map(|i| (i, i + 1)).collect());
        let spec = PerturbSpec {
            drop_prob: 0.2,
            add_prob: 0.1,
            seed: 4,
        };
        let mut t = build_tensor(&g, 2, &spec);
        sample_negatives(&mut t, 99).unwrap();
        for slice in &t.slices {
            assert_eq!(slice.negatives.len(), slice.positives.len());
            for list in [&slice.positives, &slice.negatives] {
                let set: HashSet<(u32, u32)> = list.iter().copied().collect();
                assert_eq!(set.len(), list.len(), "duplicate entries");
                for &(i, j) in list {
                    assert!(set.contains(&(j, i)), "({i},{j}) stored without mirror");
                }
            }
            let pos: HashSet<(u32, u32)> = slice.positives.iter().copied().collect();
            for e in &slice.negatives {
                assert!(!pos.contains(e), "negative collides with positive");
            }
        }
    }

    #[test]
    fn negatives_exact_count_and_zero_case() {
        let g = toy_graph(100, (0..5).map(|i| (i, i + 1)).collect());
        let spec = PerturbSpec {
            drop_prob: 0.0,
            add_prob: 0.0,
            seed: 1,
        };
        let mut t = build_tensor(&g, 0, &spec);
        sample_negatives(&mut t, 5).unwrap();
        assert_eq!(t.slices[0].negatives.len(), 10);

        let empty = toy_graph(100, Vec::new());
        let mut t = build_tensor(&empty, 0, &spec);
        sample_negatives(&mut t, 5).unwrap();
        assert!(t.slices[0].negatives.is_empty());
    }

    #[test]
    fn negatives_error_on_complete_graph() {
        let g = toy_graph(3, vec![(0, 1), (0, 2), (1, 2)]);
        let spec = PerturbSpec {
            drop_prob: 0.0,
            add_prob: 0.0,
            seed: 1,
        };
        let mut t = build_tensor(&g, 0, &spec);
        let err = sample_negatives(&mut t, 5).unwrap_err();
        assert!(err.to_string().contains("negative"));
    }

    #[test]
    fn expected_edge_count_matches_binomial_model() {
        // Monte-Carlo check of the drop/add expectation over 200 seeds.
        let n = 60;
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if (u + v) % 7 == 0 {
                    edges.push((u, v));
                }
            }
        }
        let m = edges.len() as f64;
        let g = toy_graph(n, edges);
        let total_pairs = (n * (n - 1) / 2) as f64;
        let (p_r, p_a) = (0.1, 0.05);
        let kept = m * (1.0 - p_r);
        let expect = kept + p_a * (total_pairs - kept);
        // variance: binomial drop + binomial add on the expected pool
        let var = m * p_r * (1.0 - p_r) + (total_pairs - kept) * p_a * (1.0 - p_a);
        let runs = 200;
        let mut sum = 0.0;
        for s in 0..runs {
            let spec = PerturbSpec {
                drop_prob: p_r,
                add_prob: p_a,
                seed: 1000 + s,
            };
            sum += perturb_view(&g, &spec).len() as f64;
        }
        let mean = sum / runs as f64;
        let sigma_mean = (var / runs as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * sigma_mean,
            "sample mean {mean} vs expectation {expect} (3σ = {})",
            3.0 * sigma_mean
        );
    }

    #[test]
    fn drop_only_mean_within_three_sigma() {
        // drop-only case: edge survival is Binomial(M, 1 - p_r)
        let n = 300;
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..(u + 5).min(n as u32 - 1) {
                edges.push((u, v));
            }
        }
        let m = edges.len() as f64;
        let g = toy_graph(n, edges);
        let p_r = 0.1;
        let runs = 200;
        let mut sum = 0.0;
        for s in 0..runs {
            let spec = PerturbSpec {
                drop_prob: p_r,
                add_prob: 0.0,
                seed: 40_000 + s,
            };
            sum += perturb_view(&g, &spec).len() as f64;
        }
        let mean = sum / runs as f64;
        let expect = m * (1.0 - p_r);
        let sigma_mean = (m * p_r * (1.0 - p_r) / runs as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * sigma_mean,
            "sample mean {mean} vs binomial mean {expect}"
        );
    }

    #[test]
    fn cache_roundtrip() {
        let g = toy_graph(12, (0..11).map(|i| (i, i + 1)).collect());
        let spec = PerturbSpec {
            drop_prob: 0.1,
            add_prob: 0.1,
            seed: 8,
        };
        let mut t = build_tensor(&g, 2, &spec);
        sample_negatives(&mut t, 21).unwrap();
        let key = cache_key(g.content_hash(), 2, 0.1, 0.1, 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tensor.bin");
        write_cache(&path, &t, key).unwrap();
        let (key2, t2) = read_cache(&path).unwrap();
        assert_eq!(key, key2);
        assert_eq!(t, t2);
    }

    #[test]
    fn warnings_outside_recommended_range() {
        let spec = PerturbSpec {
            drop_prob: 0.5,
            add_prob: 0.1,
            seed: 0,
        };
        assert_eq!(spec.warnings().len(), 1);
        let ok = PerturbSpec {
            drop_prob: 0.1,
            add_prob: 0.2,
            seed: 0,
        };
        assert!(ok.warnings().is_empty());
    }
}
