//! Nonnegative sparse RESCAL decomposition.
//!
//! Every view of the tensor is modeled as `X_k ≈ U R_k Uᵀ` with a factor
//! matrix `U` shared across views and one core slice `R_k` per view. Only
//! the observed entries (positives plus sampled negatives) are reconstructed:
//! `x̃_ijk = u_iᵀ R_k u_j`. The loss is the mean squared error over observed
//! entries normalized by the sum of squared observed values, optimized with
//! mini-batch Adam. Nonnegativity is a hard constraint: factors start from
//! their absolute values and are clamped at zero by a ReLU at the end of
//! every epoch, which also drives many entries to exact zeros.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::multiview::MultiViewTensor;
use crate::seed::{self, stage};

/// Factor matrix `U` (num_nodes × rank) and core tensor (one rank × rank
/// slice per view). The core is stored with the view index as the leading
/// axis so each slice is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub u: Array2<f64>,
    pub core: Array3<f64>,
}

impl Factors {
    pub fn num_nodes(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn num_views(&self) -> usize {
        self.core.len_of(Axis(0))
    }

    pub fn core_slice(&self, k: usize) -> ArrayView2<'_, f64> {
        self.core.index_axis(Axis(0), k)
    }

    pub fn core_slice_mut(&mut self, k: usize) -> ArrayViewMut2<'_, f64> {
        self.core.index_axis_mut(Axis(0), k)
    }

    pub fn min_entry(&self) -> f64 {
        let mu = self.u.iter().copied().fold(f64::INFINITY, f64::min);
        let mc = self.core.iter().copied().fold(f64::INFINITY, f64::min);
        mu.min(mc)
    }

    fn all_finite(&self) -> bool {
        self.u.iter().all(|x| x.is_finite()) && self.core.iter().all(|x| x.is_finite())
    }

    fn relu_inplace(&mut self) {
        self.u.mapv_inplace(|x| if x > 0.0 { x } else { 0.0 });
        self.core.mapv_inplace(|x| if x > 0.0 { x } else { 0.0 });
    }
}

/// One observed tensor entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedEntry {
    pub i: u32,
    pub j: u32,
    pub k: u16,
    pub value: f64,
}

/// The training set: all observed entries plus the precomputed loss
/// denominator (sum of squared observed values).
#[derive(Debug, Clone)]
pub struct ObservedSet {
    pub num_nodes: usize,
    pub num_views: usize,
    pub entries: Vec<ObservedEntry>,
    pub sum_sq: f64,
}

impl ObservedSet {
    pub fn from_tensor(tensor: &MultiViewTensor) -> ObservedSet {
        let mut entries = Vec::with_capacity(
            tensor
                .slices
                .iter()
                .map(|s| s.positives.len() + s.negatives.len())
                .sum(),
        );
        let mut positives = 0usize;
        for (k, slice) in tensor.slices.iter().enumerate() {
            for &(i, j) in &slice.positives {
                entries.push(ObservedEntry {
                    i,
                    j,
                    k: k as u16,
                    value: 1.0,
                });
            }
            positives += slice.positives.len();
            for &(i, j) in &slice.negatives {
                entries.push(ObservedEntry {
                    i,
                    j,
                    k: k as u16,
                    value: 0.0,
                });
            }
        }
        ObservedSet {
            num_nodes: tensor.num_nodes,
            num_views: tensor.num_views(),
            entries,
            sum_sq: positives as f64,
        }
    }

    /// Arbitrary-valued entries, used by tests and recovery experiments.
    pub fn from_entries(num_nodes: usize, num_views: usize, entries: Vec<ObservedEntry>) -> ObservedSet {
        let sum_sq = entries.iter().map(|e| e.value * e.value).sum();
        ObservedSet {
            num_nodes,
            num_views,
            entries,
            sum_sq,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecomposeConfig {
    /// Number of latent components N′ (the condensed graph size).
    pub rank: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once |loss(t) - loss(t+1)| falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl DecomposeConfig {
    pub fn new(rank: usize) -> DecomposeConfig {
        DecomposeConfig {
            rank,
            learning_rate: 0.01,
            weight_decay: 0.0,
            batch_size: 8192,
            max_epochs: 200,
            tolerance: 1e-7,
            seed: 0,
        }
    }
}

/// Adam state plus the run bookkeeping (epoch counter, loss history).
/// Weight decay is decoupled: applied directly to the parameters at each
/// step, before the end-of-epoch projection.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub epoch: usize,
    pub loss_history: Vec<f64>,
    m_u: Array2<f64>,
    v_u: Array2<f64>,
    m_core: Array3<f64>,
    v_core: Array3<f64>,
}

impl OptimizerState {
    pub fn new(factors: &Factors, learning_rate: f64, weight_decay: f64) -> OptimizerState {
        OptimizerState {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            epoch: 0,
            loss_history: Vec::new(),
            m_u: Array2::zeros(factors.u.dim()),
            v_u: Array2::zeros(factors.u.dim()),
            m_core: Array3::zeros(factors.core.dim()),
            v_core: Array3::zeros(factors.core.dim()),
        }
    }

    fn apply(&mut self, factors: &mut Factors, g_u: &Array2<f64>, g_core: &Array3<f64>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let (lr, wd) = (self.learning_rate, self.weight_decay);
        let step_param = |theta: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= lr * (m_hat / (v_hat.sqrt() + eps)) + lr * wd * *theta;
        };
        Zip::from(&mut factors.u)
            .and(&mut self.m_u)
            .and(&mut self.v_u)
            .and(g_u)
            .for_each(|t, m, v, &g| step_param(t, m, v, g));
        Zip::from(&mut factors.core)
            .and(&mut self.m_core)
            .and(&mut self.v_core)
            .and(g_core)
            .for_each(|t, m, v, &g| step_param(t, m, v, g));
    }
}

/// Random nonnegative factors: uniform [0, 1) scaled by 1/√rank, then the
/// absolute value (a no-op for this distribution, applied for parity with
/// signed initializations).
pub fn init_factors(num_nodes: usize, rank: usize, num_views: usize, seed: u64) -> Result<Factors> {
    if rank >= num_nodes {
        return Err(Error::config(format!(
            "rank {rank} must be smaller than the node count {num_nodes} to condense"
        )));
    }
    let mut rng = seed::rng(seed);
    let scale = 1.0 / (rank as f64).sqrt();
    let mut draw = || (rng.random::<f64>() * scale).abs();
    let u = Array2::from_shape_simple_fn((num_nodes, rank), &mut draw);
    let core = Array3::from_shape_simple_fn((num_views, rank, rank), &mut draw);
    Ok(Factors { u, core })
}

/// Bilinear reconstruction of a single entry: `u_iᵀ R_k u_j`.
pub fn reconstruct_entry(factors: &Factors, i: usize, j: usize, k: usize) -> f64 {
    let u_i = factors.u.row(i);
    let u_j = factors.u.row(j);
    let r_k = factors.core_slice(k);
    let rank = factors.rank();
    let mut acc = 0.0;
    for a in 0..rank {
        let row = r_k.row(a);
        let mut inner = 0.0;
        for b in 0..rank {
            inner += row[b] * u_j[b];
        }
        acc += u_i[a] * inner;
    }
    acc
}

/// Normalized reconstruction loss: mean squared error over the observed
/// entries divided by the sum of squared observed values. Zero-valued
/// entries contribute to the numerator only.
pub fn reconstruction_loss(obs: &ObservedSet, factors: &Factors) -> Result<f64> {
    if obs.sum_sq <= 0.0 {
        return Err(Error::data(
            "reconstruction loss undefined: no positive observed entries",
        ));
    }
    let mut sq = 0.0;
    for e in &obs.entries {
        let pred = reconstruct_entry(factors, e.i as usize, e.j as usize, e.k as usize);
        let r = e.value - pred;
        sq += r * r;
    }
    Ok(sq / obs.entries.len() as f64 / obs.sum_sq)
}

/// Accumulate the gradient of the batch loss
/// `mean((x - x̃)²) / denom` into `g_u` / `g_core`.
fn accumulate_batch_gradients(
    factors: &Factors,
    batch: &[ObservedEntry],
    denom: f64,
    g_u: &mut Array2<f64>,
    g_core: &mut Array3<f64>,
) {
    let rank = factors.rank();
    let mut t1 = vec![0.0f64; rank];
    let mut t2 = vec![0.0f64; rank];
    let inv = 2.0 / (batch.len() as f64 * denom);
    for e in batch {
        let (i, j, k) = (e.i as usize, e.j as usize, e.k as usize);
        let u = &factors.u;
        let r_k = factors.core_slice(k);
        // t1 = R_k u_j, prediction = u_i · t1
        let mut pred = 0.0;
        for a in 0..rank {
            let row = r_k.row(a);
            let mut s = 0.0;
            for b in 0..rank {
                s += row[b] * u[[j, b]];
            }
            t1[a] = s;
            pred += u[[i, a]] * s;
        }
        let c = inv * (pred - e.value);
        // t2 = R_kᵀ u_i
        for b in 0..rank {
            let mut s = 0.0;
            for a in 0..rank {
                s += r_k[[a, b]] * u[[i, a]];
            }
            t2[b] = s;
        }
        for a in 0..rank {
            g_u[[i, a]] += c * t1[a];
        }
        for b in 0..rank {
            g_u[[j, b]] += c * t2[b];
        }
        let u_i_row = factors.u.row(i);
        let u_j_row = factors.u.row(j);
        let mut g_k = g_core.index_axis_mut(Axis(0), k);
        for a in 0..rank {
            let ca = c * u_i_row[a];
            let mut g_row = g_k.row_mut(a);
            for b in 0..rank {
                g_row[b] += ca * u_j_row[b];
            }
        }
    }
}

/// One epoch of mini-batch Adam over a fresh shuffle of the observed
/// entries, followed by the ReLU projection. Returns the full-data loss
/// evaluated after the projection.
pub fn train_epoch(
    factors: &mut Factors,
    obs: &ObservedSet,
    opt: &mut OptimizerState,
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<f64> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order: Vec<u32> = (0..obs.entries.len() as u32).collect();
    let mut rng = seed::rng(shuffle_seed);
    // Fisher-Yates
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut g_u = Array2::<f64>::zeros(factors.u.dim());
    let mut g_core = Array3::<f64>::zeros(factors.core.dim());
    let mut batch = Vec::with_capacity(batch_size.min(order.len()));
    for chunk in order.chunks(batch_size) {
        batch.clear();
        batch.extend(chunk.iter().map(|&ix| obs.entries[ix as usize]));
        g_u.fill(0.0);
        g_core.fill(0.0);
        accumulate_batch_gradients(factors, &batch, obs.sum_sq, &mut g_u, &mut g_core);
        opt.apply(factors, &g_u, &g_core);
    }
    if !factors.all_finite() {
        return Err(Error::numerical(format!(
            "non-finite factor entries after epoch {} (learning rate {} too high?)",
            opt.epoch + 1,
            opt.learning_rate
        )));
    }
    factors.relu_inplace();
    let loss = reconstruction_loss(obs, factors)?;
    if !loss.is_finite() {
        return Err(Error::numerical(format!(
            "non-finite loss after epoch {} (learning rate {} too high?)",
            opt.epoch + 1,
            opt.learning_rate
        )));
    }
    opt.epoch += 1;
    opt.loss_history.push(loss);
    Ok(loss)
}

/// A finished decomposition: factors plus the optimizer state that produced
/// them (the loss history lives on the optimizer).
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub factors: Factors,
    pub optimizer: OptimizerState,
}

impl Decomposition {
    pub fn loss_history(&self) -> &[f64] {
        &self.optimizer.loss_history
    }
}

/// Run the decomposition until the loss change drops below the tolerance or
/// `max_epochs` is reached. The observer sees the factors and loss after
/// every epoch boundary (post projection).
pub fn decompose_observed(
    obs: &ObservedSet,
    cfg: &DecomposeConfig,
    mut observer: impl FnMut(usize, &Factors, f64),
) -> Result<Decomposition> {
    let mut factors = init_factors(
        obs.num_nodes,
        cfg.rank,
        obs.num_views,
        seed::derive(cfg.seed, stage::FACTOR_INIT),
    )?;
    let mut opt = OptimizerState::new(&factors, cfg.learning_rate, cfg.weight_decay);
    let mut prev = reconstruction_loss(obs, &factors)?;
    for epoch in 1..=cfg.max_epochs {
        let shuffle_seed = seed::derive_indexed(cfg.seed, stage::SHUFFLE, epoch as u64);
        let loss = train_epoch(&mut factors, obs, &mut opt, cfg.batch_size, shuffle_seed)?;
        observer(epoch, &factors, loss);
        if (prev - loss).abs() < cfg.tolerance {
            break;
        }
        prev = loss;
    }
    Ok(Decomposition {
        factors,
        optimizer: opt,
    })
}

/// Decompose a multi-view tensor (positives and negatives must be filled).
pub fn decompose(tensor: &MultiViewTensor, cfg: &DecomposeConfig) -> Result<Decomposition> {
    let obs = ObservedSet::from_tensor(tensor);
    decompose_observed(&obs, cfg, |_, _, _| {})
}

/// Materialize every dense slice `U R_k Uᵀ`. Test oracle; quadratic in the
/// node count.
pub fn dense_reconstruct(factors: &Factors) -> Vec<Array2<f64>> {
    (0..factors.num_views())
        .map(|k| {
            let ur = factors.u.dot(&factors.core_slice(k));
            ur.dot(&factors.u.t())
        })
        .collect()
}

pub fn write_loss_csv(path: impl AsRef<Path>, history: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,loss\n");
    for (i, loss) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, loss));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

const CKPT_MAGIC: u32 = 0x4743_5444; // "GCTD"
const CKPT_VERSION: u32 = 1;

fn write_f64s<W: Write>(w: &mut W, data: &[f64]) -> std::io::Result<()> {
    for &x in data {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, len: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(r.read_f64::<LittleEndian>()?);
    }
    Ok(out)
}

/// Versioned little-endian checkpoint of factors + optimizer state.
pub fn write_checkpoint(path: impl AsRef<Path>, dec: &Decomposition) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        let f = &dec.factors;
        let o = &dec.optimizer;
        w.write_u32::<LittleEndian>(CKPT_MAGIC)?;
        w.write_u32::<LittleEndian>(CKPT_VERSION)?;
        w.write_u32::<LittleEndian>(f.num_nodes() as u32)?;
        w.write_u32::<LittleEndian>(f.rank() as u32)?;
        w.write_u32::<LittleEndian>(f.num_views() as u32)?;
        w.write_u64::<LittleEndian>(o.step)?;
        w.write_u64::<LittleEndian>(o.epoch as u64)?;
        for x in [o.learning_rate, o.weight_decay, o.beta1, o.beta2, o.epsilon] {
            w.write_f64::<LittleEndian>(x)?;
        }
        write_f64s(&mut w, f.u.as_slice().expect("contiguous"))?;
        write_f64s(&mut w, f.core.as_slice().expect("contiguous"))?;
        write_f64s(&mut w, o.m_u.as_slice().expect("contiguous"))?;
        write_f64s(&mut w, o.v_u.as_slice().expect("contiguous"))?;
        write_f64s(&mut w, o.m_core.as_slice().expect("contiguous"))?;
        write_f64s(&mut w, o.v_core.as_slice().expect("contiguous"))?;
        w.write_u64::<LittleEndian>(o.loss_history.len() as u64)?;
        write_f64s(&mut w, &o.loss_history)?;
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Decomposition> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let res: std::io::Result<Decomposition> = (|| {
        let magic = r.read_u32::<LittleEndian>()?;
        let version = r.read_u32::<LittleEndian>()?;
        if magic != CKPT_MAGIC || version != CKPT_VERSION {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad checkpoint header ({magic:#x}, v{version})"),
            ));
        }
        let n = r.read_u32::<LittleEndian>()? as usize;
        let rank = r.read_u32::<LittleEndian>()? as usize;
        let views = r.read_u32::<LittleEndian>()? as usize;
        let step = r.read_u64::<LittleEndian>()?;
        let epoch = r.read_u64::<LittleEndian>()? as usize;
        let learning_rate = r.read_f64::<LittleEndian>()?;
        let weight_decay = r.read_f64::<LittleEndian>()?;
        let beta1 = r.read_f64::<LittleEndian>()?;
        let beta2 = r.read_f64::<LittleEndian>()?;
        let epsilon = r.read_f64::<LittleEndian>()?;
        let arr2 = |data: Vec<f64>| Array2::from_shape_vec((n, rank), data).expect("shape");
        let arr3 =
            |data: Vec<f64>| Array3::from_shape_vec((views, rank, rank), data).expect("shape");
        let u = arr2(read_f64s(&mut r, n * rank)?);
        let core = arr3(read_f64s(&mut r, views * rank * rank)?);
        let m_u = arr2(read_f64s(&mut r, n * rank)?);
        let v_u = arr2(read_f64s(&mut r, n * rank)?);
        let m_core = arr3(read_f64s(&mut r, views * rank * rank)?);
        let v_core = arr3(read_f64s(&mut r, views * rank * rank)?);
        let hist_len = r.read_u64::<LittleEndian>()? as usize;
        let loss_history = read_f64s(&mut r, hist_len)?;
        Ok(Decomposition {
            factors: Factors { u, core },
            optimizer: OptimizerState {
                learning_rate,
                weight_decay,
                beta1,
                beta2,
                epsilon,
                step,
                epoch,
                loss_history,
                m_u,
                v_u,
                m_core,
                v_core,
            },
        })
    })();
    res.map_err(|e| Error::io(path, e))
}
