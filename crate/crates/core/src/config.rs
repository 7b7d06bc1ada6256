//! Run configuration and hyperparameter grids.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuning grids used by the evaluation protocol.
pub mod grids {
    pub const LEARNING_RATES: [f64; 4] = [0.1, 0.01, 0.001, 0.0001];
    pub const WEIGHT_DECAYS: [f64; 4] = [0.0, 0.01, 0.001, 0.0001];
    pub const PERTURB_PROBS: [f64; 4] = [0.05, 0.1, 0.15, 0.2];
    /// Total slice counts (1 = single view).
    pub const TOTAL_VIEWS: [usize; 5] = [1, 2, 3, 4, 5];
}

fn d_ratio() -> f64 {
    0.01
}
fn d_views() -> usize {
    2
}
fn d_prob() -> f64 {
    0.1
}
fn d_dec_lr() -> f64 {
    0.01
}
fn d_batch() -> usize {
    8192
}
fn d_dec_epochs() -> usize {
    200
}
fn d_tol() -> f64 {
    1e-7
}
fn d_eval_lr() -> f64 {
    0.01
}
fn d_eval_wd() -> f64 {
    5e-4
}
fn d_eval_epochs() -> usize {
    600
}
fn d_hidden() -> usize {
    256
}
fn d_runs() -> usize {
    10
}
fn d_model() -> String {
    "gcn".into()
}
fn d_assign() -> String {
    "kmeans".into()
}
fn d_kmeans_iters() -> usize {
    20
}
fn d_true() -> bool {
    true
}

/// Every knob of a condensation + evaluation run. Serializable so the fully
/// resolved configuration can be embedded in every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Default output directory; the CLI's --out overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Condensation ratio r; the condensed size is ~ r * N.
    #[serde(default = "d_ratio")]
    pub ratio: f64,
    /// Number of augmented views K (total slices = K + 1).
    #[serde(default = "d_views")]
    pub views: usize,
    #[serde(default = "d_prob")]
    pub drop_prob: f64,
    #[serde(default = "d_prob")]
    pub add_prob: f64,
    #[serde(default = "d_dec_lr")]
    pub dec_learning_rate: f64,
    #[serde(default)]
    pub dec_weight_decay: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_dec_epochs")]
    pub dec_epochs: usize,
    #[serde(default = "d_tol")]
    pub tolerance: f64,
    #[serde(default = "d_eval_lr")]
    pub eval_learning_rate: f64,
    #[serde(default = "d_eval_wd")]
    pub eval_weight_decay: f64,
    #[serde(default = "d_eval_epochs")]
    pub eval_epochs: usize,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default = "d_runs")]
    pub runs: usize,
    #[serde(default = "d_model")]
    pub model: String,
    #[serde(default = "d_assign")]
    pub assign: String,
    #[serde(default = "d_kmeans_iters")]
    pub kmeans_iters: usize,
    #[serde(default)]
    pub edge_threshold: Option<f64>,
    #[serde(default = "d_true")]
    pub feature_norm: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub allow_off_grid: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    /// Hard validation errors plus soft warnings for values off the usual
    /// tuning ranges.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::config(format!(
                "ratio must be in (0, 1), got {}",
                self.ratio
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.tolerance <= 0.0 && !self.tolerance.is_infinite() {
            return Err(Error::config("tolerance must be positive"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("hidden must be at least 1"));
        }
        if self.kmeans_iters == 0 {
            return Err(Error::config("kmeans_iters must be at least 1"));
        }
        if self.deterministic && self.seed.is_none() {
            return Err(Error::config("deterministic mode requires an explicit seed"));
        }

        let mut warnings = Vec::new();
        if self.ratio > 0.2 {
            warnings.push(format!(
                "ratio {} is far above typical condensation ratios",
                self.ratio
            ));
        }
        if !grids::TOTAL_VIEWS.contains(&(self.views + 1)) {
            warnings.push(format!(
                "views={} gives {} total slices, outside the tuned range {:?}",
                self.views,
                self.views + 1,
                grids::TOTAL_VIEWS
            ));
        }
        for (name, p) in [("drop_prob", self.drop_prob), ("add_prob", self.add_prob)] {
            if p != 0.0 && !grids::PERTURB_PROBS.contains(&p) {
                warnings.push(format!(
                    "{name}={p} is off the tuned grid {:?}",
                    grids::PERTURB_PROBS
                ));
            }
        }
        for (name, lr) in [
            ("dec_learning_rate", self.dec_learning_rate),
            ("eval_learning_rate", self.eval_learning_rate),
        ] {
            if !grids::LEARNING_RATES.contains(&lr) {
                warnings.push(format!(
                    "{name}={lr} is off the tuned grid {:?}",
                    grids::LEARNING_RATES
                ));
            }
        }
        Ok(warnings)
    }

    /// Copy with the seed pinned, for embedding into output files.
    pub fn resolved(&self, seed: u64) -> RunConfig {
        RunConfig {
            seed: Some(seed),
            ..self.clone()
        }
    }

    pub fn resolved_value(&self, seed: u64) -> serde_json::Value {
        serde_json::to_value(self.resolved(seed)).expect("config serializes")
    }

    /// FNV hash of the resolved configuration, used in error reports.
    pub fn hash(&self, seed: u64) -> u64 {
        let text = serde_json::to_string(&self.resolved(seed)).expect("config serializes");
        let mut h = crate::graph::Fnv::new();
        h.write_bytes(text.as_bytes());
        h.finish()
    }
}

/// Candidate values per hyperparameter for grid search. Empty lists fall
/// back to the base config's single value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub dec_learning_rate: Vec<f64>,
    #[serde(default)]
    pub dec_weight_decay: Vec<f64>,
    #[serde(default)]
    pub eval_learning_rate: Vec<f64>,
    #[serde(default)]
    pub eval_weight_decay: Vec<f64>,
    #[serde(default)]
    pub views: Vec<usize>,
    #[serde(default)]
    pub drop_prob: Vec<f64>,
    #[serde(default)]
    pub add_prob: Vec<f64>,
}

impl GridSpec {
    /// Reject values outside the published tuning grids unless explicitly
    /// allowed.
    pub fn validate(&self, allow_off_grid: bool) -> Result<()> {
        if allow_off_grid {
            return Ok(());
        }
        let check_f = |name: &str, values: &[f64], grid: &[f64]| -> Result<()> {
            for v in values {
                if !grid.contains(v) {
                    return Err(Error::config(format!(
                        "{name} value {v} is off the tuning grid {grid:?}; pass --allow-off-grid to keep it"
                    )));
                }
            }
            Ok(())
        };
        check_f("dec_learning_rate", &self.dec_learning_rate, &grids::LEARNING_RATES)?;
        check_f("eval_learning_rate", &self.eval_learning_rate, &grids::LEARNING_RATES)?;
        check_f("dec_weight_decay", &self.dec_weight_decay, &grids::WEIGHT_DECAYS)?;
        check_f("eval_weight_decay", &self.eval_weight_decay, &grids::WEIGHT_DECAYS)?;
        check_f("drop_prob", &self.drop_prob, &grids::PERTURB_PROBS)?;
        check_f("add_prob", &self.add_prob, &grids::PERTURB_PROBS)?;
        for &v in &self.views {
            if !grids::TOTAL_VIEWS.contains(&(v + 1)) {
                return Err(Error::config(format!(
                    "views value {v} gives {} total slices, outside {:?}",
                    v + 1,
                    grids::TOTAL_VIEWS
                )));
            }
        }
        Ok(())
    }

    pub fn num_combinations(&self) -> usize {
        let len = |v: usize| v.max(1);
        len(self.dec_learning_rate.len())
            * len(self.dec_weight_decay.len())
            * len(self.eval_learning_rate.len())
            * len(self.eval_weight_decay.len())
            * len(self.views.len())
            * len(self.drop_prob.len())
            * len(self.add_prob.len())
    }

    /// Cartesian product over the non-empty axes, in a fixed nesting order.
    pub fn combinations(&self, base: &RunConfig) -> Vec<RunConfig> {
        let or_f = |v: &[f64], fallback: f64| -> Vec<f64> {
            if v.is_empty() {
                vec![fallback]
            } else {
                v.to_vec()
            }
        };
        let or_u = |v: &[usize], fallback: usize| -> Vec<usize> {
            if v.is_empty() {
                vec![fallback]
            } else {
                v.to_vec()
            }
        };
        let dec_lrs = or_f(&self.dec_learning_rate, base.dec_learning_rate);
        let dec_wds = or_f(&self.dec_weight_decay, base.dec_weight_decay);
        let eval_lrs = or_f(&self.eval_learning_rate, base.eval_learning_rate);
        let eval_wds = or_f(&self.eval_weight_decay, base.eval_weight_decay);
        let views = or_u(&self.views, base.views);
        let drops = or_f(&self.drop_prob, base.drop_prob);
        let adds = or_f(&self.add_prob, base.add_prob);
        let mut out = Vec::with_capacity(self.num_combinations());
        for &v in &views {
            for &dl in &dec_lrs {
                for &dw in &dec_wds {
                    for &pr in &drops {
                        for &pa in &adds {
                            for &el in &eval_lrs {
                                for &ew in &eval_wds {
                                    out.push(RunConfig {
                                        views: v,
                                        dec_learning_rate: dl,
                                        dec_weight_decay: dw,
                                        drop_prob: pr,
                                        add_prob: pa,
                                        eval_learning_rate: el,
                                        eval_weight_decay: ew,
                                        ..base.clone()
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
