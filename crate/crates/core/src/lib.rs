//! Graph condensation via nonnegative multi-view RESCAL decomposition.
//!
//! The pipeline: stack the adjacency matrix with randomly edge-perturbed
//! copies into a third-order tensor, fit a nonnegative sparse RESCAL model
//! to its observed entries, and read a small synthetic graph out of the
//! learned factors — structure from the averaged core tensor, node
//! attributes from clustering the factor rows. A 2-layer GCN (or SGC)
//! trained on the condensed graph and tested on the original measures how
//! much signal survived.

pub mod condense;
pub mod config;
pub mod decompose;
pub mod error;
pub mod eval;
pub mod graph;
pub mod multiview;
pub mod pipeline;
pub mod seed;
pub mod sparse;

pub use condense::{condense, CondensedGraph};
pub use config::{GridSpec, RunConfig};
pub use decompose::{decompose, Decomposition, Factors};
pub use error::{Error, Result};
pub use eval::{train_eval, EvalConfig, EvalReport};
pub use graph::{condensed_size, Graph, GraphStats, SplitTag, Task};
pub use multiview::{build_tensor, sample_negatives, MultiViewTensor, PerturbSpec};
