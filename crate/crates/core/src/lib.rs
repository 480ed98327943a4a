//! Self-validated ensemble modelling for small designed experiments.
//!
//! Models are fitted as ensembles of relaxed elastic-net fits, each trained
//! under fractionally random weights and tuned against the complementary
//! validation weights. On top of that sit a permutation whole-model test,
//! a mixture-constrained desirability optimiser with diverse candidate
//! selection, and a simulation harness for benchmarking settings.

pub mod cli;
pub mod data;
pub mod enet;
pub mod error;
pub mod expand;
pub mod linalg;
pub mod lnp;
pub mod optimize;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod svem;
pub mod wmt;

pub use data::{Column, ColumnData, Dataset};
pub use enet::Family;
pub use error::{Result, SvemError};
pub use expand::{build_expansion_spec, expand_rows, Coding, DesignMatrix, ExpansionSettings, ExpansionSpec};
pub use svem::{fit_svem, predict_svem, Objective, SvemConfig, SvemModel};
