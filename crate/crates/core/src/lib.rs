//! Graph convolutional network training with layer-wise neighbor sampling,
//! historical-activation control variates and Adam-type optimizers.
//!
//! The pipeline is: load a [`Dataset`], build the normalized propagation
//! matrix, then drive a [`Trainer`] that samples a minibatch, builds a
//! [`sampling::MinibatchPlan`], runs the control-variate forward and backward
//! passes and applies an [`optim`] update.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod repro;
pub mod sampling;
pub mod sbm;
pub mod trainer;

pub use dataset::{load_dataset, write_dataset, Dataset, LabeledSplit};
pub use dense::Dense;
pub use error::{Error, Result};
pub use graph::{build_normalized_propagation, Csr, Graph, SparsePropagation};
pub use model::{HistoricalCache, ModelParams};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use sampling::{SamplerConfig, SamplingMode};
pub use trainer::{train, TrainConfig, Trainer};

/// Environment variable that caps the worker threads used for dense and
/// sparse products.
pub const THREADS_ENV: &str = "CVE_GNN_THREADS";

/// Configures the global rayon pool once. `threads` wins over
/// [`THREADS_ENV`]; with neither set rayon picks its default. Later calls are
/// no-ops.
pub fn init_threads(threads: Option<usize>) {
    let n = threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|s| s.parse().ok()));
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}
