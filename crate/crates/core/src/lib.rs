//! Streaming dictionary learning for non-stationary data.
//!
//! The crate implements fixed-size online dictionary learning (ODL) and its
//! neurogenetic extension (NODL), which grows the dictionary when the
//! reconstruction quality of incoming batches drops and removes weak
//! elements through an l1/l2 group-sparsity penalty in the dictionary update.
//!
//! Layout:
//! - [`numerics`]: proximal operators and the non-zero-count lambda search.
//! - [`sparse_coding`]: LASSO coordinate descent and sparsity-targeted encoding.
//! - [`learner`]: dictionary, memory, and the per-batch learning loop.
//! - [`metrics`]: Pearson, Spearman and MSE of reconstructions.
//! - [`datagen`]: two-domain synthetic data with disjoint supports.
//! - [`harness`]: experiment runner, support-preservation check, CSV I/O.

pub mod datagen;
pub mod error;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod numerics;
pub mod sparse_coding;

pub use datagen::{SampleSet, SyntheticData, SyntheticSpec};
pub use error::{Error, Result};
pub use harness::{
    run_experiment, verify_lemma1, DataSource, ExperimentConfig, ExperimentReport, Lemma1Report,
};
pub use learner::{
    BatchMetrics, Dictionary, LearnerConfig, LearnerState, Memory, UpdateStats, Variant,
};
pub use metrics::MetricRecord;
pub use numerics::{LambdaSearch, SparsityTarget};
pub use sparse_coding::{Code, Encoder};
