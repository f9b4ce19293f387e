//! Core building blocks for training, tuning, comparing and explaining binary
//! risk classifiers on tabular cohort data.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: schema, CSV ingestion, cleaning, categorical coding, scaling, splits.
//! - [`metrics`]: confusion matrices, per-class precision/recall/F1, accuracy, ROC/AUC.
//! - [`learners`]: SVM, random forest, depth-wise and leaf-wise boosting, MLP.
//! - [`tuning`]: stratified k-fold assignment and exhaustive grid search.
//! - [`relevance`]: boosted-tree split-count relevance and thresholded selection.
//! - [`explain`]: exact and sampled Shapley attributions, prediction partitions and
//!   plot-data tables.
//! - [`artifact`]: the versioned, self-contained model document.

pub mod artifact;
pub mod data;
pub mod error;
pub mod explain;
pub mod learners;
pub mod metrics;
pub mod relevance;
pub mod rng;
pub mod tuning;

pub use error::{Error, Result};
