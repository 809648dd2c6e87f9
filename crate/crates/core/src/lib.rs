//! Tabular fraud-detection toolkit.
//!
//! The crate is organised as a pipeline of small, pure stages:
//!
//! * [`dataset`]: the [`LabeledDataset`](dataset::LabeledDataset) model, CSV ingest and synthetic fixtures.
//! * [`preprocess`]: undersampling, shuffling, stratified splits, Pearson correlation and IQR outlier removal.
//! * [`dimred`]: PCA, truncated SVD (both via one-sided Jacobi) and exact t-SNE.
//! * [`numerics`]: dense matrices, differentiable primitives, Adam and gradient checking.
//! * [`transformer`]: the feature-as-token self-attention encoder classifier.
//! * [`baselines`]: logistic regression, KNN, linear SVM, CART and an MLP behind [`Classifier`](baselines::Classifier).
//! * [`metrics`]: confusion matrices, precision/recall/F1, ROC curves and Mann-Whitney AUC.
//! * [`harness`]: experiment configs, the end-to-end benchmark and the `fraudbench` CLI.

// `!(x > 0.0)` guards are written that way so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dataset;
pub mod dimred;
mod codec;
mod error;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod preprocess;
pub mod transformer;

pub use error::{Error, Result};
