//! Tabular classification toolkit built around a from-scratch random forest.
//!
//! The crate covers the full life cycle of a small clinical-style screening
//! experiment on mixed-type tabular data:
//!
//! - [`dataset`]: columnar tables with schemas, missingness masks, CSV I/O,
//!   sanitization, label binarization, stratified splitting, and scaling
//! - [`forest`]: CART trees with Gini splits, bagging, out-of-bag error,
//!   and OOB-driven `mtry` tuning
//! - [`impute`]: MissForest-style iterative imputation plus a mean/mode baseline
//! - [`balance`]: SMOTE minority oversampling
//! - [`select`]: permutation importance and Boruta shadow-feature selection
//! - [`pca`]: principal component analysis with a Jacobi eigensolver
//! - [`eval`]: confusion matrices, accuracy/precision/recall, ROC and AUC
//! - [`synthgen`]: a deterministic synthetic cohort generator with known
//!   ground truth, used as the test bed for the whole pipeline
//! - [`pipeline`]: end-to-end orchestration behind the `tabforest` CLI
//!
//! Everything is deterministic under a fixed seed: all randomness flows from
//! per-stage streams derived with [`rng::derive_seed`], and parallel tree
//! training yields bit-identical models for any worker count.

pub mod balance;
pub mod dataset;
pub mod eval;
pub mod forest;
pub mod impute;
pub mod pca;
pub mod pipeline;
pub mod rng;
pub mod select;
pub mod synthgen;

pub(crate) mod design;
