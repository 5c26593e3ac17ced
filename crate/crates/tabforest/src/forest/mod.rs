//! From-scratch random forest classifier.
//!
//! CART trees with Gini splits, bootstrap sampling, per-split feature
//! subsampling (`mtry`), majority-vote prediction, out-of-bag error curves,
//! and OOB-driven `mtry` tuning. Tree `i` draws all of its randomness from a
//! ChaCha stream seeded by `derive_seed(config.seed, i)`, so fitting is
//! bit-reproducible for any thread count.
//!
//! Prediction ties resolve to the *last* class in class order. Binarized
//! diagnosis tables order their levels `[HC, NonHC]`, so a split vote goes
//! to the disease class — reporting a possible illness is preferred over
//! missing one.

mod oob;
mod tree;

pub use oob::{oob_error, oob_permutation_importance, tune_mtry, OobCurve, TuneResult};
pub use tree::{gini_impurity, LeafValue, SplitRule, TreeNode};

pub(crate) use oob::design_oob_importance;

use crate::dataset::{FeatureKind, Table};
use crate::design::{self, DesignError, DesignMatrix};
use crate::rng::{derive_seed, seeded_rng};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use tree::{FitTarget, GrowParams};

/// Number of candidate features drawn at each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mtry {
    /// floor(sqrt(#predictors)), the Breiman classification default.
    Auto,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub ntree: usize,
    pub mtry: Mtry,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { ntree: 500, mtry: Mtry::Auto, min_node_size: 1, max_depth: None, seed: 0 }
    }
}

impl ForestConfig {
    pub fn with_ntree(mut self, ntree: usize) -> Self {
        self.ntree = ntree;
        self
    }

    pub fn with_mtry(mut self, mtry: usize) -> Self {
        self.mtry = Mtry::Fixed(mtry);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn resolve_mtry(&self, n_predictors: usize) -> Result<usize, ForestError> {
        match self.mtry {
            Mtry::Auto => Ok(((n_predictors as f64).sqrt().floor() as usize).max(1)),
            Mtry::Fixed(m) => {
                if m == 0 || m > n_predictors {
                    Err(ForestError::MtryOutOfRange { mtry: m, n_predictors })
                } else {
                    Ok(m)
                }
            }
        }
    }
}

#[derive(Debug)]
pub enum ForestError {
    /// An impurity query on zero rows.
    EmptyNode,
    /// Training data holds fewer than two classes.
    DegenerateClass,
    /// Masked cell encountered while building the training design matrix.
    MaskedCell { row: usize, column: String },
    /// Masked predictor cell at prediction time.
    MissingAtPredict { row: usize, column: String },
    /// `tune_mtry` received an empty grid.
    EmptyGrid,
    MtryOutOfRange { mtry: usize, n_predictors: usize },
    NoPredictors,
    NoTarget,
    UnknownLevel { column: String, level: String },
    BadConfig(String),
    /// Predict-time table does not match the fitted feature layout.
    SchemaMismatch(String),
    Io(std::io::Error),
    BadModelFile(String),
}

impl fmt::Display for ForestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForestError::EmptyNode => write!(f, "impurity of an empty node"),
            ForestError::DegenerateClass => {
                write!(f, "training data must contain at least two classes")
            }
            ForestError::MaskedCell { row, column } => {
                write!(f, "masked training cell at row {row}, column `{column}`")
            }
            ForestError::MissingAtPredict { row, column } => {
                write!(f, "masked cell at prediction time: row {row}, column `{column}`")
            }
            ForestError::EmptyGrid => write!(f, "mtry grid is empty"),
            ForestError::MtryOutOfRange { mtry, n_predictors } => {
                write!(f, "mtry {mtry} outside [1, {n_predictors}]")
            }
            ForestError::NoPredictors => write!(f, "no predictor columns"),
            ForestError::NoTarget => write!(f, "table has no target column"),
            ForestError::UnknownLevel { column, level } => {
                write!(f, "undeclared level `{level}` in column `{column}`")
            }
            ForestError::BadConfig(msg) => write!(f, "bad forest config: {msg}"),
            ForestError::SchemaMismatch(msg) => write!(f, "schema mismatch: {msg}"),
            ForestError::Io(e) => write!(f, "i/o error: {e}"),
            ForestError::BadModelFile(msg) => write!(f, "bad model file: {msg}"),
        }
    }
}

impl std::error::Error for ForestError {}

impl From<std::io::Error> for ForestError {
    fn from(e: std::io::Error) -> Self {
        ForestError::Io(e)
    }
}

fn design_err_at_fit(e: DesignError) -> ForestError {
    match e {
        DesignError::MaskedCell { row, column } => ForestError::MaskedCell { row, column },
        DesignError::NoTarget => ForestError::NoTarget,
        DesignError::NoPredictors => ForestError::NoPredictors,
        DesignError::UnknownLevel { column, level } => {
            ForestError::UnknownLevel { column, level }
        }
    }
}

fn design_err_at_predict(e: DesignError) -> ForestError {
    match e {
        DesignError::MaskedCell { row, column } => ForestError::MissingAtPredict { row, column },
        other => design_err_at_fit(other),
    }
}

/// Prediction for one row: the majority label and the per-class vote shares.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: String,
    /// One entry per class in the forest's class order; sums to 1.
    pub vote_fractions: Vec<f64>,
}

impl Prediction {
    /// Vote share of a named class (0.0 if the class is unknown).
    pub fn fraction_of(&self, classes: &[String], class: &str) -> f64 {
        classes
            .iter()
            .position(|c| c == class)
            .map_or(0.0, |i| self.vote_fractions[i])
    }
}

/// Fitted ensemble with in-bag bookkeeping for OOB scoring.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<TreeNode>,
    /// Per tree, the bootstrap draw list (length = training rows).
    in_bag: Vec<Vec<u32>>,
    config: ForestConfig,
    /// Resolved mtry actually used.
    mtry_used: usize,
    classes: Vec<String>,
    n_train: usize,
    /// Predictor layout the forest was fitted on.
    features: Vec<(String, FeatureKind)>,
}

/// Fit a forest on a fully observed training table.
pub fn fit_forest(train: &Table, config: &ForestConfig) -> Result<RandomForest, ForestError> {
    if config.ntree == 0 {
        return Err(ForestError::BadConfig("ntree must be at least 1".into()));
    }
    if config.min_node_size == 0 {
        return Err(ForestError::BadConfig("min_node_size must be at least 1".into()));
    }
    let (design, target) = design::predictors_and_target(train).map_err(design_err_at_fit)?;
    if target.present_classes() < 2 {
        return Err(ForestError::DegenerateClass);
    }
    let mtry = config.resolve_mtry(design.n_features())?;
    let fit_target = FitTarget::Classes { codes: &target.codes, n_classes: target.n_classes() };

    let grown = fit_trees_parallel(&design, &fit_target, config, mtry);
    let (trees, in_bag) = grown.into_iter().unzip();

    Ok(RandomForest {
        trees,
        in_bag,
        config: config.clone(),
        mtry_used: mtry,
        classes: target.levels,
        n_train: design.n_rows,
        features: feature_kinds(train),
    })
}

fn feature_kinds(table: &Table) -> Vec<(String, FeatureKind)> {
    table
        .schema()
        .columns()
        .iter()
        .filter(|spec| spec.kind.is_predictor())
        .map(|spec| (spec.name.clone(), spec.kind.clone()))
        .collect()
}

fn fit_trees_parallel(
    design: &DesignMatrix,
    target: &FitTarget<'_>,
    config: &ForestConfig,
    mtry: usize,
) -> Vec<(TreeNode, Vec<u32>)> {
    let params =
        GrowParams { mtry, min_node_size: config.min_node_size, max_depth: config.max_depth };
    let n = design.n_rows;
    (0..config.ntree)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(derive_seed(config.seed, i as u64));
            let in_bag: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
            let root = tree::grow_tree(design, target, in_bag.clone(), &params, &mut rng);
            (root, in_bag)
        })
        .collect()
}

impl RandomForest {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn mtry_used(&self) -> usize {
        self.mtry_used
    }

    pub fn ntree(&self) -> usize {
        self.trees.len()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub(crate) fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub(crate) fn in_bag(&self) -> &[Vec<u32>] {
        &self.in_bag
    }

    /// Names of the predictors the forest was fitted on, in design order.
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Majority-vote predictions for every row of a table. The table must
    /// expose the same predictor columns the forest was fitted on; its
    /// target column (if any) is ignored.
    pub fn predict_table(&self, table: &Table) -> Result<Vec<Prediction>, ForestError> {
        let design = self.checked_design(table)?;
        Ok((0..design.n_rows).map(|row| self.predict_design_row(&design, row)).collect())
    }

    /// Prediction for a single row.
    pub fn predict_row(&self, table: &Table, row: usize) -> Result<Prediction, ForestError> {
        let sub = table.select_rows(&[row]);
        // keep the reported row index meaningful for masked-cell errors
        let design = design::predictors_only(&sub).map_err(|e| match e {
            DesignError::MaskedCell { column, .. } => {
                ForestError::MissingAtPredict { row, column }
            }
            other => design_err_at_predict(other),
        })?;
        self.check_signature(&design)?;
        Ok(self.predict_design_row(&design, 0))
    }

    pub(crate) fn checked_design(&self, table: &Table) -> Result<DesignMatrix, ForestError> {
        let design = design::predictors_only(table).map_err(design_err_at_predict)?;
        self.check_signature(&design)?;
        Ok(design)
    }

    fn check_signature(&self, design: &DesignMatrix) -> Result<(), ForestError> {
        let expect: Vec<(String, Option<u32>)> = self
            .features
            .iter()
            .map(|(name, kind)| {
                let levels = match kind {
                    FeatureKind::Categorical { levels } | FeatureKind::Target { levels } => {
                        Some(levels.len() as u32)
                    }
                    _ => None,
                };
                (name.clone(), levels)
            })
            .collect();
        if design.signature() != expect {
            return Err(ForestError::SchemaMismatch(format!(
                "fitted on predictors {:?}, given {:?}",
                expect.iter().map(|(n, _)| n).collect::<Vec<_>>(),
                design.names
            )));
        }
        Ok(())
    }

    pub(crate) fn predict_design_row(&self, design: &DesignMatrix, row: usize) -> Prediction {
        let mut votes = vec![0u32; self.classes.len()];
        for root in &self.trees {
            let leaf = tree::leaf_for_row(root, design, row);
            votes[majority_class(leaf)] += 1;
        }
        let total = f64::from(votes.iter().sum::<u32>());
        let fractions: Vec<f64> = votes.iter().map(|&v| f64::from(v) / total).collect();
        let winner = vote_winner(&votes);
        Prediction { label: self.classes[winner].clone(), vote_fractions: fractions }
    }

    /// Positive-class vote shares for a whole table; the standard ROC score.
    pub fn scores_for(&self, table: &Table, class: &str) -> Result<Vec<f64>, ForestError> {
        let idx = self
            .classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| ForestError::SchemaMismatch(format!("unknown class `{class}`")))?;
        Ok(self.predict_table(table)?.into_iter().map(|p| p.vote_fractions[idx]).collect())
    }

    /// Serialize to the versioned model dump format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ForestError> {
        let envelope = ModelFile { format: MODEL_FORMAT.to_string(), version: MODEL_VERSION, forest: self.clone() };
        let json = serde_json::to_string(&envelope)
            .map_err(|e| ForestError::BadModelFile(e.to_string()))?;
        std::fs::write(path.as_ref(), json)?;
        Ok(())
    }

    /// Load a model dump, validating the format marker and version.
    pub fn load(path: impl AsRef<Path>) -> Result<RandomForest, ForestError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let envelope: ModelFile = serde_json::from_str(&text)
            .map_err(|e| ForestError::BadModelFile(e.to_string()))?;
        if envelope.format != MODEL_FORMAT {
            return Err(ForestError::BadModelFile(format!(
                "expected format `{MODEL_FORMAT}`, found `{}`",
                envelope.format
            )));
        }
        if envelope.version != MODEL_VERSION {
            return Err(ForestError::BadModelFile(format!(
                "unsupported model version {}",
                envelope.version
            )));
        }
        Ok(envelope.forest)
    }
}

const MODEL_FORMAT: &str = "tabforest.forest";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    forest: RandomForest,
}

/// Majority class of a leaf; ties go to the higher class index, mirroring
/// the forest-level vote rule.
fn majority_class(leaf: &LeafValue) -> usize {
    match leaf {
        LeafValue::Counts(counts) => vote_winner(counts),
        LeafValue::Mean { .. } => unreachable!("classification tree with regression leaf"),
    }
}

/// Index of the maximal count; exact ties resolve to the highest index
/// (the disease class for [HC, NonHC] targets).
pub(crate) fn vote_winner(votes: &[u32]) -> usize {
    let mut best = 0usize;
    for (i, &v) in votes.iter().enumerate() {
        if v >= votes[best] {
            best = i;
        }
    }
    best
}

/// Grow a single tree on explicit in-bag row indices, consuming randomness
/// from the caller's stream. Exposed for oracle-style testing; forests are
/// normally built with [`fit_forest`].
pub fn fit_tree(
    train: &Table,
    in_bag: &[usize],
    config: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TreeNode, ForestError> {
    if in_bag.is_empty() {
        return Err(ForestError::EmptyNode);
    }
    let (design, target) = design::predictors_and_target(train).map_err(design_err_at_fit)?;
    let mtry = config.resolve_mtry(design.n_features())?;
    let params =
        GrowParams { mtry, min_node_size: config.min_node_size, max_depth: config.max_depth };
    let rows: Vec<u32> = in_bag.iter().map(|&r| r as u32).collect();
    let fit_target = FitTarget::Classes { codes: &target.codes, n_classes: target.n_classes() };
    Ok(tree::grow_tree(&design, &fit_target, rows, &params, rng))
}

/// A split choice reported through the public [`best_split`] surface.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: String,
    pub rule: SplitRule,
    pub impurity_decrease: f64,
}

/// Best Gini split over the given rows and candidate features of a table,
/// or `None` when no split strictly decreases impurity. Ties break to the
/// earliest candidate in schema order, then the lowest threshold.
pub fn best_split(
    table: &Table,
    rows: &[usize],
    candidate_features: &[&str],
) -> Result<Option<SplitChoice>, ForestError> {
    if candidate_features.is_empty() {
        return Err(ForestError::NoPredictors);
    }
    let (design, target) = design::predictors_and_target(table).map_err(design_err_at_fit)?;
    let mut candidates = Vec::with_capacity(candidate_features.len());
    for name in candidate_features {
        let idx = design
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ForestError::SchemaMismatch(format!("unknown feature `{name}`")))?;
        candidates.push(idx);
    }
    candidates.sort_unstable();
    candidates.dedup();
    let rows: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
    let fit_target = FitTarget::Classes { codes: &target.codes, n_classes: target.n_classes() };
    Ok(tree::best_split_design(&design, &fit_target, &rows, &candidates).map(|s| SplitChoice {
        feature: design.names[s.feature].clone(),
        rule: s.rule,
        impurity_decrease: s.decrease,
    }))
}

// ---------------------------------------------------------------------------
// Internal regression forest for the imputation loop. Mean-aggregation
// leaves, variance split criterion, otherwise the same machinery.
// ---------------------------------------------------------------------------

pub(crate) struct RegressionForest {
    trees: Vec<TreeNode>,
}

pub(crate) fn fit_regression_forest(
    design: &DesignMatrix,
    values: &[f64],
    rows: &[u32],
    ntree: usize,
    mtry: usize,
    min_node_size: usize,
    seed: u64,
) -> RegressionForest {
    let target = FitTarget::Values(values);
    let params = GrowParams { mtry, min_node_size, max_depth: None };
    let n = rows.len();
    let trees: Vec<TreeNode> = (0..ntree)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(derive_seed(seed, i as u64));
            let in_bag: Vec<u32> = (0..n).map(|_| rows[rng.random_range(0..n)]).collect();
            tree::grow_tree(design, &target, in_bag, &params, &mut rng)
        })
        .collect();
    RegressionForest { trees }
}

impl RegressionForest {
    /// Mean of the per-tree leaf means; always inside the observed response
    /// range because every leaf mean averages training responses.
    pub fn predict(&self, design: &DesignMatrix, row: usize) -> f64 {
        let mut sum = 0.0;
        for root in &self.trees {
            match tree::leaf_for_row(root, design, row) {
                LeafValue::Mean { value, .. } => sum += value,
                LeafValue::Counts(_) => unreachable!("regression tree with class leaf"),
            }
        }
        sum / self.trees.len() as f64
    }
}

/// Internal classification forest over an explicit design matrix and row
/// subset — the imputation loop and Boruta build these directly.
pub(crate) struct DesignForest {
    pub trees: Vec<TreeNode>,
    pub in_bag: Vec<Vec<u32>>,
    pub n_classes: usize,
}

pub(crate) fn fit_design_forest(
    design: &DesignMatrix,
    codes: &[u32],
    n_classes: usize,
    rows: &[u32],
    ntree: usize,
    mtry: usize,
    min_node_size: usize,
    seed: u64,
) -> DesignForest {
    let target = FitTarget::Classes { codes, n_classes };
    let params = GrowParams { mtry, min_node_size, max_depth: None };
    let n = rows.len();
    let grown: Vec<(TreeNode, Vec<u32>)> = (0..ntree)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(derive_seed(seed, i as u64));
            let in_bag: Vec<u32> = (0..n).map(|_| rows[rng.random_range(0..n)]).collect();
            let root = tree::grow_tree(design, &target, in_bag.clone(), &params, &mut rng);
            (root, in_bag)
        })
        .collect();
    let (trees, in_bag) = grown.into_iter().unzip();
    DesignForest { trees, in_bag, n_classes }
}

impl DesignForest {
    pub fn predict(&self, design: &DesignMatrix, row: usize) -> u32 {
        let mut votes = vec![0u32; self.n_classes];
        for root in &self.trees {
            match tree::leaf_for_row(root, design, row) {
                LeafValue::Counts(counts) => votes[vote_winner(counts)] += 1,
                LeafValue::Mean { .. } => unreachable!(),
            }
        }
        vote_winner(&votes) as u32
    }
}

pub(crate) use tree::leaf_for_row;
pub(crate) use vote_winner as winner_index;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnSpec, FeatureGroup, Schema};

    pub(crate) fn toy_table(xs: &[f64], labels: &[&str]) -> Table {
        let schema = Schema::new(vec![
            ColumnSpec::new("x", FeatureKind::Numeric, FeatureGroup::Blood),
            ColumnSpec::new(
                "dx",
                FeatureKind::Target { levels: vec!["HC".into(), "NonHC".into()] },
                FeatureGroup::Target,
            ),
        ])
        .unwrap();
        Table::new(
            schema,
            vec![
                Column::Numeric(xs.to_vec()),
                Column::Categorical(labels.iter().map(|s| s.to_string()).collect()),
            ],
            vec![vec![false; xs.len()], vec![false; labels.len()]],
        )
        .unwrap()
    }

    fn two_feature_table(x1: &[f64], x2: &[f64], labels: &[&str]) -> Table {
        let schema = Schema::new(vec![
            ColumnSpec::new("a", FeatureKind::Numeric, FeatureGroup::Blood),
            ColumnSpec::new("b", FeatureKind::Numeric, FeatureGroup::Blood),
            ColumnSpec::new(
                "dx",
                FeatureKind::Target { levels: vec!["HC".into(), "NonHC".into()] },
                FeatureGroup::Target,
            ),
        ])
        .unwrap();
        Table::new(
            schema,
            vec![
                Column::Numeric(x1.to_vec()),
                Column::Numeric(x2.to_vec()),
                Column::Categorical(labels.iter().map(|s| s.to_string()).collect()),
            ],
            vec![vec![false; x1.len()], vec![false; x2.len()], vec![false; labels.len()]],
        )
        .unwrap()
    }

    #[test]
    fn public_best_split_matches_hand_enumeration() {
        let t = toy_table(&[1.0, 2.0, 3.0, 4.0], &["HC", "HC", "NonHC", "NonHC"]);
        let s = best_split(&t, &[0, 1, 2, 3], &["x"]).unwrap().unwrap();
        assert_eq!(s.feature, "x");
        assert_eq!(s.rule, SplitRule::Threshold(2.5));
        assert!((s.impurity_decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_leaf_when_min_node_size_is_n() {
        let t = toy_table(&[1.0, 2.0, 3.0, 4.0], &["HC", "HC", "NonHC", "NonHC"]);
        let cfg = ForestConfig { min_node_size: 4, ..Default::default() };
        let mut rng = seeded_rng(0);
        let root = fit_tree(&t, &[0, 1, 2, 3], &cfg, &mut rng).unwrap();
        assert!(matches!(root, TreeNode::Leaf(_)));
    }

    #[test]
    fn separable_data_grows_depth_one_tree() {
        let t = toy_table(&[1.0, 2.0, 10.0, 11.0], &["HC", "HC", "NonHC", "NonHC"]);
        let cfg = ForestConfig { mtry: Mtry::Fixed(1), ..Default::default() };
        let mut rng = seeded_rng(0);
        let root = fit_tree(&t, &[0, 1, 2, 3], &cfg, &mut rng).unwrap();
        assert_eq!(root.depth(), 1);
    }

    #[test]
    fn identical_streams_grow_identical_trees() {
        let t = two_feature_table(
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            &[2.0, 1.0, 4.0, 3.0, 6.0, 5.0],
            &["HC", "NonHC", "HC", "NonHC", "HC", "NonHC"],
        );
        let cfg = ForestConfig { mtry: Mtry::Fixed(1), ..Default::default() };
        let mut r1 = seeded_rng(33);
        let mut r2 = seeded_rng(33);
        let t1 = fit_tree(&t, &[0, 1, 2, 3, 4, 5], &cfg, &mut r1).unwrap();
        let t2 = fit_tree(&t, &[0, 1, 2, 3, 4, 5], &cfg, &mut r2).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn auto_mtry_is_floor_sqrt() {
        let cfg = ForestConfig::default();
        assert_eq!(cfg.resolve_mtry(30).unwrap(), 5);
        assert_eq!(cfg.resolve_mtry(4).unwrap(), 2);
        assert_eq!(cfg.resolve_mtry(1).unwrap(), 1);
        let fixed = ForestConfig { mtry: Mtry::Fixed(31), ..Default::default() };
        assert!(matches!(
            fixed.resolve_mtry(30),
            Err(ForestError::MtryOutOfRange { mtry: 31, n_predictors: 30 })
        ));
    }

    #[test]
    fn single_tree_forest_predicts_like_its_tree() {
        let t = toy_table(&[1.0, 2.0, 10.0, 11.0], &["HC", "HC", "NonHC", "NonHC"]);
        let cfg = ForestConfig { ntree: 1, seed: 7, ..Default::default() };
        let forest = fit_forest(&t, &cfg).unwrap();
        assert_eq!(forest.ntree(), 1);
        let preds = forest.predict_table(&t).unwrap();
        // each vote fraction must be 0 or 1 with a single tree
        for p in &preds {
            assert!(p.vote_fractions.iter().all(|&f| f == 0.0 || f == 1.0));
        }
    }

    #[test]
    fn degenerate_single_class_is_rejected() {
        let t = toy_table(&[1.0, 2.0], &["HC", "HC"]);
        let err = fit_forest(&t, &ForestConfig::default().with_ntree(3)).unwrap_err();
        assert!(matches!(err, ForestError::DegenerateClass));
    }

    #[test]
    fn vote_tie_goes_to_disease_class() {
        assert_eq!(vote_winner(&[1, 1]), 1);
        assert_eq!(vote_winner(&[2, 1]), 0);
        assert_eq!(vote_winner(&[1, 2]), 1);
        assert_eq!(vote_winner(&[3, 3, 3]), 2);
    }

    #[test]
    fn vote_fractions_sum_to_one() {
        let t = toy_table(
            &[1.0, 2.0, 3.0, 10.0, 11.0, 12.0],
            &["HC", "HC", "HC", "NonHC", "NonHC", "NonHC"],
        );
        let forest = fit_forest(&t, &ForestConfig::default().with_ntree(33).with_seed(5)).unwrap();
        for p in forest.predict_table(&t).unwrap() {
            let sum: f64 = p.vote_fractions.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(p.vote_fractions.iter().all(|&f| (0.0..=1.0).contains(&f)));
        }
    }

    #[test]
    fn score_reproduces_label_at_half_threshold() {
        let t = toy_table(
            &[1.0, 2.0, 3.0, 4.0, 10.0, 11.0, 12.0, 13.0],
            &["HC", "HC", "NonHC", "HC", "NonHC", "NonHC", "HC", "NonHC"],
        );
        let forest = fit_forest(&t, &ForestConfig::default().with_ntree(40).with_seed(3)).unwrap();
        let preds = forest.predict_table(&t).unwrap();
        let scores = forest.scores_for(&t, "NonHC").unwrap();
        for (p, s) in preds.iter().zip(&scores) {
            let from_score = if *s >= 0.5 { "NonHC" } else { "HC" };
            assert_eq!(p.label, from_score);
        }
    }

    #[test]
    fn masked_predictor_rejected_at_fit_and_predict() {
        let schema = Schema::new(vec![
            ColumnSpec::new("x", FeatureKind::Numeric, FeatureGroup::Blood),
            ColumnSpec::new(
                "dx",
                FeatureKind::Target { levels: vec!["HC".into(), "NonHC".into()] },
                FeatureGroup::Target,
            ),
        ])
        .unwrap();
        let masked = Table::new(
            schema,
            vec![
                Column::Numeric(vec![1.0, 2.0, 3.0]),
                Column::Categorical(vec!["HC".into(), "NonHC".into(), "HC".into()]),
            ],
            vec![vec![false, true, false], vec![false; 3]],
        )
        .unwrap();
        assert!(matches!(
            fit_forest(&masked, &ForestConfig::default().with_ntree(2)),
            Err(ForestError::MaskedCell { row: 1, .. })
        ));

        let clean = toy_table(&[1.0, 2.0, 10.0, 11.0], &["HC", "HC", "NonHC", "NonHC"]);
        let forest = fit_forest(&clean, &ForestConfig::default().with_ntree(2)).unwrap();
        assert!(matches!(
            forest.predict_table(&masked),
            Err(ForestError::MissingAtPredict { row: 1, .. })
        ));
    }

    #[test]
    fn model_dump_round_trips() {
        let t = toy_table(
            &[1.0, 2.0, 3.0, 10.0, 11.0, 12.0],
            &["HC", "HC", "HC", "NonHC", "NonHC", "NonHC"],
        );
        let forest = fit_forest(&t, &ForestConfig::default().with_ntree(9).with_seed(4)).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        forest.save(f.path()).unwrap();
        let loaded = RandomForest::load(f.path()).unwrap();
        assert_eq!(forest.predict_table(&t).unwrap(), loaded.predict_table(&t).unwrap());
        assert_eq!(forest.classes(), loaded.classes());
        assert_eq!(forest.in_bag(), loaded.in_bag());
    }

    #[test]
    fn load_rejects_foreign_files() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "{\"format\":\"something.else\",\"version\":1}").unwrap();
        assert!(matches!(RandomForest::load(f.path()), Err(ForestError::BadModelFile(_))));
    }

    #[test]
    fn thread_count_does_not_change_the_model() {
        let t = two_feature_table(
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            &[8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0],
            &["HC", "HC", "HC", "HC", "NonHC", "NonHC", "NonHC", "NonHC"],
        );
        let cfg = ForestConfig::default().with_ntree(16).with_seed(11);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| fit_forest(&t, &cfg).unwrap());
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| fit_forest(&t, &cfg).unwrap());
        assert_eq!(single.trees, multi.trees);
        assert_eq!(single.in_bag, multi.in_bag);
        assert_eq!(
            single.predict_table(&t).unwrap(),
            multi.predict_table(&t).unwrap()
        );
    }
}
