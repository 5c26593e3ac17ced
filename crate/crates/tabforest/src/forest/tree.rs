//! CART tree growing: Gini (classification) or variance (regression)
//! impurity, midpoint thresholds on numeric features, ordered-level prefix
//! splits on categorical features.

use super::ForestError;
use crate::design::{DesignMatrix, FeatureData};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How rows are routed at an internal node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Numeric: row goes left iff `value <= threshold`. Thresholds sit at
    /// midpoints of consecutive distinct training values.
    Threshold(f64),
    /// Categorical: row goes left iff `mask[level_code]`. Levels unseen in
    /// the node at fit time route right.
    Levels(Vec<bool>),
}

/// Terminal payload: class counts for classifiers, mean response for the
/// internal regression trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LeafValue {
    Counts(Vec<u32>),
    Mean { value: f64, count: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        rule: SplitRule,
        /// Weighted impurity decrease achieved by this split.
        decrease: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(LeafValue),
}

impl TreeNode {
    pub fn n_nodes(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.n_nodes() + right.n_nodes(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Node heterogeneity for a class-count vector: 1 − Σ pᵢ².
pub fn gini_impurity(class_counts: &[u32]) -> Result<f64, ForestError> {
    let total: u64 = class_counts.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return Err(ForestError::EmptyNode);
    }
    let total = total as f64;
    let sum_sq: f64 = class_counts
        .iter()
        .map(|&c| {
            let p = f64::from(c) / total;
            p * p
        })
        .sum();
    Ok(1.0 - sum_sq)
}

/// Fit-time view of the response.
#[derive(Clone, Copy)]
pub(crate) enum FitTarget<'a> {
    Classes { codes: &'a [u32], n_classes: usize },
    Values(&'a [f64]),
}

impl<'a> FitTarget<'a> {
    fn is_classification(&self) -> bool {
        matches!(self, FitTarget::Classes { .. })
    }
}

/// Running node statistics, classification or regression.
#[derive(Clone, Debug)]
enum NodeStats {
    Counts(Vec<u32>),
    Moments { sum: f64, sum_sq: f64, n: u32 },
}

impl NodeStats {
    fn empty(target: &FitTarget<'_>) -> NodeStats {
        match target {
            FitTarget::Classes { n_classes, .. } => NodeStats::Counts(vec![0; *n_classes]),
            FitTarget::Values(_) => NodeStats::Moments { sum: 0.0, sum_sq: 0.0, n: 0 },
        }
    }

    fn add(&mut self, target: &FitTarget<'_>, row: u32) {
        match (self, target) {
            (NodeStats::Counts(c), FitTarget::Classes { codes, .. }) => {
                c[codes[row as usize] as usize] += 1;
            }
            (NodeStats::Moments { sum, sum_sq, n }, FitTarget::Values(vals)) => {
                let y = vals[row as usize];
                *sum += y;
                *sum_sq += y * y;
                *n += 1;
            }
            _ => unreachable!(),
        }
    }

    fn remove(&mut self, target: &FitTarget<'_>, row: u32) {
        match (self, target) {
            (NodeStats::Counts(c), FitTarget::Classes { codes, .. }) => {
                c[codes[row as usize] as usize] -= 1;
            }
            (NodeStats::Moments { sum, sum_sq, n }, FitTarget::Values(vals)) => {
                let y = vals[row as usize];
                *sum -= y;
                *sum_sq -= y * y;
                *n -= 1;
            }
            _ => unreachable!(),
        }
    }

    fn n(&self) -> u32 {
        match self {
            NodeStats::Counts(c) => c.iter().sum(),
            NodeStats::Moments { n, .. } => *n,
        }
    }

    /// Gini for counts, mean squared deviation for moments.
    fn impurity(&self) -> f64 {
        match self {
            NodeStats::Counts(c) => gini_impurity(c).unwrap_or(0.0),
            NodeStats::Moments { sum, sum_sq, n } => {
                if *n == 0 {
                    return 0.0;
                }
                let nf = f64::from(*n);
                let mean = sum / nf;
                (sum_sq / nf - mean * mean).max(0.0)
            }
        }
    }

    fn is_pure(&self) -> bool {
        match self {
            NodeStats::Counts(c) => c.iter().filter(|&&x| x > 0).count() <= 1,
            NodeStats::Moments { .. } => self.impurity() <= 0.0,
        }
    }

    fn to_leaf(&self) -> LeafValue {
        match self {
            NodeStats::Counts(c) => LeafValue::Counts(c.clone()),
            NodeStats::Moments { sum, n, .. } => LeafValue::Mean {
                value: if *n == 0 { 0.0 } else { sum / f64::from(*n) },
                count: *n,
            },
        }
    }

    /// Mean of the response encoded as a number: class code for
    /// classification, the value itself for regression. Used to order
    /// categorical levels before the prefix scan.
    fn ordering_mean(&self, target: &FitTarget<'_>) -> f64 {
        match (self, target) {
            (NodeStats::Counts(c), _) => {
                let total: u32 = c.iter().sum();
                if total == 0 {
                    return 0.0;
                }
                let weighted: f64 =
                    c.iter().enumerate().map(|(k, &cnt)| k as f64 * f64::from(cnt)).sum();
                weighted / f64::from(total)
            }
            (NodeStats::Moments { sum, n, .. }, _) => {
                if *n == 0 {
                    0.0
                } else {
                    sum / f64::from(*n)
                }
            }
        }
    }
}

/// Chosen split for one node.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SplitCandidate {
    pub feature: usize,
    pub rule: SplitRule,
    pub decrease: f64,
}

/// Best split over the candidate features, or `None` when nothing strictly
/// decreases impurity.
///
/// Candidates are evaluated in ascending feature index; within a feature,
/// thresholds in ascending order (categorical splits scan level-prefix sizes
/// ascending). Strict improvement comparison means ties resolve to the
/// lowest feature index, then the lowest threshold.
pub(crate) fn best_split_design(
    design: &DesignMatrix,
    target: &FitTarget<'_>,
    rows: &[u32],
    candidates: &[usize],
) -> Option<SplitCandidate> {
    if rows.len() < 2 {
        return None;
    }
    let mut parent = NodeStats::empty(target);
    for &r in rows {
        parent.add(target, r);
    }
    let parent_impurity = parent.impurity();
    let n = rows.len() as f64;

    let mut best: Option<SplitCandidate> = None;
    for &feat in candidates {
        let found = match &design.features[feat] {
            FeatureData::Numeric(values) => {
                scan_numeric(values, target, rows, &parent, parent_impurity, n)
            }
            FeatureData::Categorical { codes, n_levels } => {
                scan_categorical(codes, *n_levels, target, rows, &parent, parent_impurity, n)
            }
        };
        if let Some((rule, decrease)) = found {
            let better = match &best {
                None => decrease > 0.0,
                Some(b) => decrease > b.decrease,
            };
            if better {
                best = Some(SplitCandidate { feature: feat, rule, decrease });
            }
        }
    }
    best
}

fn weighted_decrease(
    parent_impurity: f64,
    n: f64,
    left: &NodeStats,
    right: &NodeStats,
) -> f64 {
    let nl = f64::from(left.n());
    let nr = f64::from(right.n());
    parent_impurity - (nl * left.impurity() + nr * right.impurity()) / n
}

fn scan_numeric(
    values: &[f64],
    target: &FitTarget<'_>,
    rows: &[u32],
    parent: &NodeStats,
    parent_impurity: f64,
    n: f64,
) -> Option<(SplitRule, f64)> {
    let mut order: Vec<u32> = rows.to_vec();
    order.sort_unstable_by(|&a, &b| {
        values[a as usize].partial_cmp(&values[b as usize]).expect("finite values")
    });

    let mut left = NodeStats::empty(target);
    let mut right = parent.clone();
    let mut best: Option<(f64, f64)> = None; // (threshold, decrease)

    for i in 0..order.len() - 1 {
        let r = order[i];
        left.add(target, r);
        right.remove(target, r);
        let v = values[order[i] as usize];
        let v_next = values[order[i + 1] as usize];
        if v == v_next {
            continue;
        }
        let threshold = (v + v_next) / 2.0;
        let decrease = weighted_decrease(parent_impurity, n, &left, &right);
        let better = match best {
            None => decrease > 0.0,
            Some((_, b)) => decrease > b,
        };
        if better {
            best = Some((threshold, decrease));
        }
    }
    best.map(|(t, d)| (SplitRule::Threshold(t), d))
}

fn scan_categorical(
    codes: &[u32],
    n_levels: u32,
    target: &FitTarget<'_>,
    rows: &[u32],
    parent: &NodeStats,
    parent_impurity: f64,
    n: f64,
) -> Option<(SplitRule, f64)> {
    let n_levels = n_levels as usize;
    let mut per_level: Vec<NodeStats> = (0..n_levels).map(|_| NodeStats::empty(target)).collect();
    for &r in rows {
        per_level[codes[r as usize] as usize].add(target, r);
    }

    // Levels present in the node, ordered by mean response (the standard
    // CART trick), ties by level code.
    let mut present: Vec<usize> = (0..n_levels).filter(|&l| per_level[l].n() > 0).collect();
    if present.len() < 2 {
        return None;
    }
    present.sort_by(|&a, &b| {
        per_level[a]
            .ordering_mean(target)
            .partial_cmp(&per_level[b].ordering_mean(target))
            .expect("finite means")
            .then(a.cmp(&b))
    });

    let mut left = NodeStats::empty(target);
    let mut right = parent.clone();
    let mut best: Option<(usize, f64)> = None; // (prefix length, decrease)

    for (prefix, &level) in present.iter().enumerate().take(present.len() - 1) {
        merge_stats(&mut left, &per_level[level]);
        unmerge_stats(&mut right, &per_level[level]);
        let decrease = weighted_decrease(parent_impurity, n, &left, &right);
        let better = match best {
            None => decrease > 0.0,
            Some((_, b)) => decrease > b,
        };
        if better {
            best = Some((prefix + 1, decrease));
        }
    }

    best.map(|(prefix_len, d)| {
        let mut mask = vec![false; n_levels];
        for &level in &present[..prefix_len] {
            mask[level] = true;
        }
        (SplitRule::Levels(mask), d)
    })
}

fn merge_stats(into: &mut NodeStats, from: &NodeStats) {
    match (into, from) {
        (NodeStats::Counts(a), NodeStats::Counts(b)) => {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        (
            NodeStats::Moments { sum, sum_sq, n },
            NodeStats::Moments { sum: s2, sum_sq: q2, n: n2 },
        ) => {
            *sum += s2;
            *sum_sq += q2;
            *n += n2;
        }
        _ => unreachable!(),
    }
}

fn unmerge_stats(from: &mut NodeStats, what: &NodeStats) {
    match (from, what) {
        (NodeStats::Counts(a), NodeStats::Counts(b)) => {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        (
            NodeStats::Moments { sum, sum_sq, n },
            NodeStats::Moments { sum: s2, sum_sq: q2, n: n2 },
        ) => {
            *sum -= s2;
            *sum_sq -= q2;
            *n -= n2;
        }
        _ => unreachable!(),
    }
}

pub(crate) struct GrowParams {
    pub mtry: usize,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
}

/// Grow a tree on the given row multiset.
///
/// RNG discipline: nodes are visited preorder (left subtree first), and each
/// node that attempts a split draws its `mtry` candidates from `rng` before
/// any descendant does. This makes tree structure a pure function of the
/// initial RNG state.
pub(crate) fn grow_tree(
    design: &DesignMatrix,
    target: &FitTarget<'_>,
    rows: Vec<u32>,
    params: &GrowParams,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    grow_node(design, target, rows, params, rng, 0)
}

fn grow_node(
    design: &DesignMatrix,
    target: &FitTarget<'_>,
    rows: Vec<u32>,
    params: &GrowParams,
    rng: &mut ChaCha8Rng,
    depth: usize,
) -> TreeNode {
    let mut stats = NodeStats::empty(target);
    for &r in &rows {
        stats.add(target, r);
    }
    let stop = rows.len() <= params.min_node_size
        || stats.is_pure()
        || params.max_depth.is_some_and(|d| depth >= d);
    if stop {
        return TreeNode::Leaf(stats.to_leaf());
    }

    let p = design.n_features();
    let mut candidates: Vec<usize> = sample(rng, p, params.mtry.min(p)).into_iter().collect();
    candidates.sort_unstable();

    let Some(split) = best_split_design(design, target, &rows, &candidates) else {
        return TreeNode::Leaf(stats.to_leaf());
    };

    let (left_rows, right_rows) = partition_rows(design, &rows, split.feature, &split.rule);
    debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
    let left = grow_node(design, target, left_rows, params, rng, depth + 1);
    let right = grow_node(design, target, right_rows, params, rng, depth + 1);
    TreeNode::Internal {
        feature: split.feature,
        rule: split.rule,
        decrease: split.decrease,
        left: Box::new(left),
        right: Box::new(right),
    }
}

pub(crate) fn partition_rows(
    design: &DesignMatrix,
    rows: &[u32],
    feature: usize,
    rule: &SplitRule,
) -> (Vec<u32>, Vec<u32>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &r in rows {
        if goes_left(design, feature, rule, r as usize) {
            left.push(r);
        } else {
            right.push(r);
        }
    }
    (left, right)
}

pub(crate) fn goes_left(design: &DesignMatrix, feature: usize, rule: &SplitRule, row: usize) -> bool {
    match (rule, &design.features[feature]) {
        (SplitRule::Threshold(t), FeatureData::Numeric(vals)) => vals[row] <= *t,
        (SplitRule::Levels(mask), FeatureData::Categorical { codes, .. }) => {
            let code = codes[row] as usize;
            code < mask.len() && mask[code]
        }
        _ => unreachable!("rule kind does not match feature kind"),
    }
}

/// Route one row to its leaf.
pub(crate) fn leaf_for_row<'t>(
    root: &'t TreeNode,
    design: &DesignMatrix,
    row: usize,
) -> &'t LeafValue {
    let mut node = root;
    loop {
        match node {
            TreeNode::Leaf(leaf) => return leaf,
            TreeNode::Internal { feature, rule, left, right, .. } => {
                node = if goes_left(design, *feature, rule, row) { left } else { right };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_numeric(values: Vec<f64>) -> DesignMatrix {
        DesignMatrix {
            names: vec!["x".into()],
            n_rows: values.len(),
            features: vec![FeatureData::Numeric(values)],
        }
    }

    #[test]
    fn gini_examples() {
        assert!((gini_impurity(&[5, 5]).unwrap() - 0.5).abs() < 1e-15);
        assert!((gini_impurity(&[10, 0]).unwrap() - 0.0).abs() < 1e-15);
        // 1 − (0.25² + 0.75²) = 0.375
        assert!((gini_impurity(&[2, 6]).unwrap() - 0.375).abs() < 1e-15);
        assert!(matches!(gini_impurity(&[0, 0]), Err(ForestError::EmptyNode)));
    }

    #[test]
    fn gini_range_for_two_classes() {
        for (a, b) in [(1u32, 1u32), (3, 9), (100, 1), (7, 0)] {
            let g = gini_impurity(&[a, b]).unwrap();
            assert!((0.0..=0.5).contains(&g));
            if a == 0 || b == 0 {
                assert_eq!(g, 0.0);
            } else {
                assert!(g > 0.0);
            }
        }
    }

    #[test]
    fn best_split_finds_midpoint() {
        let design = one_numeric(vec![1.0, 2.0, 3.0, 4.0]);
        let codes = vec![0u32, 0, 1, 1];
        let target = FitTarget::Classes { codes: &codes, n_classes: 2 };
        let split = best_split_design(&design, &target, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!(split.feature, 0);
        assert_eq!(split.rule, SplitRule::Threshold(2.5));
        assert!((split.decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_node_has_no_split() {
        let design = one_numeric(vec![1.0, 2.0, 3.0]);
        let codes = vec![1u32, 1, 1];
        let target = FitTarget::Classes { codes: &codes, n_classes: 2 };
        assert!(best_split_design(&design, &target, &[0, 1, 2], &[0]).is_none());
    }

    #[test]
    fn tie_breaks_to_lower_feature_index() {
        // Two identical features: both admit the same best decrease; the
        // lower index must win.
        let design = DesignMatrix {
            names: vec!["a".into(), "b".into()],
            n_rows: 4,
            features: vec![
                FeatureData::Numeric(vec![1.0, 2.0, 3.0, 4.0]),
                FeatureData::Numeric(vec![1.0, 2.0, 3.0, 4.0]),
            ],
        };
        let codes = vec![0u32, 0, 1, 1];
        let target = FitTarget::Classes { codes: &codes, n_classes: 2 };
        let split = best_split_design(&design, &target, &[0, 1, 2, 3], &[0, 1]).unwrap();
        assert_eq!(split.feature, 0);
    }

    #[test]
    fn tie_breaks_to_lower_threshold() {
        // y = [0,1,0,1] over x = [1,2,3,4]: every midpoint achieves an equal
        // decrease of 0.5 − 0.5 = 0? No: t=1.5 gives L=(1,0) R=(1,2):
        // 0.5 − (0 + 3·4/9)/4 = 0.5 − 1/3; t=2.5 gives (1,1)/(1,1): 0;
        // t=3.5 symmetric to 1.5. The two equal bests are t=1.5 and t=3.5;
        // the scan must return 1.5.
        let design = one_numeric(vec![1.0, 2.0, 3.0, 4.0]);
        let codes = vec![0u32, 1, 0, 1];
        let target = FitTarget::Classes { codes: &codes, n_classes: 2 };
        let split = best_split_design(&design, &target, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!(split.rule, SplitRule::Threshold(1.5));
    }

    #[test]
    fn categorical_split_orders_levels_by_positive_rate() {
        // level 0: all class 1; level 1: all class 0; level 2: all class 1.
        // Ordered by class-1 rate: level 1 (0.0) then levels 0, 2 (1.0).
        // Best bipartition is {1} vs {0, 2}, a perfect split.
        let design = DesignMatrix {
            names: vec!["c".into()],
            n_rows: 6,
            features: vec![FeatureData::Categorical {
                codes: vec![0, 0, 1, 1, 2, 2],
                n_levels: 3,
            }],
        };
        let codes = vec![1u32, 1, 0, 0, 1, 1];
        let target = FitTarget::Classes { codes: &codes, n_classes: 2 };
        let split = best_split_design(&design, &target, &[0, 1, 2, 3, 4, 5], &[0]).unwrap();
        assert_eq!(split.rule, SplitRule::Levels(vec![false, true, false]));
        // parent gini = 1 − (4/6)² − (2/6)² = 4/9; children pure
        assert!((split.decrease - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn regression_split_reduces_variance() {
        let design = one_numeric(vec![1.0, 2.0, 10.0, 11.0]);
        let values = vec![1.0, 1.2, 5.0, 5.5];
        let target = FitTarget::Values(&values);
        let split = best_split_design(&design, &target, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!(split.rule, SplitRule::Threshold(6.0));
        assert!(split.decrease > 0.0);
    }
}
