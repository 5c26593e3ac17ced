//! Out-of-bag error estimation and OOB-driven hyperparameter tuning.

use super::tree::leaf_for_row;
use super::{winner_index, ForestError, ForestConfig, LeafValue, Mtry, RandomForest};
use crate::dataset::Table;
use crate::design::{self, DesignMatrix, FeatureData};
use crate::rng::{derive_seed, seeded_rng, tag};
use rand::seq::SliceRandom;
use rayon::prelude::*;

/// OOB error series per tree-count prefix: after `t + 1` trees, each row is
/// scored by the majority vote of the trees where it was out-of-bag; rows
/// with no OOB votes yet are excluded from that prefix's denominators.
#[derive(Clone, Debug, PartialEq)]
pub struct OobCurve {
    /// Overall error per prefix; length = ntree.
    pub overall: Vec<f64>,
    /// Per-class error series, indexed `[class][prefix]`; error among rows
    /// whose true class is that class.
    pub per_class: Vec<Vec<f64>>,
    pub classes: Vec<String>,
}

impl OobCurve {
    /// Error of the full ensemble.
    pub fn final_error(&self) -> f64 {
        *self.overall.last().expect("ntree >= 1")
    }
}

/// Compute the OOB error curve of a fitted forest over its own training
/// table. The table must be the one the forest was fitted on (same row
/// count and predictor layout).
pub fn oob_error(forest: &RandomForest, train: &Table) -> Result<OobCurve, ForestError> {
    let design = forest.checked_design(train)?;
    if design.n_rows != forest.n_train() {
        return Err(ForestError::SchemaMismatch(format!(
            "forest was fitted on {} rows, table has {}",
            forest.n_train(),
            design.n_rows
        )));
    }
    let (_, target) = design::predictors_and_target(train)
        .map_err(|e| ForestError::SchemaMismatch(e.to_string()))?;
    if target.levels != forest.classes() {
        return Err(ForestError::SchemaMismatch(
            "target levels differ from the fitted class order".into(),
        ));
    }

    let n = design.n_rows;
    let n_classes = forest.classes().len();

    // Per tree, the prediction for each of its OOB rows.
    let per_tree: Vec<Vec<(u32, usize)>> = forest
        .trees()
        .par_iter()
        .zip(forest.in_bag().par_iter())
        .map(|(root, in_bag)| {
            let mut seen = vec![false; n];
            for &r in in_bag {
                seen[r as usize] = true;
            }
            (0..n as u32)
                .filter(|&r| !seen[r as usize])
                .map(|r| {
                    let leaf = leaf_for_row(root, &design, r as usize);
                    let class = match leaf {
                        LeafValue::Counts(c) => winner_index(c),
                        LeafValue::Mean { .. } => unreachable!(),
                    };
                    (r, class)
                })
                .collect()
        })
        .collect();

    let mut votes = vec![vec![0u32; n_classes]; n];
    let mut overall = Vec::with_capacity(per_tree.len());
    let mut per_class = vec![Vec::with_capacity(per_tree.len()); n_classes];

    for tree_votes in &per_tree {
        for &(row, class) in tree_votes {
            votes[row as usize][class] += 1;
        }
        let mut wrong = vec![0usize; n_classes];
        let mut seen = vec![0usize; n_classes];
        for (row, v) in votes.iter().enumerate() {
            if v.iter().all(|&x| x == 0) {
                continue;
            }
            let truth = target.codes[row] as usize;
            seen[truth] += 1;
            if winner_index(v) != truth {
                wrong[truth] += 1;
            }
        }
        let total_seen: usize = seen.iter().sum();
        let total_wrong: usize = wrong.iter().sum();
        overall.push(if total_seen == 0 { 0.0 } else { total_wrong as f64 / total_seen as f64 });
        for class in 0..n_classes {
            per_class[class].push(if seen[class] == 0 {
                0.0
            } else {
                wrong[class] as f64 / seen[class] as f64
            });
        }
    }

    Ok(OobCurve { overall, per_class, classes: forest.classes().to_vec() })
}

/// Result of an OOB sweep over an mtry grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub best_mtry: usize,
    /// (mtry, final OOB error) per grid value, ascending mtry.
    pub errors: Vec<(usize, f64)>,
}

/// Fit one forest per grid value (seed derived from `(config.seed, mtry)`)
/// and return the argmin of final OOB error; ties break to the smaller mtry.
/// The grid is deduplicated and sorted ascending before the sweep.
pub fn tune_mtry(
    train: &Table,
    base_config: &ForestConfig,
    grid: &[usize],
) -> Result<TuneResult, ForestError> {
    if grid.is_empty() {
        return Err(ForestError::EmptyGrid);
    }
    let mut grid: Vec<usize> = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();

    let mut errors = Vec::with_capacity(grid.len());
    for &m in &grid {
        let config = ForestConfig {
            mtry: Mtry::Fixed(m),
            seed: tuning_seed(base_config.seed, m),
            ..base_config.clone()
        };
        let forest = super::fit_forest(train, &config)?;
        let curve = oob_error(&forest, train)?;
        errors.push((m, curve.final_error()));
    }

    let mut best = errors[0];
    for &(m, err) in &errors[1..] {
        if err < best.1 {
            best = (m, err);
        }
    }
    Ok(TuneResult { best_mtry: best.0, errors })
}

/// Seed used for the forest fitted at one grid value. Public contract:
/// a brute-force sweep with these seeds reproduces [`tune_mtry`] exactly.
pub fn tuning_seed(base_seed: u64, mtry: usize) -> u64 {
    derive_seed(derive_seed(base_seed, tag("tune-mtry")), mtry as u64)
}

/// Per-feature mean decrease in OOB accuracy.
///
/// For each tree: baseline accuracy on its OOB rows, then for each feature,
/// accuracy with that feature's values permuted among the OOB rows. The
/// importance is the mean accuracy drop over trees (trees with empty OOB
/// sets are skipped). This is the importance Boruta consumes.
pub fn oob_permutation_importance(
    forest: &RandomForest,
    train: &Table,
    seed: u64,
) -> Result<Vec<(String, f64)>, ForestError> {
    let design = forest.checked_design(train)?;
    if design.n_rows != forest.n_train() {
        return Err(ForestError::SchemaMismatch(format!(
            "forest was fitted on {} rows, table has {}",
            forest.n_train(),
            design.n_rows
        )));
    }
    let (_, target) = design::predictors_and_target(train)
        .map_err(|e| ForestError::SchemaMismatch(e.to_string()))?;

    let universe: Vec<u32> = (0..design.n_rows as u32).collect();
    let drops = design_oob_importance(
        forest.trees(),
        forest.in_bag(),
        &design,
        &target.codes,
        &universe,
        seed,
    )
    .ok_or_else(|| {
        ForestError::SchemaMismatch(
            "no tree has out-of-bag rows; use more training rows or trees".into(),
        )
    })?;
    Ok(design.names.iter().cloned().zip(drops).collect())
}

/// Importance core over raw design data; `rows` is the training row
/// universe the bootstrap drew from. Returns `None` when every tree
/// in-bagged all rows.
pub(crate) fn design_oob_importance(
    trees: &[super::TreeNode],
    in_bags: &[Vec<u32>],
    design: &DesignMatrix,
    codes: &[u32],
    rows: &[u32],
    seed: u64,
) -> Option<Vec<f64>> {
    let p = design.n_features();
    let drops: Vec<Vec<f64>> = trees
        .par_iter()
        .zip(in_bags.par_iter())
        .enumerate()
        .filter_map(|(tree_idx, (root, in_bag))| {
            let mut seen = vec![false; design.n_rows];
            for &r in in_bag {
                seen[r as usize] = true;
            }
            let oob: Vec<u32> = rows.iter().copied().filter(|&r| !seen[r as usize]).collect();
            if oob.is_empty() {
                return None;
            }
            let correct = |d: &DesignMatrix| -> usize {
                oob.iter()
                    .filter(|&&r| {
                        let leaf = leaf_for_row(root, d, r as usize);
                        let class = match leaf {
                            LeafValue::Counts(c) => winner_index(c),
                            LeafValue::Mean { .. } => unreachable!(),
                        };
                        class == codes[r as usize] as usize
                    })
                    .count()
            };
            let baseline = correct(design) as f64 / oob.len() as f64;

            let mut scratch = design.clone();
            let mut tree_drops = Vec::with_capacity(p);
            for feat in 0..p {
                let mut rng = seeded_rng(derive_seed(
                    derive_seed(seed, tree_idx as u64),
                    feat as u64,
                ));
                let mut order: Vec<u32> = oob.clone();
                order.shuffle(&mut rng);
                permute_feature(&mut scratch, design, feat, &oob, &order);
                let acc = correct(&scratch) as f64 / oob.len() as f64;
                tree_drops.push(baseline - acc);
                restore_feature(&mut scratch, design, feat, &oob);
            }
            Some(tree_drops)
        })
        .collect();

    if drops.is_empty() {
        return None;
    }
    let n_trees = drops.len() as f64;
    Some((0..p).map(|feat| drops.iter().map(|d| d[feat]).sum::<f64>() / n_trees).collect())
}

/// Overwrite `scratch`'s feature values at the given rows with the original
/// values read in `order` (a permutation of `rows`).
fn permute_feature(
    scratch: &mut DesignMatrix,
    original: &DesignMatrix,
    feat: usize,
    rows: &[u32],
    order: &[u32],
) {
    match (&mut scratch.features[feat], &original.features[feat]) {
        (FeatureData::Numeric(dst), FeatureData::Numeric(src)) => {
            for (&row, &from) in rows.iter().zip(order) {
                dst[row as usize] = src[from as usize];
            }
        }
        (
            FeatureData::Categorical { codes: dst, .. },
            FeatureData::Categorical { codes: src, .. },
        ) => {
            for (&row, &from) in rows.iter().zip(order) {
                dst[row as usize] = src[from as usize];
            }
        }
        _ => unreachable!(),
    }
}

fn restore_feature(
    scratch: &mut DesignMatrix,
    original: &DesignMatrix,
    feat: usize,
    rows: &[u32],
) {
    match (&mut scratch.features[feat], &original.features[feat]) {
        (FeatureData::Numeric(dst), FeatureData::Numeric(src)) => {
            for &row in rows {
                dst[row as usize] = src[row as usize];
            }
        }
        (
            FeatureData::Categorical { codes: dst, .. },
            FeatureData::Categorical { codes: src, .. },
        ) => {
            for &row in rows {
                dst[row as usize] = src[row as usize];
            }
        }
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnSpec, FeatureGroup, FeatureKind, Schema};
    use rand::Rng;

    fn separable_table(n_per_class: usize) -> Table {
        let schema = Schema::new(vec![
            ColumnSpec::new("x", FeatureKind::Numeric, FeatureGroup::Blood),
            ColumnSpec::new("noise", FeatureKind::Numeric, FeatureGroup::Blood),
            ColumnSpec::new(
                "dx",
                FeatureKind::Target { levels: vec!["HC".into(), "NonHC".into()] },
                FeatureGroup::Target,
            ),
        ])
        .unwrap();
        let mut rng = seeded_rng(1234);
        let mut xs = Vec::new();
        let mut noise = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per_class * 2 {
            let class1 = i >= n_per_class;
            xs.push(if class1 { 10.0 + (i % 7) as f64 } else { (i % 7) as f64 });
            noise.push(rng.random::<f64>());
            labels.push(if class1 { "NonHC".to_string() } else { "HC".to_string() });
        }
        let n = xs.len();
        Table::new(
            schema,
            vec![
                Column::Numeric(xs),
                Column::Numeric(noise),
                Column::Categorical(labels),
            ],
            vec![vec![false; n], vec![false; n], vec![false; n]],
        )
        .unwrap()
    }

    #[test]
    fn curve_length_equals_ntree() {
        let t = separable_table(20);
        let forest = super::super::fit_forest(
            &t,
            &ForestConfig::default().with_ntree(25).with_seed(6),
        )
        .unwrap();
        let curve = oob_error(&forest, &t).unwrap();
        assert_eq!(curve.overall.len(), 25);
        assert_eq!(curve.per_class.len(), 2);
        assert_eq!(curve.per_class[0].len(), 25);
        assert_eq!(curve.per_class[1].len(), 25);
    }

    #[test]
    fn separable_data_drives_oob_error_to_zero() {
        let t = separable_table(40);
        let forest = super::super::fit_forest(
            &t,
            &ForestConfig::default().with_ntree(60).with_seed(2),
        )
        .unwrap();
        let curve = oob_error(&forest, &t).unwrap();
        assert!(
            curve.final_error() < 0.05,
            "separable data should have near-zero OOB error, got {}",
            curve.final_error()
        );
    }

    #[test]
    fn oob_coverage_matches_bootstrap_arithmetic() {
        // P(row in-bag for one tree) = 1 − (1 − 1/n)^n → the chance a row
        // never lands OOB across t trees is ≈ (1 − 0.368)^t, negligible for
        // t ≥ 100 at n = 100.
        let t = separable_table(50);
        let forest = super::super::fit_forest(
            &t,
            &ForestConfig::default().with_ntree(100).with_seed(8),
        )
        .unwrap();
        let n = t.n_rows();
        let mut has_oob = vec![false; n];
        for in_bag in forest.in_bag() {
            let mut seen = vec![false; n];
            for &r in in_bag {
                seen[r as usize] = true;
            }
            for (row, s) in seen.iter().enumerate() {
                if !s {
                    has_oob[row] = true;
                }
            }
        }
        let covered = has_oob.iter().filter(|&&x| x).count();
        assert!(
            covered as f64 >= 0.99 * n as f64,
            "only {covered}/{n} rows ever out-of-bag"
        );
    }

    #[test]
    fn tune_singleton_grid_returns_it() {
        let t = separable_table(15);
        let base = ForestConfig::default().with_ntree(10).with_seed(3);
        let result = tune_mtry(&t, &base, &[1]).unwrap();
        assert_eq!(result.best_mtry, 1);
        assert_eq!(result.errors.len(), 1);
    }

    #[test]
    fn tune_equals_manual_sweep_with_derived_seeds() {
        let t = separable_table(25);
        let base = ForestConfig::default().with_ntree(15).with_seed(77);
        let tuned = tune_mtry(&t, &base, &[1, 2]).unwrap();

        let mut sweep = Vec::new();
        for m in [1usize, 2] {
            let config = ForestConfig {
                mtry: Mtry::Fixed(m),
                seed: tuning_seed(77, m),
                ..base.clone()
            };
            let forest = super::super::fit_forest(&t, &config).unwrap();
            sweep.push((m, oob_error(&forest, &t).unwrap().final_error()));
        }
        assert_eq!(tuned.errors, sweep);
        let manual_best = sweep
            .iter()
            .fold(sweep[0], |acc, &x| if x.1 < acc.1 { x } else { acc })
            .0;
        assert_eq!(tuned.best_mtry, manual_best);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let t = separable_table(10);
        assert!(matches!(
            tune_mtry(&t, &ForestConfig::default().with_ntree(5), &[]),
            Err(ForestError::EmptyGrid)
        ));
    }

    #[test]
    fn informative_feature_has_higher_oob_importance() {
        let t = separable_table(40);
        let forest = super::super::fit_forest(
            &t,
            &ForestConfig::default().with_ntree(60).with_seed(21),
        )
        .unwrap();
        let imp = oob_permutation_importance(&forest, &t, 99).unwrap();
        let x = imp.iter().find(|(n, _)| n == "x").unwrap().1;
        let noise = imp.iter().find(|(n, _)| n == "noise").unwrap().1;
        assert!(x > 0.2, "informative importance too low: {x}");
        assert!(noise.abs() < 0.1, "noise importance too high: {noise}");
    }
}
