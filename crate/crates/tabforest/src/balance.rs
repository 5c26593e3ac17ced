//! SMOTE minority oversampling for binary targets.
//!
//! Synthetic rows interpolate between a random minority row and one of its
//! k nearest minority neighbours: numeric features move a uniform random
//! fraction along the segment (a fresh draw per feature), categorical and
//! binary features copy one parent by coin flip. Original rows come first,
//! bit-identical and in order; synthetic rows are appended after them.

use crate::dataset::{Column, DatasetError, FeatureKind, Table};
use crate::rng::{derive_seed, seeded_rng, tag};
use rand::Rng;
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum SmoteTarget {
    /// Oversample until the classes are exactly equal.
    Parity,
    /// Oversample until minority/majority reaches this ratio in (0, 1].
    Ratio(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub target: SmoteTarget,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig { k_neighbors: 5, target: SmoteTarget::Parity, seed: 0 }
    }
}

#[derive(Debug)]
pub enum BalanceError {
    /// Fewer than two minority rows: nothing to interpolate between.
    TooFewMinority { found: usize },
    /// Target is not binary (exactly two declared levels, both present).
    NotBinaryTarget { detail: String },
    /// Masked predictor cells; SMOTE runs after imputation.
    MaskedCell { row: usize, column: String },
    BadConfig(String),
    Dataset(DatasetError),
}

impl fmt::Display for BalanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BalanceError::TooFewMinority { found } => {
                write!(f, "need at least 2 minority rows, found {found}")
            }
            BalanceError::NotBinaryTarget { detail } => {
                write!(f, "smote needs a binary target: {detail}")
            }
            BalanceError::MaskedCell { row, column } => {
                write!(f, "masked cell at row {row}, column `{column}` (impute first)")
            }
            BalanceError::BadConfig(msg) => write!(f, "bad smote config: {msg}"),
            BalanceError::Dataset(e) => write!(f, "dataset error during smote: {e}"),
        }
    }
}

impl std::error::Error for BalanceError {}

impl From<DatasetError> for BalanceError {
    fn from(e: DatasetError) -> Self {
        BalanceError::Dataset(e)
    }
}

/// What a SMOTE run actually did.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoteReport {
    pub minority_class: String,
    pub n_synthetic: usize,
    /// k after clamping to minority − 1.
    pub k_used: usize,
    pub k_clamped: bool,
}

/// Per-row k nearest neighbours among the minority rows themselves, under
/// Euclidean distance on internally standardized columns (population
/// stddev; constant columns contribute nothing). Ties break to the lower
/// row index. k larger than n−1 is clamped; the flag reports it.
pub fn nearest_minority_neighbors(
    rows: &[Vec<f64>],
    k: usize,
) -> Result<(Vec<Vec<usize>>, bool), BalanceError> {
    let n = rows.len();
    if n < 2 {
        return Err(BalanceError::TooFewMinority { found: n });
    }
    if k == 0 {
        return Err(BalanceError::BadConfig("k_neighbors must be at least 1".into()));
    }
    let clamped = k > n - 1;
    let k = k.min(n - 1);

    let dims = rows[0].len();
    if rows.iter().any(|r| r.len() != dims) {
        return Err(BalanceError::BadConfig("ragged neighbour matrix".into()));
    }

    // Standardize per dimension so no single scale dominates the metric.
    let mut means = vec![0.0; dims];
    let mut scales = vec![1.0; dims];
    for d in 0..dims {
        let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[d] - mean) * (r[d] - mean)).sum::<f64>() / n as f64;
        means[d] = mean;
        scales[d] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let std_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().enumerate().map(|(d, v)| (v - means[d]) / scales[d]).collect())
        .collect();

    let mut result = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = std_rows[i]
                    .iter()
                    .zip(&std_rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
        result.push(dists.into_iter().take(k).map(|(_, j)| j).collect());
    }
    Ok((result, clamped))
}

/// SMOTE with a report of what was generated.
pub fn smote_with_report(
    train: &Table,
    config: &SmoteConfig,
) -> Result<(Table, SmoteReport), BalanceError> {
    if let SmoteTarget::Ratio(r) = config.target {
        if !(r > 0.0 && r <= 1.0) {
            return Err(BalanceError::BadConfig(format!("ratio must be in (0, 1], got {r}")));
        }
    }
    train
        .schema()
        .target_index()
        .ok_or_else(|| BalanceError::NotBinaryTarget { detail: "no target column".into() })?;
    let levels = train.schema().target_levels().expect("target present");
    if levels.len() != 2 {
        return Err(BalanceError::NotBinaryTarget {
            detail: format!("target declares {} levels", levels.len()),
        });
    }
    // No masked cells anywhere among predictors or target.
    for (idx, spec) in train.schema().columns().iter().enumerate() {
        if !(spec.kind.is_predictor() || spec.kind.is_target()) {
            continue;
        }
        if let Some(row) = train.mask(idx).iter().position(|&m| m) {
            return Err(BalanceError::MaskedCell { row, column: spec.name.clone() });
        }
    }

    let counts = train.class_counts();
    if counts[0].1 == 0 || counts[1].1 == 0 {
        let empty = if counts[0].1 == 0 { &counts[0].0 } else { &counts[1].0 };
        return Err(BalanceError::NotBinaryTarget {
            detail: format!("class `{empty}` has no rows"),
        });
    }
    // Tie on equal counts: nothing to generate; call class 1 the minority.
    let (minority_level, minority_count, majority_count) = if counts[0].1 < counts[1].1 {
        (counts[0].0.clone(), counts[0].1, counts[1].1)
    } else {
        (counts[1].0.clone(), counts[1].1, counts[0].1)
    };

    let wanted = match config.target {
        SmoteTarget::Parity => majority_count,
        SmoteTarget::Ratio(r) => ((majority_count as f64) * r).round() as usize,
    };
    let n_synthetic = wanted.saturating_sub(minority_count);

    let minority_rows: Vec<usize> = (0..train.n_rows())
        .filter(|&r| train.target_cell(r) == Some(minority_level.as_str()))
        .collect();
    if minority_rows.len() < 2 {
        return Err(BalanceError::TooFewMinority { found: minority_rows.len() });
    }

    // Numeric-kind columns define the neighbour metric.
    let numeric_cols: Vec<usize> = train
        .schema()
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.kind == FeatureKind::Numeric)
        .map(|(i, _)| i)
        .collect();
    let matrix: Vec<Vec<f64>> = minority_rows
        .iter()
        .map(|&r| {
            numeric_cols
                .iter()
                .map(|&c| match train.column(c) {
                    Column::Numeric(v) => v[r],
                    _ => unreachable!(),
                })
                .collect()
        })
        .collect();
    let (neighbors, k_clamped) = nearest_minority_neighbors(&matrix, config.k_neighbors)?;
    let k_used = neighbors[0].len();

    let report = SmoteReport {
        minority_class: minority_level.clone(),
        n_synthetic,
        k_used,
        k_clamped,
    };
    if n_synthetic == 0 {
        return Ok((train.clone(), report));
    }

    // Generate. RNG consumption order per synthetic row: seed row draw,
    // neighbour draw, then one draw per feature column in schema order.
    let mut rng = seeded_rng(derive_seed(config.seed, tag("smote")));
    let (schema, columns, missing) = train.parts();
    let mut out_cols = columns.to_vec();
    let mut out_missing: Vec<Vec<bool>> = missing.to_vec();

    for _ in 0..n_synthetic {
        let si = rng.random_range(0..minority_rows.len());
        let ni = neighbors[si][rng.random_range(0..k_used)];
        let seed_row = minority_rows[si];
        let neighbor_row = minority_rows[ni];

        for (idx, spec) in schema.columns().iter().enumerate() {
            let masked = match &spec.kind {
                FeatureKind::Numeric => {
                    let vals = match &mut out_cols[idx] {
                        Column::Numeric(v) => v,
                        _ => unreachable!(),
                    };
                    let (s, nb) = (vals[seed_row], vals[neighbor_row]);
                    let u: f64 = rng.random();
                    vals.push(s + u * (nb - s));
                    false
                }
                FeatureKind::Binary => {
                    let vals = match &mut out_cols[idx] {
                        Column::Numeric(v) => v,
                        _ => unreachable!(),
                    };
                    let pick = if rng.random_range(0..2u8) == 0 { seed_row } else { neighbor_row };
                    let v = vals[pick];
                    vals.push(v);
                    false
                }
                FeatureKind::Categorical { .. } => {
                    let vals = match &mut out_cols[idx] {
                        Column::Categorical(v) => v,
                        _ => unreachable!(),
                    };
                    let pick = if rng.random_range(0..2u8) == 0 { seed_row } else { neighbor_row };
                    let v = vals[pick].clone();
                    vals.push(v);
                    false
                }
                FeatureKind::Target { .. } => {
                    match &mut out_cols[idx] {
                        Column::Categorical(v) => v.push(minority_level.clone()),
                        _ => unreachable!(),
                    }
                    false
                }
                // metadata columns take the seed row's cell (and its mask)
                FeatureKind::Date => {
                    match &mut out_cols[idx] {
                        Column::Date(v) => {
                            let d = v[seed_row];
                            v.push(d);
                        }
                        _ => unreachable!(),
                    }
                    missing[idx][seed_row]
                }
                FeatureKind::Identifier => {
                    match &mut out_cols[idx] {
                        Column::Text(v) => {
                            let s = v[seed_row].clone();
                            v.push(s);
                        }
                        _ => unreachable!(),
                    }
                    missing[idx][seed_row]
                }
            };
            out_missing[idx].push(masked);
        }
    }

    Ok((Table::new(schema.clone(), out_cols, out_missing)?, report))
}

/// SMOTE the training table; see [`smote_with_report`] for diagnostics.
pub fn smote(train: &Table, config: &SmoteConfig) -> Result<Table, BalanceError> {
    smote_with_report(train, config).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnSpec, FeatureGroup, Schema};

    fn binary_target_spec() -> ColumnSpec {
        ColumnSpec::new(
            "dx",
            FeatureKind::Target { levels: vec!["HC".into(), "NonHC".into()] },
            FeatureGroup::Target,
        )
    }

    fn imbalanced_table(n_major: usize, n_minor: usize, seed: u64) -> Table {
        let schema = Schema::new(vec![
            ColumnSpec::new("a", FeatureKind::Numeric, FeatureGroup::Blood),
            ColumnSpec::new("b", FeatureKind::Numeric, FeatureGroup::Neuropsych),
            ColumnSpec::new("flag", FeatureKind::Binary, FeatureGroup::MedicalHistory),
            ColumnSpec::new(
                "apoe",
                FeatureKind::Categorical { levels: vec!["0".into(), "1".into(), "2".into()] },
                FeatureGroup::ApoE,
            ),
            binary_target_spec(),
        ])
        .unwrap();
        let mut rng = crate::rng::seeded_rng(seed);
        let n = n_major + n_minor;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut flag = Vec::with_capacity(n);
        let mut apoe = Vec::with_capacity(n);
        let mut dx = Vec::with_capacity(n);
        for i in 0..n {
            let minor = i >= n_major;
            a.push(rng.random::<f64>() * 10.0 + if minor { 5.0 } else { 0.0 });
            b.push(rng.random::<f64>() * 3.0);
            flag.push(f64::from(u8::from(rng.random::<f64>() < 0.3)));
            apoe.push(["0", "1", "2"][rng.random_range(0..3usize)].to_string());
            dx.push(if minor { "NonHC".to_string() } else { "HC".to_string() });
        }
        Table::new(
            schema,
            vec![
                Column::Numeric(a),
                Column::Numeric(b),
                Column::Numeric(flag),
                Column::Categorical(apoe),
                Column::Categorical(dx),
            ],
            vec![vec![false; n]; 5],
        )
        .unwrap()
    }

    #[test]
    fn neighbor_example_on_a_line() {
        let rows = vec![vec![0.0], vec![1.0], vec![10.0]];
        let (nn, clamped) = nearest_minority_neighbors(&rows, 1).unwrap();
        assert!(!clamped);
        assert_eq!(nn, vec![vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn oversized_k_is_clamped_with_warning() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let (nn, clamped) = nearest_minority_neighbors(&rows, 10).unwrap();
        assert!(clamped);
        assert!(nn.iter().all(|l| l.len() == 2));
    }

    #[test]
    fn duplicate_points_tie_break_by_index() {
        let rows = vec![vec![5.0], vec![5.0], vec![5.0]];
        let (nn, _) = nearest_minority_neighbors(&rows, 1).unwrap();
        assert_eq!(nn, vec![vec![1], vec![0], vec![0]]);
    }

    #[test]
    fn too_few_minority_rows() {
        assert!(matches!(
            nearest_minority_neighbors(&[vec![1.0]], 1),
            Err(BalanceError::TooFewMinority { found: 1 })
        ));
    }

    #[test]
    fn parity_on_paper_counts() {
        let t = imbalanced_table(862, 320, 1);
        let (out, report) = smote_with_report(&t, &SmoteConfig::default()).unwrap();
        assert_eq!(report.n_synthetic, 542);
        let counts = out.class_counts();
        assert_eq!(counts[0].1, 862);
        assert_eq!(counts[1].1, 862);
        assert_eq!(out.n_rows(), 862 + 862);
    }

    #[test]
    fn originals_come_first_bit_identical() {
        let t = imbalanced_table(40, 10, 2);
        let out = smote(&t, &SmoteConfig { seed: 9, ..Default::default() }).unwrap();
        let prefix: Vec<usize> = (0..t.n_rows()).collect();
        assert_eq!(out.select_rows(&prefix), t);
    }

    #[test]
    fn identical_minority_rows_clone_exactly() {
        let schema = Schema::new(vec![
            ColumnSpec::new("a", FeatureKind::Numeric, FeatureGroup::Blood),
            binary_target_spec(),
        ])
        .unwrap();
        let a = vec![1.0, 2.0, 3.0, 4.0, 7.5, 7.5];
        let dx: Vec<String> = ["HC", "HC", "HC", "HC", "NonHC", "NonHC"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let n = a.len();
        let t = Table::new(
            schema,
            vec![Column::Numeric(a), Column::Categorical(dx)],
            vec![vec![false; n]; 2],
        )
        .unwrap();
        let out = smote(&t, &SmoteConfig::default()).unwrap();
        assert_eq!(out.class_counts()[0].1, out.class_counts()[1].1);
        for r in n..out.n_rows() {
            assert_eq!(out.numeric_cell(0, r), Some(7.5));
            assert_eq!(out.target_cell(r), Some("NonHC"));
        }
    }

    #[test]
    fn synthetic_numerics_stay_in_minority_envelope() {
        let t = imbalanced_table(60, 12, 3);
        let out = smote(&t, &SmoteConfig { seed: 4, ..Default::default() }).unwrap();
        // every synthetic numeric value must lie within the minority class's
        // per-feature [min, max] envelope (a superset of the parent segment)
        for col in [0usize, 1] {
            let vals = match t.column(col) {
                Column::Numeric(v) => v,
                _ => unreachable!(),
            };
            let minority: Vec<f64> = (0..t.n_rows())
                .filter(|&r| t.target_cell(r) == Some("NonHC"))
                .map(|r| vals[r])
                .collect();
            let lo = minority.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = minority.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out_vals = match out.column(col) {
                Column::Numeric(v) => v,
                _ => unreachable!(),
            };
            for r in t.n_rows()..out.n_rows() {
                assert!(out_vals[r] >= lo - 1e-12 && out_vals[r] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn smote_is_deterministic() {
        let t = imbalanced_table(50, 15, 6);
        let cfg = SmoteConfig { seed: 123, ..Default::default() };
        assert_eq!(smote(&t, &cfg).unwrap(), smote(&t, &cfg).unwrap());
        let other = SmoteConfig { seed: 124, ..Default::default() };
        assert_ne!(smote(&t, &cfg).unwrap(), smote(&t, &other).unwrap());
    }

    #[test]
    fn ratio_target_generates_partial_balance() {
        let t = imbalanced_table(100, 20, 7);
        let cfg = SmoteConfig { target: SmoteTarget::Ratio(0.5), ..Default::default() };
        let out = smote(&t, &cfg).unwrap();
        let counts = out.class_counts();
        assert_eq!(counts[1].1, 50);
        assert!(matches!(
            smote(&t, &SmoteConfig { target: SmoteTarget::Ratio(1.5), ..Default::default() }),
            Err(BalanceError::BadConfig(_))
        ));
    }

    #[test]
    fn masked_cells_are_rejected() {
        let schema = Schema::new(vec![
            ColumnSpec::new("a", FeatureKind::Numeric, FeatureGroup::Blood),
            binary_target_spec(),
        ])
        .unwrap();
        let t = Table::new(
            schema,
            vec![
                Column::Numeric(vec![1.0, 2.0, 3.0, 4.0]),
                Column::Categorical(vec![
                    "HC".into(),
                    "HC".into(),
                    "NonHC".into(),
                    "NonHC".into(),
                ]),
            ],
            vec![vec![false, true, false, false], vec![false; 4]],
        )
        .unwrap();
        assert!(matches!(
            smote(&t, &SmoteConfig::default()),
            Err(BalanceError::MaskedCell { row: 1, .. })
        ));
    }
}
