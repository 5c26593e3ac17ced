//! Missing-value imputation: a mean/mode baseline and MissForest-style
//! iterative random-forest imputation for mixed-type tables.
//!
//! MissForest warm-starts from the mean/mode fill, then sweeps the columns
//! in ascending missing-count order, refitting a forest per column (numeric
//! columns get regression forests, binary/categorical get classifiers) and
//! re-imputing its originally missing cells. Sweeps continue until the
//! imputation difference worsens for every variable type present, at which
//! point the previous sweep's state is returned, or until `max_iter`.
//!
//! Observed cells are never modified. Date, Identifier, and Target columns
//! are never imputed; a fully observed target does serve as a predictor,
//! matching the usual practice of imputing over the whole frame.

use crate::dataset::{Column, DatasetError, FeatureKind, Table};
use crate::design::{DesignMatrix, FeatureData};
use crate::forest::{self, ForestError};
use crate::rng::{derive_seed, tag};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct ImputeConfig {
    /// Trees per per-column forest.
    pub ntree: usize,
    /// Cap on full sweeps over the columns.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        // 100 trees, ten iterations
        ImputeConfig { ntree: 100, max_iter: 10, seed: 0 }
    }
}

#[derive(Debug)]
pub enum ImputeError {
    /// An imputable column has no observed values to learn from.
    AllMissingColumn { column: String },
    /// NRMSE asked for but no masked numeric cells exist.
    NoEvalCells,
    BadConfig(String),
    /// Fewer than two columns available to the imputation loop.
    TooFewColumns,
    Forest(ForestError),
    Dataset(DatasetError),
}

impl fmt::Display for ImputeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImputeError::AllMissingColumn { column } => {
                write!(f, "column `{column}` has no observed values")
            }
            ImputeError::NoEvalCells => write!(f, "no masked numeric cells to evaluate"),
            ImputeError::BadConfig(msg) => write!(f, "bad impute config: {msg}"),
            ImputeError::TooFewColumns => {
                write!(f, "imputation needs at least two usable columns")
            }
            ImputeError::Forest(e) => write!(f, "forest error during imputation: {e}"),
            ImputeError::Dataset(e) => write!(f, "dataset error during imputation: {e}"),
        }
    }
}

impl std::error::Error for ImputeError {}

impl From<ForestError> for ImputeError {
    fn from(e: ForestError) -> Self {
        ImputeError::Forest(e)
    }
}

impl From<DatasetError> for ImputeError {
    fn from(e: DatasetError) -> Self {
        ImputeError::Dataset(e)
    }
}

/// Completed table plus convergence diagnostics.
#[derive(Clone, Debug)]
pub struct ImputeResult {
    pub table: Table,
    /// Sweeps whose imputations are reflected in `table`.
    pub iterations_run: usize,
    /// Per executed sweep: (numeric difference, categorical difference).
    pub diff_trace: Vec<(f64, f64)>,
}

fn is_imputable(kind: &FeatureKind) -> bool {
    matches!(
        kind,
        FeatureKind::Numeric | FeatureKind::Binary | FeatureKind::Categorical { .. }
    )
}

/// Fill masked cells with the column mean (Numeric) or mode (Binary and
/// Categorical; ties break to the lexicographically first level, and to 0
/// for binary columns). Date/Identifier/Target cells pass through untouched.
pub fn mean_mode_fill(table: &Table) -> Result<Table, ImputeError> {
    let (schema, columns, missing) = table.parts();
    let mut out_cols = columns.to_vec();
    let mut out_missing = missing.to_vec();

    for (idx, spec) in schema.columns().iter().enumerate() {
        if !is_imputable(&spec.kind) {
            continue;
        }
        let n_missing = missing[idx].iter().filter(|&&m| m).count();
        if n_missing == 0 {
            continue;
        }
        if n_missing == table.n_rows() {
            return Err(ImputeError::AllMissingColumn { column: spec.name.clone() });
        }
        match (&spec.kind, &mut out_cols[idx]) {
            (FeatureKind::Numeric, Column::Numeric(vals)) => {
                let (sum, count) = vals
                    .iter()
                    .enumerate()
                    .filter(|(row, _)| !missing[idx][*row])
                    .fold((0.0, 0usize), |(s, c), (_, v)| (s + v, c + 1));
                let mean = sum / count as f64;
                for (row, v) in vals.iter_mut().enumerate() {
                    if missing[idx][row] {
                        *v = mean;
                    }
                }
            }
            (FeatureKind::Binary, Column::Numeric(vals)) => {
                let ones = vals
                    .iter()
                    .enumerate()
                    .filter(|(row, v)| !missing[idx][*row] && **v == 1.0)
                    .count();
                let zeros = table.n_rows() - n_missing - ones;
                // "0" < "1", so a tie goes to 0
                let mode = if ones > zeros { 1.0 } else { 0.0 };
                for (row, v) in vals.iter_mut().enumerate() {
                    if missing[idx][row] {
                        *v = mode;
                    }
                }
            }
            (FeatureKind::Categorical { levels }, Column::Categorical(vals)) => {
                let mut counts = vec![0usize; levels.len()];
                for (row, v) in vals.iter().enumerate() {
                    if !missing[idx][row] {
                        if let Some(l) = levels.iter().position(|x| x == v) {
                            counts[l] += 1;
                        }
                    }
                }
                let mode = levels
                    .iter()
                    .zip(&counts)
                    .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then(lb.cmp(la)))
                    .map(|(l, _)| l.clone())
                    .expect("non-empty level set");
                for (row, v) in vals.iter_mut().enumerate() {
                    if missing[idx][row] {
                        *v = mode.clone();
                    }
                }
            }
            _ => unreachable!("imputable kind with mismatched storage"),
        }
        for m in out_missing[idx].iter_mut() {
            *m = false;
        }
    }

    Ok(Table::new(schema.clone(), out_cols, out_missing)?)
}

/// Working state for one imputable column during the sweeps.
struct WorkCol {
    table_idx: usize,
    data: FeatureData,
    kind: WorkKind,
    /// Rows where the original table had an observed value.
    observed_rows: Vec<u32>,
    /// Rows being imputed.
    masked_rows: Vec<u32>,
}

enum WorkKind {
    Numeric,
    Binary,
    Categorical { levels: Vec<String> },
}

/// MissForest. See the module docs for the loop structure; the returned
/// trace has one entry per executed sweep even when the last sweep is
/// rolled back.
pub fn missforest(table: &Table, config: &ImputeConfig) -> Result<ImputeResult, ImputeError> {
    if config.ntree == 0 || config.max_iter == 0 {
        return Err(ImputeError::BadConfig("ntree and max_iter must be at least 1".into()));
    }
    if table.missing_cells() == 0
        || table
            .schema()
            .columns()
            .iter()
            .enumerate()
            .all(|(i, s)| !is_imputable(&s.kind) || table.mask(i).iter().all(|&m| !m))
    {
        return Ok(ImputeResult { table: table.clone(), iterations_run: 0, diff_trace: vec![] });
    }

    let warm = mean_mode_fill(table)?;

    // Extract working columns. Every imputable column participates as a
    // predictor; the target joins as a predictor when fully observed.
    let mut cols: Vec<WorkCol> = Vec::new();
    for (idx, spec) in table.schema().columns().iter().enumerate() {
        let include = is_imputable(&spec.kind)
            || (spec.kind.is_target() && table.mask(idx).iter().all(|&m| !m));
        if !include {
            continue;
        }
        let observed_rows: Vec<u32> = (0..table.n_rows() as u32)
            .filter(|&r| !table.is_missing(idx, r as usize))
            .collect();
        let masked_rows: Vec<u32> = (0..table.n_rows() as u32)
            .filter(|&r| table.is_missing(idx, r as usize))
            .collect();
        let (data, kind) = match (&spec.kind, warm.column(idx)) {
            (FeatureKind::Numeric, Column::Numeric(v)) => {
                (FeatureData::Numeric(v.clone()), WorkKind::Numeric)
            }
            (FeatureKind::Binary, Column::Numeric(v)) => {
                (FeatureData::Numeric(v.clone()), WorkKind::Binary)
            }
            (
                FeatureKind::Categorical { levels } | FeatureKind::Target { levels },
                Column::Categorical(v),
            ) => {
                let codes: Vec<u32> = v
                    .iter()
                    .map(|x| levels.iter().position(|l| l == x).unwrap_or(0) as u32)
                    .collect();
                (
                    FeatureData::Categorical { codes, n_levels: levels.len() as u32 },
                    WorkKind::Categorical { levels: levels.clone() },
                )
            }
            _ => unreachable!(),
        };
        cols.push(WorkCol { table_idx: idx, data, kind, observed_rows, masked_rows });
    }
    if cols.len() < 2 {
        return Err(ImputeError::TooFewColumns);
    }

    // Visit order: ascending original missing count, ties by column index.
    let mut visit: Vec<usize> = (0..cols.len()).filter(|&i| !cols[i].masked_rows.is_empty()).collect();
    visit.sort_by_key(|&i| (cols[i].masked_rows.len(), cols[i].table_idx));

    let names: Vec<String> = cols
        .iter()
        .map(|c| table.schema().spec(c.table_idx).name.clone())
        .collect();
    let n_rows = table.n_rows();
    let base_seed = derive_seed(config.seed, tag("missforest"));

    let mut diff_trace: Vec<(f64, f64)> = Vec::new();
    let mut kept_iteration = 0usize;
    let mut snapshot: Vec<FeatureData> = cols.iter().map(|c| c.data.clone()).collect();

    for iter in 1..=config.max_iter {
        let before: Vec<FeatureData> = cols.iter().map(|c| c.data.clone()).collect();

        for &ci in &visit {
            let predictors: Vec<usize> = (0..cols.len()).filter(|&j| j != ci).collect();
            let design = DesignMatrix {
                names: predictors.iter().map(|&j| names[j].clone()).collect(),
                features: predictors.iter().map(|&j| cols[j].data.clone()).collect(),
                n_rows,
            };
            let col_seed = derive_seed(derive_seed(base_seed, iter as u64), ci as u64);
            let mtry = ((design.n_features() as f64).sqrt().floor() as usize).max(1);

            let observed = cols[ci].observed_rows.clone();
            let masked = cols[ci].masked_rows.clone();
            let WorkCol { kind, data, .. } = &mut cols[ci];
            match (&*kind, data) {
                (WorkKind::Numeric, FeatureData::Numeric(values)) => {
                    // regression forest; nodesize 5 is the usual regression default
                    let model = forest::fit_regression_forest(
                        &design, values, &observed, config.ntree, mtry, 5, col_seed,
                    );
                    for &r in &masked {
                        values[r as usize] = model.predict(&design, r as usize);
                    }
                }
                (WorkKind::Binary, FeatureData::Numeric(values)) => {
                    let codes: Vec<u32> =
                        values.iter().map(|&v| if v == 0.0 { 0 } else { 1 }).collect();
                    let model = forest::fit_design_forest(
                        &design, &codes, 2, &observed, config.ntree, mtry, 1, col_seed,
                    );
                    for &r in &masked {
                        values[r as usize] = f64::from(model.predict(&design, r as usize));
                    }
                }
                (
                    WorkKind::Categorical { levels },
                    FeatureData::Categorical { codes, .. },
                ) => {
                    let model = forest::fit_design_forest(
                        &design,
                        codes,
                        levels.len(),
                        &observed,
                        config.ntree,
                        mtry,
                        1,
                        col_seed,
                    );
                    for &r in &masked {
                        codes[r as usize] = model.predict(&design, r as usize);
                    }
                }
                _ => unreachable!(),
            }
        }

        let (num_diff, cat_diff, has_num, has_cat) = sweep_diffs(&cols, &before);
        diff_trace.push((num_diff, cat_diff));

        let worsened = if iter == 1 {
            false
        } else {
            let (prev_num, prev_cat) = diff_trace[iter - 2];
            let num_worse = !has_num || num_diff > prev_num;
            let cat_worse = !has_cat || cat_diff > prev_cat;
            num_worse && cat_worse
        };
        if worsened {
            // roll back to the previous sweep's state
            for (col, snap) in cols.iter_mut().zip(snapshot.iter()) {
                col.data = snap.clone();
            }
            break;
        }
        snapshot = cols.iter().map(|c| c.data.clone()).collect();
        kept_iteration = iter;
    }

    // Write the working data back into a fresh table.
    let (schema, columns, missing) = table.parts();
    let mut out_cols = columns.to_vec();
    let mut out_missing = missing.to_vec();
    for col in &cols {
        if col.masked_rows.is_empty() {
            continue;
        }
        let idx = col.table_idx;
        match (&col.data, &mut out_cols[idx]) {
            (FeatureData::Numeric(new_vals), Column::Numeric(dst)) => {
                for &r in &col.masked_rows {
                    dst[r as usize] = new_vals[r as usize];
                }
            }
            (FeatureData::Categorical { codes, .. }, Column::Categorical(dst)) => {
                let levels = match &col.kind {
                    WorkKind::Categorical { levels } => levels,
                    _ => unreachable!(),
                };
                for &r in &col.masked_rows {
                    dst[r as usize] = levels[codes[r as usize] as usize].clone();
                }
            }
            _ => unreachable!(),
        }
        for &r in &col.masked_rows {
            out_missing[idx][r as usize] = false;
        }
    }

    Ok(ImputeResult {
        table: Table::new(schema.clone(), out_cols, out_missing)?,
        iterations_run: kept_iteration,
        diff_trace,
    })
}

/// Differences between consecutive sweeps over the imputed cells only:
/// numeric = Σ(new−old)² / Σnew², categorical = changed fraction.
fn sweep_diffs(
    cols: &[WorkCol],
    before: &[FeatureData],
) -> (f64, f64, bool, bool) {
    let mut num_sq = 0.0;
    let mut num_new_sq = 0.0;
    let mut has_num = false;
    let mut cat_changed = 0usize;
    let mut cat_total = 0usize;

    for (col, old) in cols.iter().zip(before) {
        if col.masked_rows.is_empty() {
            continue;
        }
        match (&col.kind, &col.data, old) {
            (WorkKind::Numeric, FeatureData::Numeric(new_vals), FeatureData::Numeric(old_vals)) => {
                has_num = true;
                for &r in &col.masked_rows {
                    let (n, o) = (new_vals[r as usize], old_vals[r as usize]);
                    num_sq += (n - o) * (n - o);
                    num_new_sq += n * n;
                }
            }
            (WorkKind::Binary, FeatureData::Numeric(new_vals), FeatureData::Numeric(old_vals)) => {
                for &r in &col.masked_rows {
                    cat_total += 1;
                    if new_vals[r as usize] != old_vals[r as usize] {
                        cat_changed += 1;
                    }
                }
            }
            (
                WorkKind::Categorical { .. },
                FeatureData::Categorical { codes: new_codes, .. },
                FeatureData::Categorical { codes: old_codes, .. },
            ) => {
                for &r in &col.masked_rows {
                    cat_total += 1;
                    if new_codes[r as usize] != old_codes[r as usize] {
                        cat_changed += 1;
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    let num_diff = if num_new_sq > 0.0 { num_sq / num_new_sq } else { 0.0 };
    let cat_diff = if cat_total > 0 { cat_changed as f64 / cat_total as f64 } else { 0.0 };
    (num_diff, cat_diff, has_num, cat_total > 0)
}

/// Normalized RMSE of imputed vs true values over the masked Numeric cells:
/// sqrt(mean squared error) divided by the population stddev of the true
/// values at those cells. 0 is perfect; mean-fill scores ≈ 1 under MCAR.
pub fn imputation_nrmse(
    completed: &Table,
    truth: &Table,
    original_mask: &[Vec<bool>],
) -> Result<f64, ImputeError> {
    if completed.n_cols() != truth.n_cols()
        || completed.n_rows() != truth.n_rows()
        || original_mask.len() != truth.n_cols()
    {
        return Err(ImputeError::BadConfig("shape mismatch between tables and mask".into()));
    }
    let mut imputed = Vec::new();
    let mut actual = Vec::new();
    for (idx, spec) in truth.schema().columns().iter().enumerate() {
        if spec.kind != FeatureKind::Numeric {
            continue;
        }
        let (comp, tru) = match (completed.column(idx), truth.column(idx)) {
            (Column::Numeric(c), Column::Numeric(t)) => (c, t),
            _ => unreachable!(),
        };
        for (row, &was_masked) in original_mask[idx].iter().enumerate() {
            if was_masked {
                imputed.push(comp[row]);
                actual.push(tru[row]);
            }
        }
    }
    if imputed.is_empty() {
        return Err(ImputeError::NoEvalCells);
    }
    let n = actual.len() as f64;
    let mse = imputed
        .iter()
        .zip(&actual)
        .map(|(i, t)| (i - t) * (i - t))
        .sum::<f64>()
        / n;
    let mean = actual.iter().sum::<f64>() / n;
    let var = actual.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    if var == 0.0 {
        // constant truth: only a perfect imputation has a meaningful score
        return Ok(if mse == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((mse / var).sqrt())
}
