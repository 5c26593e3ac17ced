//! Principal component analysis on standardized predictors.
//!
//! Inputs are z-scored per feature (population stddev), then the covariance
//! matrix — equal to the correlation matrix on standardized data — is
//! diagonalized with a cyclic Jacobi eigensolver. Components come back in
//! descending eigenvalue order with a fixed sign convention (the entry of
//! largest magnitude is positive), so results are identical across runs.
//!
//! Categorical features must be one-hot encoded first; see
//! [`one_hot_encode`].

use crate::dataset::{Column, ColumnSpec, DatasetError, FeatureKind, Schema, Table};
use crate::forest::{self, ForestConfig, ForestError};
use std::fmt;

#[derive(Debug)]
pub enum PcaError {
    /// Need at least two rows to fit.
    TooFewRows { found: usize },
    /// k outside [1, #components].
    BadComponentCount { k: usize, available: usize },
    MaskedCell { row: usize, column: String },
    /// A predictor column is not Numeric; one-hot encode first.
    NonNumericColumn { column: String },
    /// Table's features don't match the fitted model.
    SchemaMismatch(String),
    Dataset(DatasetError),
    Forest(ForestError),
}

impl fmt::Display for PcaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PcaError::TooFewRows { found } => write!(f, "pca needs at least 2 rows, got {found}"),
            PcaError::BadComponentCount { k, available } => {
                write!(f, "component count {k} outside [1, {available}]")
            }
            PcaError::MaskedCell { row, column } => {
                write!(f, "masked cell at row {row}, column `{column}`")
            }
            PcaError::NonNumericColumn { column } => {
                write!(f, "column `{column}` is not numeric; one-hot encode before pca")
            }
            PcaError::SchemaMismatch(msg) => write!(f, "schema mismatch: {msg}"),
            PcaError::Dataset(e) => write!(f, "dataset error during pca: {e}"),
            PcaError::Forest(e) => write!(f, "forest error during pca study: {e}"),
        }
    }
}

impl std::error::Error for PcaError {}

impl From<DatasetError> for PcaError {
    fn from(e: DatasetError) -> Self {
        PcaError::Dataset(e)
    }
}

impl From<ForestError> for PcaError {
    fn from(e: ForestError) -> Self {
        PcaError::Forest(e)
    }
}

/// Fitted PCA: standardization parameters plus the eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    /// Population stddevs; constant columns store 1.0 and project to zero.
    pub scales: Vec<f64>,
    /// `components[j]` is the j-th eigenvector (descending eigenvalue).
    pub components: Vec<Vec<f64>>,
    /// Non-negative, non-increasing.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }
}

/// Expand Categorical predictors into 0/1 indicator columns (`name=level`),
/// re-kind Binary to Numeric, pass Numeric and the Target through. Date or
/// Identifier columns are an error: drop them first.
pub fn one_hot_encode(table: &Table) -> Result<Table, PcaError> {
    let mut specs = Vec::new();
    let mut cols = Vec::new();
    let mut missing = Vec::new();
    for (idx, spec) in table.schema().columns().iter().enumerate() {
        match &spec.kind {
            FeatureKind::Numeric | FeatureKind::Binary => {
                specs.push(ColumnSpec {
                    name: spec.name.clone(),
                    kind: FeatureKind::Numeric,
                    valid_range: None,
                    group: spec.group,
                });
                cols.push(table.column(idx).clone());
                missing.push(table.mask(idx).to_vec());
            }
            FeatureKind::Categorical { levels } => {
                let vals = match table.column(idx) {
                    Column::Categorical(v) => v,
                    _ => unreachable!(),
                };
                for level in levels {
                    let indicator: Vec<f64> = vals
                        .iter()
                        .map(|v| f64::from(u8::from(v == level)))
                        .collect();
                    specs.push(ColumnSpec {
                        name: format!("{}={level}", spec.name),
                        kind: FeatureKind::Numeric,
                        valid_range: None,
                        group: spec.group,
                    });
                    cols.push(Column::Numeric(indicator));
                    missing.push(table.mask(idx).to_vec());
                }
            }
            FeatureKind::Target { .. } => {
                specs.push(spec.clone());
                cols.push(table.column(idx).clone());
                missing.push(table.mask(idx).to_vec());
            }
            FeatureKind::Date | FeatureKind::Identifier => {
                return Err(PcaError::NonNumericColumn { column: spec.name.clone() });
            }
        }
    }
    Ok(Table::new(Schema::new(specs)?, cols, missing)?)
}

/// Numeric predictor columns (in schema order) with their values, rejecting
/// masked cells and non-numeric predictors.
fn numeric_predictors(table: &Table) -> Result<(Vec<String>, Vec<Vec<f64>>), PcaError> {
    let mut names = Vec::new();
    let mut data = Vec::new();
    for (idx, spec) in table.schema().columns().iter().enumerate() {
        if spec.kind.is_target() || spec.kind == FeatureKind::Date || spec.kind == FeatureKind::Identifier {
            if spec.kind.is_target() {
                continue;
            }
            return Err(PcaError::NonNumericColumn { column: spec.name.clone() });
        }
        if spec.kind != FeatureKind::Numeric {
            return Err(PcaError::NonNumericColumn { column: spec.name.clone() });
        }
        if let Some(row) = table.mask(idx).iter().position(|&m| m) {
            return Err(PcaError::MaskedCell { row, column: spec.name.clone() });
        }
        names.push(spec.name.clone());
        match table.column(idx) {
            Column::Numeric(v) => data.push(v.clone()),
            _ => unreachable!(),
        }
    }
    Ok((names, data))
}

/// Fit PCA on a fully observed all-numeric training table.
pub fn fit_pca(train: &Table) -> Result<PcaModel, PcaError> {
    if train.n_rows() < 2 {
        return Err(PcaError::TooFewRows { found: train.n_rows() });
    }
    let (names, data) = numeric_predictors(train)?;
    let n = train.n_rows() as f64;
    let p = data.len();

    let mut means = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for col in &data {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        means.push(mean);
        scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
    }
    let z: Vec<Vec<f64>> = data
        .iter()
        .enumerate()
        .map(|(j, col)| col.iter().map(|v| (v - means[j]) / scales[j]).collect())
        .collect();

    // covariance of standardized columns = correlation matrix
    let mut cov = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in a..p {
            let s: f64 = z[a].iter().zip(&z[b]).map(|(x, y)| x * y).sum();
            cov[a][b] = s / n;
            cov[b][a] = cov[a][b];
        }
    }

    let (mut eigenvalues, mut components) = jacobi_eigen(cov);

    // descending eigenvalue order, negatives clamped, signs fixed
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eigenvalues[b].partial_cmp(&eigenvalues[a]).expect("finite"));
    eigenvalues = order.iter().map(|&i| eigenvalues[i].max(0.0)).collect();
    components = order.iter().map(|&i| std::mem::take(&mut components[i])).collect();
    for v in &mut components {
        let mut max_idx = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[max_idx].abs() {
                max_idx = i;
            }
        }
        if v[max_idx] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }

    Ok(PcaModel { feature_names: names, means, scales, components, eigenvalues })
}

/// Project a table onto the first k components. The output table holds the
/// k score columns (`PC1..PCk`) plus the input's target column when present,
/// so it can feed straight into a classifier.
pub fn project(model: &PcaModel, table: &Table, k: usize) -> Result<Table, PcaError> {
    let p = model.n_components();
    if k == 0 || k > p {
        return Err(PcaError::BadComponentCount { k, available: p });
    }
    let (names, data) = numeric_predictors(table)?;
    if names != model.feature_names {
        return Err(PcaError::SchemaMismatch(format!(
            "fitted on {:?}, given {:?}",
            model.feature_names, names
        )));
    }

    let n = table.n_rows();
    let mut scores = vec![Vec::with_capacity(n); k];
    for row in 0..n {
        for (j, component) in model.components.iter().take(k).enumerate() {
            let mut s = 0.0;
            for (f, col) in data.iter().enumerate() {
                s += component[f] * (col[row] - model.means[f]) / model.scales[f];
            }
            scores[j].push(s);
        }
    }

    let mut specs: Vec<ColumnSpec> = (0..k)
        .map(|j| ColumnSpec::new(format!("PC{}", j + 1), FeatureKind::Numeric, crate::dataset::FeatureGroup::Meta))
        .collect();
    let mut cols: Vec<Column> = scores.into_iter().map(Column::Numeric).collect();
    let mut missing: Vec<Vec<bool>> = vec![vec![false; n]; k];
    if let Some(t_idx) = table.schema().target_index() {
        specs.push(table.schema().spec(t_idx).clone());
        cols.push(table.column(t_idx).clone());
        missing.push(table.mask(t_idx).to_vec());
    }
    Ok(Table::new(Schema::new(specs)?, cols, missing)?)
}

/// Reconstruct standardized inputs from the first k scores; used by the
/// completeness tests (k = p recovers the standardized data exactly).
pub fn reconstruct_standardized(
    model: &PcaModel,
    scores: &Table,
    k: usize,
) -> Result<Vec<Vec<f64>>, PcaError> {
    let p = model.n_components();
    if k == 0 || k > p {
        return Err(PcaError::BadComponentCount { k, available: p });
    }
    let n = scores.n_rows();
    let mut out = vec![vec![0.0; p]; n];
    for row in 0..n {
        for j in 0..k {
            let col = scores
                .column_by_name(&format!("PC{}", j + 1))
                .ok_or_else(|| PcaError::SchemaMismatch("not a score table".into()))?;
            let s = match col {
                Column::Numeric(v) => v[row],
                _ => unreachable!(),
            };
            for f in 0..p {
                out[row][f] += s * model.components[j][f];
            }
        }
    }
    Ok(out)
}

/// Cumulative explained-variance fractions, ending at 1.
pub fn explained_variance(model: &PcaModel) -> Vec<f64> {
    let total: f64 = model.eigenvalues.iter().sum();
    if total <= 0.0 {
        return vec![1.0; model.eigenvalues.len()];
    }
    let mut acc = 0.0;
    model
        .eigenvalues
        .iter()
        .map(|&l| {
            acc += l / total;
            acc.min(1.0)
        })
        .collect()
}

/// For each k: fit PCA on train, project both tables, fit a forest on the
/// projected train, and measure test accuracy. Tables are one-hot encoded
/// internally; the PCA itself is fitted once since the basis is nested.
pub fn accuracy_vs_components(
    train: &Table,
    test: &Table,
    ks: &[usize],
    forest_config: &ForestConfig,
) -> Result<Vec<(usize, f64)>, PcaError> {
    let train_enc = one_hot_encode(train)?;
    let test_enc = one_hot_encode(test)?;
    let model = fit_pca(&train_enc)?;
    let mut curve = Vec::with_capacity(ks.len());
    for &k in ks {
        let train_k = project(&model, &train_enc, k)?;
        let test_k = project(&model, &test_enc, k)?;
        let forest = forest::fit_forest(&train_k, forest_config)?;
        let preds = forest.predict_table(&test_k)?;
        let correct = preds
            .iter()
            .enumerate()
            .filter(|(row, p)| test_k.target_cell(*row) == Some(p.label.as_str()))
            .count();
        curve.push((k, correct as f64 / test_k.n_rows() as f64));
    }
    Ok(curve)
}

/// Cyclic Jacobi diagonalization of a symmetric matrix. Returns eigenvalues
/// and eigenvectors (rows of the returned matrix), unsorted.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    if n == 0 {
        return (vec![], vec![]);
    }

    let frob: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let tol = 1e-15 * frob.max(1e-300);

    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                if a[p][q].abs() <= tol / (n as f64) {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[p][i];
                    let aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for i in 0..n {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    // column i of v is the eigenvector for eigenvalue i; return as rows
    let vectors: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|r| v[r][i]).collect()).collect();
    (eigenvalues, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureGroup;
    use rand_distr::{Distribution, StandardNormal};

    fn numeric_table(cols: Vec<(&str, Vec<f64>)>, labels: Vec<&str>) -> Table {
        let n = labels.len();
        let mut specs: Vec<ColumnSpec> = cols
            .iter()
            .map(|(name, _)| ColumnSpec::new(*name, FeatureKind::Numeric, FeatureGroup::Blood))
            .collect();
        specs.push(ColumnSpec::new(
            "dx",
            FeatureKind::Target { levels: vec!["HC".into(), "NonHC".into()] },
            FeatureGroup::Target,
        ));
        let mut columns: Vec<Column> =
            cols.into_iter().map(|(_, v)| Column::Numeric(v)).collect();
        columns.push(Column::Categorical(labels.iter().map(|s| s.to_string()).collect()));
        let k = columns.len();
        Table::new(Schema::new(specs).unwrap(), columns, vec![vec![false; n]; k]).unwrap()
    }

    fn line_table(n: usize) -> Table {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let labels: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "HC" } else { "NonHC" }).collect();
        numeric_table(vec![("x", xs), ("y", ys)], labels)
    }

    #[test]
    fn perfectly_correlated_data_is_rank_one() {
        let model = fit_pca(&line_table(50)).unwrap();
        let ev = explained_variance(&model);
        assert!((ev[0] - 1.0).abs() < 1e-10, "first component carries all variance: {ev:?}");
        assert!(model.eigenvalues[1].abs() < 1e-10);
    }

    #[test]
    fn isotropic_gaussian_splits_evenly() {
        let mut rng = crate::rng::seeded_rng(42);
        let n = 10000;
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ys: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let labels: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "HC" } else { "NonHC" }).collect();
        let t = numeric_table(vec![("x", xs), ("y", ys)], labels);
        let model = fit_pca(&t).unwrap();
        let ev = explained_variance(&model);
        assert!(
            (ev[0] - 0.5).abs() < 0.03,
            "isotropic data should split 50/50, got {ev:?}"
        );
        assert!((ev[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn components_are_orthonormal() {
        let mut rng = crate::rng::seeded_rng(7);
        let n = 200;
        let make = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| StandardNormal.sample(rng)).collect()
        };
        let a = make(&mut rng);
        let b: Vec<f64> = a.iter().zip(make(&mut rng)).map(|(x, e)| x * 0.8 + e).collect();
        let c = make(&mut rng);
        let labels: Vec<&str> = (0..n).map(|i| if i % 3 == 0 { "HC" } else { "NonHC" }).collect();
        let t = numeric_table(vec![("a", a), ("b", b), ("c", c)], labels);
        let model = fit_pca(&t).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = model.components[i]
                    .iter()
                    .zip(&model.components[j])
                    .map(|(x, y)| x * y)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - expect).abs() < 1e-10,
                    "<v{i}, v{j}> = {dot}, expected {expect}"
                );
            }
        }
    }

    #[test]
    fn eigen_residuals_are_small() {
        let mut rng = crate::rng::seeded_rng(15);
        let n = 300;
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let named: Vec<(&str, Vec<f64>)> = ["a", "b", "c", "d", "e", "f"]
            .iter()
            .zip(cols)
            .map(|(n, c)| (*n, c))
            .collect();
        let labels: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "HC" } else { "NonHC" }).collect();
        let t = numeric_table(named, labels);
        let model = fit_pca(&t).unwrap();

        // rebuild the correlation matrix and check ‖Σv − λv‖ ≤ 1e-8 ‖Σ‖
        let p = 6;
        let (_, data) = numeric_predictors(&t).unwrap();
        let nf = t.n_rows() as f64;
        let z: Vec<Vec<f64>> = data
            .iter()
            .enumerate()
            .map(|(j, col)| {
                col.iter().map(|v| (v - model.means[j]) / model.scales[j]).collect()
            })
            .collect();
        let mut cov = vec![vec![0.0; p]; p];
        for a in 0..p {
            for b in 0..p {
                cov[a][b] = z[a].iter().zip(&z[b]).map(|(x, y)| x * y).sum::<f64>() / nf;
            }
        }
        let sigma_norm: f64 =
            cov.iter().flat_map(|r| r.iter()).map(|x| x * x).sum::<f64>().sqrt();
        for (j, v) in model.components.iter().enumerate() {
            let mut residual = 0.0;
            for a in 0..p {
                let av: f64 = (0..p).map(|b| cov[a][b] * v[b]).sum();
                let r = av - model.eigenvalues[j] * v[a];
                residual += r * r;
            }
            assert!(
                residual.sqrt() <= 1e-8 * sigma_norm,
                "residual {} too large for component {j}",
                residual.sqrt()
            );
        }
    }

    #[test]
    fn full_rank_projection_reconstructs() {
        let mut rng = crate::rng::seeded_rng(3);
        let n = 120;
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - 0.5 * y).collect();
        let labels: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "HC" } else { "NonHC" }).collect();
        let t = numeric_table(vec![("a", a), ("b", b), ("c", c)], labels);
        let model = fit_pca(&t).unwrap();
        let scores = project(&model, &t, 3).unwrap();
        let recon = reconstruct_standardized(&model, &scores, 3).unwrap();
        let (_, data) = numeric_predictors(&t).unwrap();
        for row in 0..n {
            for f in 0..3 {
                let z = (data[f][row] - model.means[f]) / model.scales[f];
                assert!(
                    (recon[row][f] - z).abs() < 1e-8,
                    "reconstruction off at ({row}, {f})"
                );
            }
        }
    }

    #[test]
    fn rank_one_line_recovers_from_single_component() {
        let t = line_table(40);
        let model = fit_pca(&t).unwrap();
        let scores = project(&model, &t, 1).unwrap();
        let recon = reconstruct_standardized(&model, &scores, 1).unwrap();
        let (_, data) = numeric_predictors(&t).unwrap();
        for row in 0..t.n_rows() {
            for f in 0..2 {
                let z = (data[f][row] - model.means[f]) / model.scales[f];
                assert!((recon[row][f] - z).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn component_count_bounds() {
        let t = line_table(10);
        let model = fit_pca(&t).unwrap();
        assert!(matches!(
            project(&model, &t, 0),
            Err(PcaError::BadComponentCount { k: 0, .. })
        ));
        assert!(matches!(
            project(&model, &t, 3),
            Err(PcaError::BadComponentCount { k: 3, .. })
        ));
    }

    #[test]
    fn explained_variance_arithmetic() {
        let model = PcaModel {
            feature_names: vec!["a".into(), "b".into()],
            means: vec![0.0; 2],
            scales: vec![1.0; 2],
            components: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            eigenvalues: vec![3.0, 1.0],
        };
        let ev = explained_variance(&model);
        assert!((ev[0] - 0.75).abs() < 1e-15);
        assert!((ev[1] - 1.0).abs() < 1e-15);
        let single = PcaModel { eigenvalues: vec![2.5], components: vec![vec![1.0]], ..model };
        assert_eq!(explained_variance(&single), vec![1.0]);
    }

    #[test]
    fn explained_variance_is_monotone_and_ends_at_one() {
        let mut rng = crate::rng::seeded_rng(77);
        let n = 150;
        let cols: Vec<(&str, Vec<f64>)> = [("a", 1.0), ("b", 2.0), ("c", 0.5), ("d", 3.0)]
            .iter()
            .map(|(name, scale)| {
                let v: Vec<f64> =
                    (0..n).map(|_| { let x: f64 = StandardNormal.sample(&mut rng); x * scale }).collect();
                (*name, v)
            })
            .collect();
        let labels: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "HC" } else { "NonHC" }).collect();
        let model = fit_pca(&numeric_table(cols, labels)).unwrap();
        let ev = explained_variance(&model);
        for pair in ev.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-15);
        }
        assert!((ev.last().unwrap() - 1.0).abs() < 1e-12);
        for pair in model.eigenvalues.windows(2) {
            assert!(pair[0] >= pair[1]);
            assert!(pair[1] >= 0.0);
        }
    }

    #[test]
    fn mean_row_projects_to_zero() {
        let t = line_table(30);
        let model = fit_pca(&t).unwrap();
        let mean_row = numeric_table(
            vec![("x", vec![model.means[0]]), ("y", vec![model.means[1]])],
            vec!["HC"],
        );
        let scores = project(&model, &mean_row, 2).unwrap();
        for j in 0..2 {
            let v = match scores.column(j) {
                Column::Numeric(v) => v[0],
                _ => unreachable!(),
            };
            assert!(v.abs() < 1e-10, "mean row score {v}");
        }
    }

    #[test]
    fn one_hot_expands_categoricals() {
        let schema = Schema::new(vec![
            ColumnSpec::new(
                "apoe",
                FeatureKind::Categorical { levels: vec!["0".into(), "1".into(), "2".into()] },
                FeatureGroup::ApoE,
            ),
            ColumnSpec::new("flag", FeatureKind::Binary, FeatureGroup::MedicalHistory),
            ColumnSpec::new(
                "dx",
                FeatureKind::Target { levels: vec!["HC".into(), "NonHC".into()] },
                FeatureGroup::Target,
            ),
        ])
        .unwrap();
        let t = Table::new(
            schema,
            vec![
                Column::Categorical(vec!["1".into(), "0".into(), "2".into()]),
                Column::Numeric(vec![1.0, 0.0, 1.0]),
                Column::Categorical(vec!["HC".into(), "NonHC".into(), "HC".into()]),
            ],
            vec![vec![false; 3]; 3],
        )
        .unwrap();
        let enc = one_hot_encode(&t).unwrap();
        assert_eq!(enc.n_cols(), 5); // 3 indicators + flag + target
        assert_eq!(enc.numeric_cell(1, 0), Some(1.0)); // apoe=1 for row 0
        assert_eq!(enc.numeric_cell(0, 1), Some(1.0)); // apoe=0 for row 1
        assert_eq!(enc.schema().spec(0).name, "apoe=0");
        // binary re-kinded to numeric
        assert_eq!(enc.schema().spec(3).kind, FeatureKind::Numeric);
    }

    #[test]
    fn accuracy_curve_has_one_row_per_k() {
        let mut rng = crate::rng::seeded_rng(5);
        let n = 160;
        let x1: Vec<f64> = (0..n)
            .map(|i| if i < n / 2 { 0.0 } else { 4.0 } + { let e: f64 = StandardNormal.sample(&mut rng); e })
            .collect();
        let x2: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let labels: Vec<&str> = (0..n).map(|i| if i < n / 2 { "HC" } else { "NonHC" }).collect();
        let t = numeric_table(vec![("x1", x1), ("x2", x2)], labels);
        let (train, test) = crate::dataset::split_stratified(&t, 0.7, 4).unwrap();
        let cfg = ForestConfig::default().with_ntree(30).with_seed(9);
        let curve = accuracy_vs_components(&train, &test, &[1, 2], &cfg).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve[0].0, 1);
        assert_eq!(curve[1].0, 2);
        // signal sits on x1: even one component should beat chance well
        assert!(curve[1].1 > 0.8, "full-rank projected accuracy {}", curve[1].1);
    }
}
