//! Internal bridge from mixed-type [`Table`]s to the numeric/categorical
//! design matrices the tree learners consume.
//!
//! Numeric and Binary columns become `f64` feature vectors; Categorical
//! columns become level codes. Extraction requires fully observed cells —
//! missing values are an upstream concern (imputation), not a tree concern.
//!
//! [`Table`]: crate::dataset::Table

use crate::dataset::{Column, FeatureKind, Table};

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum FeatureData {
    Numeric(Vec<f64>),
    Categorical { codes: Vec<u32>, n_levels: u32 },
}

impl FeatureData {
    pub fn len(&self) -> usize {
        match self {
            FeatureData::Numeric(v) => v.len(),
            FeatureData::Categorical { codes, .. } => codes.len(),
        }
    }
}

/// Predictor matrix in column-major layout.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct DesignMatrix {
    pub names: Vec<String>,
    pub features: Vec<FeatureData>,
    pub n_rows: usize,
}

impl DesignMatrix {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Shape-and-kind fingerprint used to validate predict-time tables
    /// against the table a model was fitted on.
    pub fn signature(&self) -> Vec<(String, Option<u32>)> {
        self.names
            .iter()
            .zip(&self.features)
            .map(|(n, f)| {
                let levels = match f {
                    FeatureData::Numeric(_) => None,
                    FeatureData::Categorical { n_levels, .. } => Some(*n_levels),
                };
                (n.clone(), levels)
            })
            .collect()
    }
}

/// Classification target: level codes plus the level names in class order.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ClassTarget {
    pub codes: Vec<u32>,
    pub levels: Vec<String>,
}

impl ClassTarget {
    pub fn n_classes(&self) -> usize {
        self.levels.len()
    }

    /// Number of distinct classes actually present.
    pub fn present_classes(&self) -> usize {
        let mut seen = vec![false; self.levels.len()];
        for &c in &self.codes {
            seen[c as usize] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// Regression or classification target for the internal imputation forests.
#[derive(Clone, Debug)]
pub(crate) enum TargetData {
    Classes(ClassTarget),
    Values(Vec<f64>),
}

#[derive(Debug)]
pub(crate) enum DesignError {
    MaskedCell { row: usize, column: String },
    NoTarget,
    NoPredictors,
    UnknownLevel { column: String, level: String },
}

impl std::fmt::Display for DesignError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DesignError::MaskedCell { row, column } => {
                write!(f, "masked cell at row {row}, column `{column}`")
            }
            DesignError::NoTarget => write!(f, "table has no target column"),
            DesignError::NoPredictors => write!(f, "table has no predictor columns"),
            DesignError::UnknownLevel { column, level } => {
                write!(f, "level `{level}` in column `{column}` is not declared in the schema")
            }
        }
    }
}

fn extract_feature(table: &Table, col_idx: usize) -> Result<FeatureData, DesignError> {
    let spec = table.schema().spec(col_idx);
    match (&spec.kind, table.column(col_idx)) {
        (FeatureKind::Numeric | FeatureKind::Binary, Column::Numeric(vals)) => {
            require_observed(table, col_idx)?;
            Ok(FeatureData::Numeric(vals.clone()))
        }
        (
            FeatureKind::Categorical { levels } | FeatureKind::Target { levels },
            Column::Categorical(vals),
        ) => {
            require_observed(table, col_idx)?;
            let mut codes = Vec::with_capacity(vals.len());
            for v in vals {
                let code = levels.iter().position(|l| l == v).ok_or_else(|| {
                    DesignError::UnknownLevel { column: spec.name.clone(), level: v.clone() }
                })?;
                codes.push(code as u32);
            }
            Ok(FeatureData::Categorical { codes, n_levels: levels.len() as u32 })
        }
        _ => unreachable!("predictor extraction on non-predictor kind"),
    }
}

fn require_observed(table: &Table, col_idx: usize) -> Result<(), DesignError> {
    if let Some(row) = table.mask(col_idx).iter().position(|&m| m) {
        return Err(DesignError::MaskedCell {
            row,
            column: table.schema().spec(col_idx).name.clone(),
        });
    }
    Ok(())
}

/// Standard extraction for supervised fitting: every Numeric/Binary/
/// Categorical column is a predictor, the Target column is the class label.
/// Date and Identifier columns are ignored.
pub(crate) fn predictors_and_target(
    table: &Table,
) -> Result<(DesignMatrix, ClassTarget), DesignError> {
    let design = predictors_only(table)?;
    let t_idx = table.schema().target_index().ok_or(DesignError::NoTarget)?;
    require_observed(table, t_idx)?;
    let levels = table.schema().target_levels().expect("target present").to_vec();
    let codes = match extract_feature(table, t_idx)? {
        FeatureData::Categorical { codes, .. } => codes,
        FeatureData::Numeric(_) => unreachable!("target is categorical storage"),
    };
    Ok((design, ClassTarget { codes, levels }))
}

/// Predictor matrix only (no target needed) — used at predict time.
pub(crate) fn predictors_only(table: &Table) -> Result<DesignMatrix, DesignError> {
    let mut names = Vec::new();
    let mut features = Vec::new();
    for (idx, spec) in table.schema().columns().iter().enumerate() {
        if spec.kind.is_predictor() {
            names.push(spec.name.clone());
            features.push(extract_feature(table, idx)?);
        }
    }
    if features.is_empty() {
        return Err(DesignError::NoPredictors);
    }
    Ok(DesignMatrix { names, features, n_rows: table.n_rows() })
}

/// Custom extraction for the imputation loop: an explicit predictor column
/// set and an arbitrary response column. Numeric responses train regression
/// forests; Binary and Categorical responses train classifiers (binary
/// columns use the implicit level order ["0", "1"]).
pub(crate) fn custom(
    table: &Table,
    predictor_cols: &[usize],
    response_col: usize,
) -> Result<(DesignMatrix, TargetData), DesignError> {
    let mut names = Vec::new();
    let mut features = Vec::new();
    for &idx in predictor_cols {
        names.push(table.schema().spec(idx).name.clone());
        features.push(extract_feature(table, idx)?);
    }
    if features.is_empty() {
        return Err(DesignError::NoPredictors);
    }
    let design = DesignMatrix { names, features, n_rows: table.n_rows() };

    let spec = table.schema().spec(response_col);
    require_observed(table, response_col)?;
    let target = match (&spec.kind, table.column(response_col)) {
        (FeatureKind::Numeric, Column::Numeric(vals)) => TargetData::Values(vals.clone()),
        (FeatureKind::Binary, Column::Numeric(vals)) => {
            let codes = vals.iter().map(|&v| if v == 0.0 { 0u32 } else { 1u32 }).collect();
            TargetData::Classes(ClassTarget {
                codes,
                levels: vec!["0".to_string(), "1".to_string()],
            })
        }
        (
            FeatureKind::Categorical { levels } | FeatureKind::Target { levels },
            Column::Categorical(vals),
        ) => {
            let mut codes = Vec::with_capacity(vals.len());
            for v in vals {
                let code = levels.iter().position(|l| l == v).ok_or_else(|| {
                    DesignError::UnknownLevel { column: spec.name.clone(), level: v.clone() }
                })?;
                codes.push(code as u32);
            }
            TargetData::Classes(ClassTarget { codes, levels: levels.clone() })
        }
        _ => unreachable!("response extraction on non-predictor kind"),
    };
    Ok((design, target))
}
