//! Columnar mixed-type tables with typed schemas and per-cell missingness.
//!
//! A [`Table`] owns one array per column plus a boolean mask marking missing
//! cells. Tables are immutable after construction: every operation returns a
//! new table, so they are safe to share across threads. Masked slots always
//! hold a canonical default value (0.0, empty string, epoch date), which makes
//! derived equality meaningful and guarantees nothing downstream can observe
//! a stale value through the mask.

mod csv_io;
mod ops;
mod schema_file;

pub use csv_io::{load_csv, write_csv, MissingMarkers};
pub use ops::{
    apply_scaler, binarize_diagnosis, derive_age, drop_columns, fit_scaler, merge_on_key,
    split_stratified, sanitize, AgeReport, JoinReport, SanitizeReport, ScalerEntry, ScalerParams,
};
pub use schema_file::{read_schema_file, write_schema_file};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

/// Which part of the cohort a column belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum FeatureGroup {
    Demographic,
    MedicalHistory,
    ApoE,
    Neuropsych,
    Blood,
    Target,
    Meta,
}

impl FeatureGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureGroup::Demographic => "demographic",
            FeatureGroup::MedicalHistory => "medical_history",
            FeatureGroup::ApoE => "apoe",
            FeatureGroup::Neuropsych => "neuropsych",
            FeatureGroup::Blood => "blood",
            FeatureGroup::Target => "target",
            FeatureGroup::Meta => "meta",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureGroup> {
        match s {
            "demographic" => Some(FeatureGroup::Demographic),
            "medical_history" => Some(FeatureGroup::MedicalHistory),
            "apoe" => Some(FeatureGroup::ApoE),
            "neuropsych" => Some(FeatureGroup::Neuropsych),
            "blood" => Some(FeatureGroup::Blood),
            "target" => Some(FeatureGroup::Target),
            "meta" => Some(FeatureGroup::Meta),
            _ => None,
        }
    }
}

/// How a column's cells are typed and interpreted.
///
/// `Binary` columns are stored as numeric 0/1; values outside {0, 1} are
/// masked by [`sanitize`]. `Categorical` and `Target` carry their level sets,
/// which double as the valid-value sets during sanitization.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
    Binary,
    Date,
    Identifier,
    Target { levels: Vec<String> },
}

impl FeatureKind {
    pub fn is_target(&self) -> bool {
        matches!(self, FeatureKind::Target { .. })
    }

    /// Kinds the imputation and modelling stages operate on.
    pub fn is_predictor(&self) -> bool {
        matches!(
            self,
            FeatureKind::Numeric | FeatureKind::Categorical { .. } | FeatureKind::Binary
        )
    }
}

/// One column's declaration: name, kind, optional numeric valid range, group.
#[derive(Clone, PartialEq, Debug)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub valid_range: Option<(f64, f64)>,
    pub group: FeatureGroup,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: FeatureKind, group: FeatureGroup) -> Self {
        ColumnSpec { name: name.into(), kind, valid_range: None, group }
    }

    pub fn with_range(mut self, min: f64, max: f64) -> Self {
        self.valid_range = Some((min, max));
        self
    }
}

/// Ordered set of column declarations.
///
/// Construction enforces: unique names, at most one `Target` column, at most
/// one `Identifier`, `min <= max` on every numeric range, and non-empty,
/// duplicate-free level sets. A modelling table always carries its target;
/// partial input files (one lab panel per file, pre-merge) may not, so
/// operations that need the target check for it and fail with
/// [`DatasetError::NoTarget`] when it is absent.
#[derive(Clone, PartialEq, Debug)]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Schema, DatasetError> {
        let mut names = HashSet::new();
        let mut n_target = 0usize;
        let mut n_id = 0usize;
        for spec in &columns {
            if !names.insert(spec.name.clone()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "duplicate column name `{}`",
                    spec.name
                )));
            }
            match &spec.kind {
                FeatureKind::Target { levels } => {
                    n_target += 1;
                    check_levels(&spec.name, levels)?;
                }
                FeatureKind::Categorical { levels } => check_levels(&spec.name, levels)?,
                FeatureKind::Identifier => n_id += 1,
                _ => {}
            }
            if let Some((min, max)) = spec.valid_range {
                if !(min <= max) {
                    return Err(DatasetError::InvalidSchema(format!(
                        "column `{}` has empty valid range [{min}, {max}]",
                        spec.name
                    )));
                }
            }
        }
        if n_target > 1 {
            return Err(DatasetError::InvalidSchema(format!(
                "schema allows at most one target column, found {n_target}"
            )));
        }
        if n_id > 1 {
            return Err(DatasetError::InvalidSchema(format!(
                "schema allows at most one identifier column, found {n_id}"
            )));
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn spec(&self, idx: usize) -> &ColumnSpec {
        &self.columns[idx]
    }

    pub fn target_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.kind.is_target())
    }

    /// Target column index, or `NoTarget` for tables without one.
    pub fn require_target(&self) -> Result<usize, DatasetError> {
        self.target_index().ok_or(DatasetError::NoTarget)
    }

    pub fn target_levels(&self) -> Option<&[String]> {
        match &self.columns[self.target_index()?].kind {
            FeatureKind::Target { levels } => Some(levels),
            _ => unreachable!(),
        }
    }

    pub fn target_name(&self) -> Option<&str> {
        self.target_index().map(|i| self.columns[i].name.as_str())
    }
}

fn check_levels(name: &str, levels: &[String]) -> Result<(), DatasetError> {
    if levels.is_empty() {
        return Err(DatasetError::InvalidSchema(format!(
            "column `{name}` declares an empty level set"
        )));
    }
    let mut seen = HashSet::new();
    for l in levels {
        if !seen.insert(l) {
            return Err(DatasetError::InvalidSchema(format!(
                "column `{name}` has duplicate level `{l}`"
            )));
        }
    }
    Ok(())
}

/// Per-column cell storage. The variant must agree with the column's kind:
/// `Numeric`/`Binary` use `Numeric`, `Categorical`/`Target` use `Categorical`,
/// `Date` uses `Date`, `Identifier` uses `Text`.
#[derive(Clone, PartialEq, Debug)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
    Date(Vec<NaiveDate>),
    Text(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
            Column::Date(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn default_for(kind: &FeatureKind) -> CellValue {
        match kind {
            FeatureKind::Numeric | FeatureKind::Binary => CellValue::Numeric(0.0),
            FeatureKind::Categorical { .. } | FeatureKind::Target { .. } => {
                CellValue::Categorical(String::new())
            }
            FeatureKind::Date => CellValue::Date(epoch()),
            FeatureKind::Identifier => CellValue::Text(String::new()),
        }
    }

    fn set(&mut self, row: usize, value: CellValue) {
        match (self, value) {
            (Column::Numeric(v), CellValue::Numeric(x)) => v[row] = x,
            (Column::Categorical(v), CellValue::Categorical(x)) => v[row] = x,
            (Column::Date(v), CellValue::Date(x)) => v[row] = x,
            (Column::Text(v), CellValue::Text(x)) => v[row] = x,
            _ => panic!("cell value kind does not match column storage"),
        }
    }
}

/// Owned value of a single cell.
#[derive(Clone, PartialEq, Debug)]
pub enum CellValue {
    Numeric(f64),
    Categorical(String),
    Date(NaiveDate),
    Text(String),
}

pub(crate) fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date")
}

/// A three-class diagnosis and its binary collapse.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RawLabel {
    Hc,
    Mci,
    Ad,
}

impl RawLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RawLabel::Hc => "HC",
            RawLabel::Mci => "MCI",
            RawLabel::Ad => "AD",
        }
    }
}

/// Binary diagnosis: healthy control vs everything else.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BinaryLabel {
    Hc,
    NonHc,
}

impl BinaryLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BinaryLabel::Hc => "HC",
            BinaryLabel::NonHc => "NonHC",
        }
    }
}

/// Diagnosis label carrying both the raw and collapsed form.
/// `binary` is `NonHC` exactly when `raw` is MCI or AD.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Label {
    pub raw: RawLabel,
    pub binary: BinaryLabel,
}

impl Label {
    pub fn from_raw(raw: RawLabel) -> Label {
        let binary = match raw {
            RawLabel::Hc => BinaryLabel::Hc,
            RawLabel::Mci | RawLabel::Ad => BinaryLabel::NonHc,
        };
        Label { raw, binary }
    }
}

/// Level names produced by [`binarize_diagnosis`], in class order.
pub const BINARY_LEVELS: [&str; 2] = ["HC", "NonHC"];

/// The positive (disease) class used throughout evaluation.
pub const POSITIVE_CLASS: &str = "NonHC";

/// Columnar table: schema + per-column arrays + per-cell missingness mask.
#[derive(Clone, PartialEq, Debug)]
pub struct Table {
    schema: Schema,
    columns: Vec<Column>,
    missing: Vec<Vec<bool>>,
    n_rows: usize,
}

impl Table {
    /// Build a table, validating lengths and normalising masked slots to the
    /// canonical default so that equality and hashing see through the mask.
    pub fn new(
        schema: Schema,
        mut columns: Vec<Column>,
        missing: Vec<Vec<bool>>,
    ) -> Result<Table, DatasetError> {
        if columns.len() != schema.len() || missing.len() != schema.len() {
            return Err(DatasetError::InvalidSchema(format!(
                "expected {} columns, got {} value arrays and {} masks",
                schema.len(),
                columns.len(),
                missing.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        for (i, (col, mask)) in columns.iter().zip(&missing).enumerate() {
            if col.len() != n_rows || mask.len() != n_rows {
                return Err(DatasetError::InvalidSchema(format!(
                    "column `{}` length mismatch",
                    schema.spec(i).name
                )));
            }
            let storage_ok = matches!(
                (&schema.spec(i).kind, col),
                (FeatureKind::Numeric | FeatureKind::Binary, Column::Numeric(_))
                    | (
                        FeatureKind::Categorical { .. } | FeatureKind::Target { .. },
                        Column::Categorical(_)
                    )
                    | (FeatureKind::Date, Column::Date(_))
                    | (FeatureKind::Identifier, Column::Text(_))
            );
            if !storage_ok {
                return Err(DatasetError::InvalidSchema(format!(
                    "column `{}` storage does not match its declared kind",
                    schema.spec(i).name
                )));
            }
        }
        // Unmasked numeric cells must be finite.
        for (i, col) in columns.iter().enumerate() {
            if let Column::Numeric(vals) = col {
                for (row, v) in vals.iter().enumerate() {
                    if !missing[i][row] && !v.is_finite() {
                        return Err(DatasetError::ParseError {
                            row,
                            column: schema.spec(i).name.clone(),
                            value: v.to_string(),
                        });
                    }
                }
            }
        }
        // Normalise masked slots.
        for (i, col) in columns.iter_mut().enumerate() {
            let default = Column::default_for(&schema.spec(i).kind);
            for (row, masked) in missing[i].iter().enumerate() {
                if *masked {
                    col.set(row, default.clone());
                }
            }
        }
        Ok(Table { schema, columns, missing, n_rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn mask(&self, idx: usize) -> &[bool] {
        &self.missing[idx]
    }

    pub fn is_missing(&self, col: usize, row: usize) -> bool {
        self.missing[col][row]
    }

    /// Numeric cell accessor; `None` when masked.
    /// Panics if the column is not numeric storage.
    pub fn numeric_cell(&self, col: usize, row: usize) -> Option<f64> {
        if self.missing[col][row] {
            return None;
        }
        match &self.columns[col] {
            Column::Numeric(v) => Some(v[row]),
            _ => panic!("numeric_cell on non-numeric column"),
        }
    }

    /// Categorical cell accessor; `None` when masked.
    pub fn categorical_cell(&self, col: usize, row: usize) -> Option<&str> {
        if self.missing[col][row] {
            return None;
        }
        match &self.columns[col] {
            Column::Categorical(v) => Some(v[row].as_str()),
            _ => panic!("categorical_cell on non-categorical column"),
        }
    }

    /// Target level of one row; `None` when masked or when the table has no
    /// target column.
    pub fn target_cell(&self, row: usize) -> Option<&str> {
        self.categorical_cell(self.schema.target_index()?, row)
    }

    /// Counts of each declared target level over unmasked target cells.
    /// Empty for tables without a target.
    pub fn class_counts(&self) -> Vec<(String, usize)> {
        let Some(t) = self.schema.target_index() else {
            return Vec::new();
        };
        let levels = self.schema.target_levels().unwrap_or(&[]).to_vec();
        let mut counts: Vec<(String, usize)> = levels.into_iter().map(|l| (l, 0)).collect();
        if let Column::Categorical(vals) = &self.columns[t] {
            for (row, v) in vals.iter().enumerate() {
                if !self.missing[t][row] {
                    if let Some(e) = counts.iter_mut().find(|(l, _)| l == v) {
                        e.1 += 1;
                    }
                }
            }
        }
        counts
    }

    /// New table containing the given rows (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|col| match col {
                Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
                Column::Categorical(v) => {
                    Column::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
                }
                Column::Date(v) => Column::Date(rows.iter().map(|&r| v[r]).collect()),
                Column::Text(v) => Column::Text(rows.iter().map(|&r| v[r].clone()).collect()),
            })
            .collect();
        let missing = self
            .missing
            .iter()
            .map(|mask| rows.iter().map(|&r| mask[r]).collect())
            .collect();
        Table { schema: self.schema.clone(), columns, missing, n_rows: rows.len() }
    }

    /// Total number of masked cells.
    pub fn missing_cells(&self) -> usize {
        self.missing.iter().map(|m| m.iter().filter(|&&x| x).count()).sum()
    }

    pub(crate) fn into_parts(self) -> (Schema, Vec<Column>, Vec<Vec<bool>>) {
        (self.schema, self.columns, self.missing)
    }

    pub(crate) fn parts(&self) -> (&Schema, &[Column], &[Vec<bool>]) {
        (&self.schema, &self.columns, &self.missing)
    }
}

/// Errors from table construction and the dataset operations.
#[derive(Debug)]
pub enum DatasetError {
    Io(std::io::Error),
    InvalidSchema(String),
    /// Header is missing schema columns.
    SchemaMismatch { missing: Vec<String> },
    /// A non-missing cell failed to parse for its declared kind.
    ParseError { row: usize, column: String, value: String },
    /// A key tuple occurs twice within one input table.
    DuplicateKey { key: String },
    /// The same non-key column name appears in two merge inputs.
    NameCollision { name: String },
    UnknownColumn { name: String },
    /// The operation needs a target column and the table has none.
    NoTarget,
    /// Refusing to drop the target column without the explicit override.
    TargetProtected,
    /// Target cell holds a level outside the declared set.
    UnknownLevel { level: String },
    /// A declared target class has no rows (or a row has a masked target).
    DegenerateClass { detail: String },
    /// train_fraction outside (0, 1).
    BadFraction(f64),
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Io(e) => write!(f, "i/o error: {e}"),
            DatasetError::InvalidSchema(msg) => write!(f, "invalid schema: {msg}"),
            DatasetError::SchemaMismatch { missing } => {
                write!(f, "header is missing schema columns: {}", missing.join(", "))
            }
            DatasetError::ParseError { row, column, value } => {
                write!(f, "cannot parse `{value}` at row {row}, column `{column}`")
            }
            DatasetError::DuplicateKey { key } => {
                write!(f, "duplicate key tuple within one table: {key}")
            }
            DatasetError::NameCollision { name } => {
                write!(f, "column `{name}` appears in more than one merge input")
            }
            DatasetError::UnknownColumn { name } => write!(f, "unknown column `{name}`"),
            DatasetError::NoTarget => write!(f, "table has no target column"),
            DatasetError::TargetProtected => {
                write!(f, "refusing to drop the target column (pass the explicit override)")
            }
            DatasetError::UnknownLevel { level } => {
                write!(f, "unexpected target level `{level}`")
            }
            DatasetError::DegenerateClass { detail } => write!(f, "degenerate class: {detail}"),
            DatasetError::BadFraction(x) => {
                write!(f, "train fraction must be in (0, 1), got {x}")
            }
        }
    }
}

impl std::error::Error for DatasetError {}

impl From<std::io::Error> for DatasetError {
    fn from(e: std::io::Error) -> Self {
        DatasetError::Io(e)
    }
}
