//! Table transformations: merge, derived age, sanitization, column drops,
//! label binarization, stratified splitting, and z-score scaling.
//!
//! All operations are pure: they take tables by reference and return new
//! tables, leaving inputs untouched.

use super::{
    Column, ColumnSpec, DatasetError, FeatureGroup, FeatureKind, Schema, Table, BINARY_LEVELS,
};
use crate::rng::{derive_seed, seeded_rng, tag};
use chrono::Datelike;
use rand::seq::SliceRandom;
use std::collections::{HashMap, HashSet};

/// Outcome of [`merge_on_key`]: how many rows each input lost to the join.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct JoinReport {
    /// Per input table, number of rows dropped because their key tuple was
    /// absent from at least one other input.
    pub dropped_per_table: Vec<usize>,
}

impl JoinReport {
    pub fn total_dropped(&self) -> usize {
        self.dropped_per_table.iter().sum()
    }
}

/// Inner-join a list of tables on a shared key column tuple.
///
/// Key columns are kept once (from the first table); all other columns are
/// concatenated. Rows whose key is missing from any input are dropped and
/// counted. Row order follows the first table.
pub fn merge_on_key(tables: &[Table], key: &[String]) -> Result<(Table, JoinReport), DatasetError> {
    if tables.is_empty() {
        return Err(DatasetError::InvalidSchema("merge needs at least one table".into()));
    }
    if key.is_empty() {
        return Err(DatasetError::InvalidSchema("merge needs at least one key column".into()));
    }
    for t in tables {
        for k in key {
            if t.schema().index_of(k).is_none() {
                return Err(DatasetError::UnknownColumn { name: k.clone() });
            }
        }
    }

    // Key tuple per row, rendered exactly as written to CSV so equality is
    // unambiguous. Masked key cells exclude the row from the join.
    let key_of = |t: &Table, row: usize| -> Option<String> {
        let mut parts = Vec::with_capacity(key.len());
        for k in key {
            let idx = t.schema().index_of(k).expect("checked above");
            if t.is_missing(idx, row) {
                return None;
            }
            let s = match t.column(idx) {
                Column::Numeric(v) => format!("{}", v[row]),
                Column::Categorical(v) => v[row].clone(),
                Column::Date(v) => v[row].format("%Y-%m-%d").to_string(),
                Column::Text(v) => v[row].clone(),
            };
            parts.push(s);
        }
        Some(parts.join("\u{1f}"))
    };

    // Per table: key -> row index, rejecting duplicates.
    let mut maps: Vec<HashMap<String, usize>> = Vec::with_capacity(tables.len());
    for t in tables {
        let mut m = HashMap::new();
        for row in 0..t.n_rows() {
            if let Some(k) = key_of(t, row) {
                if m.insert(k.clone(), row).is_some() {
                    return Err(DatasetError::DuplicateKey { key: k.replace('\u{1f}', ",") });
                }
            }
        }
        maps.push(m);
    }

    // Column name collisions across non-key columns.
    let mut seen: HashSet<&str> = key.iter().map(String::as_str).collect();
    for t in tables {
        for spec in t.schema().columns() {
            if key.contains(&spec.name) {
                continue;
            }
            if !seen.insert(spec.name.as_str()) {
                return Err(DatasetError::NameCollision { name: spec.name.clone() });
            }
        }
    }

    // Rows of the first table whose key exists everywhere, in order.
    let first = &tables[0];
    let mut joined_keys: Vec<(String, usize)> = Vec::new();
    for row in 0..first.n_rows() {
        if let Some(k) = key_of(first, row) {
            if maps.iter().all(|m| m.contains_key(&k)) {
                joined_keys.push((k, row));
            }
        }
    }

    let mut report = JoinReport { dropped_per_table: Vec::with_capacity(tables.len()) };
    for (i, t) in tables.iter().enumerate() {
        let kept = joined_keys.iter().filter(|(k, _)| maps[i].contains_key(k)).count();
        report.dropped_per_table.push(t.n_rows() - kept);
    }

    // Assemble output schema and columns: keys from the first table, then
    // every non-key column of every input in order.
    let mut out_specs: Vec<ColumnSpec> = Vec::new();
    let mut out_columns: Vec<Column> = Vec::new();
    let mut out_missing: Vec<Vec<bool>> = Vec::new();

    let gather = |t: &Table, col_idx: usize, rows: &[usize]| -> (Column, Vec<bool>) {
        let sub = t.select_rows(rows);
        (sub.column(col_idx).clone(), sub.mask(col_idx).to_vec())
    };

    let first_rows: Vec<usize> = joined_keys.iter().map(|(_, r)| *r).collect();
    for k in key {
        let idx = first.schema().index_of(k).expect("checked");
        let (col, mask) = gather(first, idx, &first_rows);
        out_specs.push(first.schema().spec(idx).clone());
        out_columns.push(col);
        out_missing.push(mask);
    }
    for (i, t) in tables.iter().enumerate() {
        let rows: Vec<usize> = joined_keys.iter().map(|(k, _)| maps[i][k]).collect();
        for (idx, spec) in t.schema().columns().iter().enumerate() {
            if key.contains(&spec.name) {
                continue;
            }
            let (col, mask) = gather(t, idx, &rows);
            out_specs.push(spec.clone());
            out_columns.push(col);
            out_missing.push(mask);
        }
    }

    let schema = Schema::new(out_specs)?;
    Ok((Table::new(schema, out_columns, out_missing)?, report))
}

/// Rows whose exam date preceded their birth date.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AgeReport {
    pub invalid_chronology_rows: Vec<usize>,
}

/// Append a Numeric `age` column: whole calendar years between a birth-date
/// column and an exam-date column (floor). Masked if either date is masked;
/// exams before births mask the cell and are reported.
pub fn derive_age(
    table: &Table,
    birthdate_col: &str,
    examdate_col: &str,
) -> Result<(Table, AgeReport), DatasetError> {
    let b_idx = table
        .schema()
        .index_of(birthdate_col)
        .ok_or_else(|| DatasetError::UnknownColumn { name: birthdate_col.to_string() })?;
    let e_idx = table
        .schema()
        .index_of(examdate_col)
        .ok_or_else(|| DatasetError::UnknownColumn { name: examdate_col.to_string() })?;
    for idx in [b_idx, e_idx] {
        if table.schema().spec(idx).kind != FeatureKind::Date {
            return Err(DatasetError::InvalidSchema(format!(
                "column `{}` is not a date column",
                table.schema().spec(idx).name
            )));
        }
    }
    if table.schema().index_of("age").is_some() {
        return Err(DatasetError::InvalidSchema("table already has an `age` column".into()));
    }

    let (births, exams) = match (table.column(b_idx), table.column(e_idx)) {
        (Column::Date(b), Column::Date(e)) => (b, e),
        _ => unreachable!("kind checked above"),
    };

    let mut ages = Vec::with_capacity(table.n_rows());
    let mut mask = Vec::with_capacity(table.n_rows());
    let mut report = AgeReport::default();
    for row in 0..table.n_rows() {
        if table.is_missing(b_idx, row) || table.is_missing(e_idx, row) {
            ages.push(0.0);
            mask.push(true);
            continue;
        }
        let (birth, exam) = (births[row], exams[row]);
        if exam < birth {
            report.invalid_chronology_rows.push(row);
            ages.push(0.0);
            mask.push(true);
            continue;
        }
        ages.push(f64::from(whole_years_between(birth, exam)));
        mask.push(false);
    }

    let (schema, columns, missing) = table.parts();
    let mut specs = schema.columns().to_vec();
    specs.push(ColumnSpec::new("age", FeatureKind::Numeric, FeatureGroup::Demographic));
    let mut columns = columns.to_vec();
    columns.push(Column::Numeric(ages));
    let mut missing = missing.to_vec();
    missing.push(mask);
    Ok((Table::new(Schema::new(specs)?, columns, missing)?, report))
}

/// Calendar-aware floor of elapsed years: the year difference, minus one if
/// the (month, day) of the later date precedes that of the earlier one.
fn whole_years_between(earlier: chrono::NaiveDate, later: chrono::NaiveDate) -> i32 {
    let mut years = later.year() - earlier.year();
    if (later.month(), later.day()) < (earlier.month(), earlier.day()) {
        years -= 1;
    }
    years
}

/// Replacement counts per column from [`sanitize`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SanitizeReport {
    pub replaced: Vec<(String, usize)>,
}

impl SanitizeReport {
    pub fn total(&self) -> usize {
        self.replaced.iter().map(|(_, n)| n).sum()
    }

    pub fn count_for(&self, column: &str) -> usize {
        self.replaced.iter().find(|(c, _)| c == column).map_or(0, |(_, n)| *n)
    }
}

/// Mask every unmasked cell that violates its column's validity rule:
/// numeric range for Numeric, {0, 1} for Binary, declared level set for
/// Categorical and Target. Valid cells pass through bit-identical; sanitize
/// never fails and is idempotent.
pub fn sanitize(table: &Table) -> (Table, SanitizeReport) {
    let (schema, columns, missing) = table.parts();
    let mut new_missing = missing.to_vec();
    let mut report = SanitizeReport::default();

    for (col_idx, spec) in schema.columns().iter().enumerate() {
        let mut replaced = 0usize;
        match (&spec.kind, &columns[col_idx]) {
            (FeatureKind::Numeric, Column::Numeric(vals)) => {
                if let Some((min, max)) = spec.valid_range {
                    for row in 0..vals.len() {
                        if !missing[col_idx][row] && !(vals[row] >= min && vals[row] <= max) {
                            new_missing[col_idx][row] = true;
                            replaced += 1;
                        }
                    }
                }
            }
            (FeatureKind::Binary, Column::Numeric(vals)) => {
                for row in 0..vals.len() {
                    if !missing[col_idx][row] && vals[row] != 0.0 && vals[row] != 1.0 {
                        new_missing[col_idx][row] = true;
                        replaced += 1;
                    }
                }
            }
            (
                FeatureKind::Categorical { levels } | FeatureKind::Target { levels },
                Column::Categorical(vals),
            ) => {
                for row in 0..vals.len() {
                    if !missing[col_idx][row] && !levels.contains(&vals[row]) {
                        new_missing[col_idx][row] = true;
                        replaced += 1;
                    }
                }
            }
            _ => {}
        }
        if replaced > 0 {
            report.replaced.push((spec.name.clone(), replaced));
        }
    }

    let table = Table::new(schema.clone(), columns.to_vec(), new_missing)
        .expect("sanitize preserves table validity");
    (table, report)
}

/// Remove columns by name. The target column is protected: dropping it
/// requires `allow_target = true`, otherwise `TargetProtected` is returned.
pub fn drop_columns(
    table: &Table,
    names: &[String],
    allow_target: bool,
) -> Result<Table, DatasetError> {
    let mut drop_idx = HashSet::new();
    for name in names {
        let idx = table
            .schema()
            .index_of(name)
            .ok_or_else(|| DatasetError::UnknownColumn { name: name.clone() })?;
        if table.schema().spec(idx).kind.is_target() && !allow_target {
            return Err(DatasetError::TargetProtected);
        }
        drop_idx.insert(idx);
    }
    if drop_idx.is_empty() {
        return Ok(table.clone());
    }
    let (schema, columns, missing) = table.parts();
    let mut specs = Vec::new();
    let mut out_cols = Vec::new();
    let mut out_missing = Vec::new();
    for (i, spec) in schema.columns().iter().enumerate() {
        if !drop_idx.contains(&i) {
            specs.push(spec.clone());
            out_cols.push(columns[i].clone());
            out_missing.push(missing[i].to_vec());
        }
    }
    Table::new(Schema::new(specs)?, out_cols, out_missing)
}

/// Recode the target from {HC, MCI, AD} to {HC, NonHC}, leaving every other
/// column bit-exact. Any unmasked target level outside the three known ones
/// is an error.
pub fn binarize_diagnosis(table: &Table) -> Result<Table, DatasetError> {
    let t_idx = table.schema().require_target()?;
    let (schema, columns, missing) = table.parts();

    let vals = match &columns[t_idx] {
        Column::Categorical(v) => v,
        _ => unreachable!("target is categorical storage"),
    };
    let mut recoded = Vec::with_capacity(vals.len());
    for (row, v) in vals.iter().enumerate() {
        if missing[t_idx][row] {
            recoded.push(String::new());
            continue;
        }
        recoded.push(match v.as_str() {
            "HC" => BINARY_LEVELS[0].to_string(),
            "MCI" | "AD" => BINARY_LEVELS[1].to_string(),
            other => return Err(DatasetError::UnknownLevel { level: other.to_string() }),
        });
    }

    let mut specs = schema.columns().to_vec();
    specs[t_idx] = ColumnSpec {
        name: specs[t_idx].name.clone(),
        kind: FeatureKind::Target {
            levels: BINARY_LEVELS.iter().map(|s| s.to_string()).collect(),
        },
        valid_range: None,
        group: specs[t_idx].group,
    };
    let mut out_cols = columns.to_vec();
    out_cols[t_idx] = Column::Categorical(recoded);
    Table::new(Schema::new(specs)?, out_cols, missing.to_vec())
}

/// Stratified train/test split.
///
/// Per-class train counts start from floor(class_count × fraction); the
/// remaining seats up to round(n × fraction) go to the classes with the
/// largest fractional remainders (ties to the earlier class). Row order
/// within each side follows the original table. Same seed, same split.
pub fn split_stratified(
    table: &Table,
    train_fraction: f64,
    seed: u64,
) -> Result<(Table, Table), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    table.schema().require_target()?;
    let levels = table.schema().target_levels().expect("target checked").to_vec();

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); levels.len()];
    for row in 0..table.n_rows() {
        match table.target_cell(row) {
            None => {
                return Err(DatasetError::DegenerateClass {
                    detail: format!("row {row} has a masked target"),
                })
            }
            Some(level) => {
                let class = levels.iter().position(|l| l == level).ok_or_else(|| {
                    DatasetError::UnknownLevel { level: level.to_string() }
                })?;
                per_class[class].push(row);
            }
        }
    }
    for (class, rows) in per_class.iter().enumerate() {
        if rows.is_empty() {
            return Err(DatasetError::DegenerateClass {
                detail: format!("class `{}` has no rows", levels[class]),
            });
        }
    }

    // Largest-remainder quota allocation.
    let global_train = (table.n_rows() as f64 * train_fraction).round() as usize;
    let mut quotas: Vec<usize> = Vec::with_capacity(levels.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(levels.len());
    for (class, rows) in per_class.iter().enumerate() {
        let exact = rows.len() as f64 * train_fraction;
        let base = exact.floor() as usize;
        quotas.push(base);
        remainders.push((class, exact - base as f64));
    }
    let assigned: usize = quotas.iter().sum();
    let mut extra = global_train.saturating_sub(assigned);
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (class, _) in remainders {
        if extra == 0 {
            break;
        }
        if quotas[class] < per_class[class].len() {
            quotas[class] += 1;
            extra -= 1;
        }
    }

    let mut rng = seeded_rng(derive_seed(seed, tag("split-stratified")));
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (class, rows) in per_class.iter().enumerate() {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let (tr, te) = shuffled.split_at(quotas[class].min(shuffled.len()));
        train_rows.extend_from_slice(tr);
        test_rows.extend_from_slice(te);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();

    Ok((table.select_rows(&train_rows), table.select_rows(&test_rows)))
}

/// Per-column standardization parameters fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalerParams {
    pub entries: Vec<ScalerEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalerEntry {
    pub column: String,
    pub mean: f64,
    /// Population standard deviation (divide by n) of observed cells.
    pub stddev: f64,
}

impl ScalerParams {
    /// Columns whose observed values were constant (stddev 0); these map to
    /// all-zeros on apply and deserve a warning upstream.
    pub fn constant_columns(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.stddev == 0.0)
            .map(|e| e.column.as_str())
            .collect()
    }
}

/// Fit z-score parameters over every Numeric column's observed cells.
/// Binary columns are left alone. Population standard deviation throughout.
pub fn fit_scaler(train: &Table) -> ScalerParams {
    let mut entries = Vec::new();
    for (idx, spec) in train.schema().columns().iter().enumerate() {
        if spec.kind != FeatureKind::Numeric {
            continue;
        }
        let vals = match train.column(idx) {
            Column::Numeric(v) => v,
            _ => unreachable!(),
        };
        let observed: Vec<f64> = vals
            .iter()
            .enumerate()
            .filter(|(row, _)| !train.is_missing(idx, *row))
            .map(|(_, v)| *v)
            .collect();
        if observed.is_empty() {
            entries.push(ScalerEntry { column: spec.name.clone(), mean: 0.0, stddev: 0.0 });
            continue;
        }
        let n = observed.len() as f64;
        let mean = observed.iter().sum::<f64>() / n;
        let var = observed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        entries.push(ScalerEntry { column: spec.name.clone(), mean, stddev: var.sqrt() });
    }
    ScalerParams { entries }
}

/// Apply fitted z-score parameters: (x − mean) / stddev per Numeric column.
/// Masked cells stay masked; constant columns (stddev 0) map to zeros.
pub fn apply_scaler(table: &Table, params: &ScalerParams) -> Result<Table, DatasetError> {
    let (schema, columns, missing) = table.parts();
    let mut out_cols = columns.to_vec();
    for entry in &params.entries {
        let idx = table
            .schema()
            .index_of(&entry.column)
            .ok_or_else(|| DatasetError::UnknownColumn { name: entry.column.clone() })?;
        let vals = match &mut out_cols[idx] {
            Column::Numeric(v) => v,
            _ => {
                return Err(DatasetError::InvalidSchema(format!(
                    "scaler column `{}` is not numeric",
                    entry.column
                )))
            }
        };
        for (row, v) in vals.iter_mut().enumerate() {
            if missing[idx][row] {
                continue;
            }
            *v = if entry.stddev == 0.0 { 0.0 } else { (*v - entry.mean) / entry.stddev };
        }
    }
    Table::new(schema.clone(), out_cols, missing.to_vec())
}
