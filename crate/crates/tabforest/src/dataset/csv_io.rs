//! CSV ingestion and emission.
//!
//! RFC-4180-style files with a mandatory header row, UTF-8, and missing cells
//! written as `NA`. Empty fields and `NA` (plus any configured extra markers)
//! load as masked cells. Header order need not match the schema; the loaded
//! table always uses schema column order.

use super::{Column, DatasetError, FeatureKind, Schema, Table};
use chrono::NaiveDate;
use std::path::Path;

/// Cell spellings treated as missing on load. `""` and `"NA"` are always
/// included; extra markers come from pipeline configuration.
#[derive(Clone, Debug)]
pub struct MissingMarkers {
    markers: Vec<String>,
}

impl Default for MissingMarkers {
    fn default() -> Self {
        MissingMarkers { markers: vec![String::new(), "NA".to_string()] }
    }
}

impl MissingMarkers {
    pub fn with_extra(extra: &[String]) -> Self {
        let mut m = MissingMarkers::default();
        for e in extra {
            if !m.markers.contains(e) {
                m.markers.push(e.clone());
            }
        }
        m
    }

    pub fn is_missing(&self, cell: &str) -> bool {
        self.markers.iter().any(|m| m == cell)
    }
}

/// Load a CSV file against a schema.
///
/// The header must contain every schema column (extra file columns are an
/// error, since silently ignoring data invites mistakes). Cells matching a
/// missing marker are masked; anything else must parse for the column's kind.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &Schema,
    markers: &MissingMarkers,
) -> Result<Table, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path.as_ref())
        .map_err(csv_to_dataset_err)?;

    let headers = reader.headers().map_err(csv_to_dataset_err)?.clone();
    let header_names: Vec<String> = headers.iter().map(str::to_string).collect();

    // Map each schema column to its position in the file.
    let mut positions = Vec::with_capacity(schema.len());
    let mut absent = Vec::new();
    for spec in schema.columns() {
        match header_names.iter().position(|h| *h == spec.name) {
            Some(p) => positions.push(p),
            None => absent.push(spec.name.clone()),
        }
    }
    if !absent.is_empty() {
        return Err(DatasetError::SchemaMismatch { missing: absent });
    }
    for h in &header_names {
        if schema.index_of(h).is_none() {
            return Err(DatasetError::InvalidSchema(format!(
                "file column `{h}` is not declared in the schema"
            )));
        }
    }

    let mut columns: Vec<Column> = schema
        .columns()
        .iter()
        .map(|spec| match spec.kind {
            FeatureKind::Numeric | FeatureKind::Binary => Column::Numeric(Vec::new()),
            FeatureKind::Categorical { .. } | FeatureKind::Target { .. } => {
                Column::Categorical(Vec::new())
            }
            FeatureKind::Date => Column::Date(Vec::new()),
            FeatureKind::Identifier => Column::Text(Vec::new()),
        })
        .collect();
    let mut missing: Vec<Vec<bool>> = vec![Vec::new(); schema.len()];

    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_to_dataset_err)?;
        for (col_idx, spec) in schema.columns().iter().enumerate() {
            let raw = record.get(positions[col_idx]).unwrap_or("");
            let is_na = markers.is_missing(raw);
            missing[col_idx].push(is_na);
            match (&mut columns[col_idx], &spec.kind) {
                (Column::Numeric(v), _) => {
                    if is_na {
                        v.push(0.0);
                    } else {
                        let x: f64 = raw.trim().parse().map_err(|_| DatasetError::ParseError {
                            row: row_idx,
                            column: spec.name.clone(),
                            value: raw.to_string(),
                        })?;
                        if !x.is_finite() {
                            return Err(DatasetError::ParseError {
                                row: row_idx,
                                column: spec.name.clone(),
                                value: raw.to_string(),
                            });
                        }
                        v.push(x);
                    }
                }
                (Column::Categorical(v), _) => {
                    v.push(if is_na { String::new() } else { raw.to_string() });
                }
                (Column::Date(v), _) => {
                    if is_na {
                        v.push(super::epoch());
                    } else {
                        let d = NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").map_err(|_| {
                            DatasetError::ParseError {
                                row: row_idx,
                                column: spec.name.clone(),
                                value: raw.to_string(),
                            }
                        })?;
                        v.push(d);
                    }
                }
                (Column::Text(v), _) => {
                    v.push(if is_na { String::new() } else { raw.to_string() });
                }
            }
        }
    }

    Table::new(schema.clone(), columns, missing)
}

/// Write a table as CSV. Masked cells become `NA`; numerics use Rust's
/// shortest round-trip float formatting, so load ∘ write is the identity.
pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(csv_to_dataset_err)?;
    let (schema, columns, missing) = table.parts();
    writer
        .write_record(schema.columns().iter().map(|c| c.name.as_str()))
        .map_err(csv_to_dataset_err)?;
    for row in 0..table.n_rows() {
        let mut record: Vec<String> = Vec::with_capacity(schema.len());
        for (col_idx, col) in columns.iter().enumerate() {
            if missing[col_idx][row] {
                record.push("NA".to_string());
                continue;
            }
            record.push(match col {
                Column::Numeric(v) => format_numeric(v[row]),
                Column::Categorical(v) => v[row].clone(),
                Column::Date(v) => v[row].format("%Y-%m-%d").to_string(),
                Column::Text(v) => v[row].clone(),
            });
        }
        writer.write_record(&record).map_err(csv_to_dataset_err)?;
    }
    writer.flush()?;
    Ok(())
}

fn format_numeric(x: f64) -> String {
    // `{}` on f64 prints the shortest string that parses back to the same bits.
    format!("{x}")
}

fn csv_to_dataset_err(e: csv::Error) -> DatasetError {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                DatasetError::Io(io)
            } else {
                unreachable!()
            }
        }
        _ => DatasetError::InvalidSchema(format!("malformed csv: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnSpec, FeatureGroup};
    use std::io::Write;

    fn schema() -> Schema {
        Schema::new(vec![
            ColumnSpec::new("MMSCORE", FeatureKind::Numeric, FeatureGroup::Neuropsych)
                .with_range(0.0, 30.0),
            ColumnSpec::new(
                "DX",
                FeatureKind::Target { levels: vec!["HC".into(), "NonHC".into()] },
                FeatureGroup::Target,
            ),
        ])
        .unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn na_cells_become_masked() {
        let f = write_tmp("MMSCORE,DX\n28,HC\nNA,NonHC\n22,HC\n");
        let t = load_csv(f.path(), &schema(), &MissingMarkers::default()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert!(t.is_missing(0, 1));
        assert!(!t.is_missing(0, 0));
        assert!(!t.is_missing(0, 2));
        assert!(!t.is_missing(1, 1));
        assert_eq!(t.numeric_cell(0, 0), Some(28.0));
    }

    #[test]
    fn missing_target_column_is_schema_mismatch() {
        let f = write_tmp("MMSCORE\n28\n");
        let err = load_csv(f.path(), &schema(), &MissingMarkers::default()).unwrap_err();
        match err {
            DatasetError::SchemaMismatch { missing } => assert_eq!(missing, vec!["DX"]),
            other => panic!("expected SchemaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_numeric_reports_row_and_column() {
        let f = write_tmp("MMSCORE,DX\n28,HC\n30,NonHC\nabc,HC\n");
        let err = load_csv(f.path(), &schema(), &MissingMarkers::default()).unwrap_err();
        match err {
            DatasetError::ParseError { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "MMSCORE");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn header_order_is_insensitive() {
        let f = write_tmp("DX,MMSCORE\nHC,28\n");
        let t = load_csv(f.path(), &schema(), &MissingMarkers::default()).unwrap();
        assert_eq!(t.numeric_cell(0, 0), Some(28.0));
        assert_eq!(t.target_cell(0), Some("HC"));
    }

    #[test]
    fn extra_markers_are_honoured() {
        let f = write_tmp("MMSCORE,DX\n-9999,HC\n");
        let m = MissingMarkers::with_extra(&["-9999".to_string()]);
        let t = load_csv(f.path(), &schema(), &m).unwrap();
        assert!(t.is_missing(0, 0));
    }

    #[test]
    fn round_trip_preserves_values_and_mask() {
        let f = write_tmp("MMSCORE,DX\n28.25,HC\nNA,NonHC\n0.30000000000000004,HC\n");
        let t = load_csv(f.path(), &schema(), &MissingMarkers::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&t, out.path()).unwrap();
        let t2 = load_csv(out.path(), &schema(), &MissingMarkers::default()).unwrap();
        assert_eq!(t, t2);
    }
}
