//! Schema config files.
//!
//! A schema is supplied as a TOML document with one `[[columns]]` entry per
//! column. Recognised keys: `name`, `kind` (`numeric`, `categorical`,
//! `binary`, `date`, `identifier`, `target`), `group`, optional `range`
//! (two-element array, numeric columns only) and `levels` (categorical and
//! target columns).

use super::{ColumnSpec, DatasetError, FeatureGroup, FeatureKind, Schema};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    columns: Vec<ColumnDoc>,
}

#[derive(Serialize, Deserialize)]
struct ColumnDoc {
    name: String,
    kind: String,
    group: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<String>>,
}

pub fn read_schema_file(path: impl AsRef<Path>) -> Result<Schema, DatasetError> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let doc: SchemaDoc = toml::from_str(&text)
        .map_err(|e| DatasetError::InvalidSchema(format!("schema file: {e}")))?;
    let mut columns = Vec::with_capacity(doc.columns.len());
    for c in doc.columns {
        let kind = match c.kind.as_str() {
            "numeric" => FeatureKind::Numeric,
            "binary" => FeatureKind::Binary,
            "date" => FeatureKind::Date,
            "identifier" => FeatureKind::Identifier,
            "categorical" => FeatureKind::Categorical {
                levels: c.levels.clone().ok_or_else(|| {
                    DatasetError::InvalidSchema(format!(
                        "categorical column `{}` needs a `levels` list",
                        c.name
                    ))
                })?,
            },
            "target" => FeatureKind::Target {
                levels: c.levels.clone().ok_or_else(|| {
                    DatasetError::InvalidSchema(format!(
                        "target column `{}` needs a `levels` list",
                        c.name
                    ))
                })?,
            },
            other => {
                return Err(DatasetError::InvalidSchema(format!(
                    "column `{}` has unknown kind `{other}`",
                    c.name
                )))
            }
        };
        let group = FeatureGroup::parse(&c.group).ok_or_else(|| {
            DatasetError::InvalidSchema(format!(
                "column `{}` has unknown group `{}`",
                c.name, c.group
            ))
        })?;
        let mut spec = ColumnSpec::new(c.name, kind, group);
        if let Some([min, max]) = c.range {
            spec = spec.with_range(min, max);
        }
        columns.push(spec);
    }
    Schema::new(columns)
}

pub fn write_schema_file(schema: &Schema, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let doc = SchemaDoc {
        columns: schema
            .columns()
            .iter()
            .map(|spec| {
                let (kind, levels) = match &spec.kind {
                    FeatureKind::Numeric => ("numeric", None),
                    FeatureKind::Binary => ("binary", None),
                    FeatureKind::Date => ("date", None),
                    FeatureKind::Identifier => ("identifier", None),
                    FeatureKind::Categorical { levels } => ("categorical", Some(levels.clone())),
                    FeatureKind::Target { levels } => ("target", Some(levels.clone())),
                };
                ColumnDoc {
                    name: spec.name.clone(),
                    kind: kind.to_string(),
                    group: spec.group.as_str().to_string(),
                    range: spec.valid_range.map(|(a, b)| [a, b]),
                    levels,
                }
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&doc)
        .map_err(|e| DatasetError::InvalidSchema(format!("schema serialization: {e}")))?;
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}
