use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, Targets, TaskKind};
use crate::error::{FirError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskHint {
    Regression,
    /// Binary when two distinct labels appear, multiclass otherwise.
    Classification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub target: String,
    pub task: TaskHint,
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| FirError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        FirError::Data(format!(
            "non-numeric value {cell:?} at row {row}, column {column:?}"
        ))
    })?;
    if !v.is_finite() {
        return Err(FirError::Data(format!(
            "non-finite value at row {row}, column {column:?}"
        )));
    }
    Ok(v)
}

/// Reads a comma-separated file with a header row.
///
/// Every column except `schema.target` becomes a feature. Class labels are
/// encoded by order of first appearance. Row numbers in errors count data
/// rows from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_col = headers
        .iter()
        .position(|h| h == &schema.target)
        .ok_or_else(|| {
            FirError::Data(format!(
                "{}: missing target column {:?}",
                path.display(),
                schema.target
            ))
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_col)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(FirError::Data(format!("{}: no feature columns", path.display())));
    }

    let mut values = Vec::new();
    let mut real_targets = Vec::new();
    let mut labels = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(FirError::Data(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == target_col {
                match schema.task {
                    TaskHint::Regression => real_targets.push(parse_cell(cell, row, &headers[j])?),
                    TaskHint::Classification => {
                        let key = cell.trim().to_string();
                        let next = label_index.len();
                        let id = *label_index.entry(key.clone()).or_insert_with(|| {
                            class_names.push(key);
                            next
                        });
                        labels.push(id);
                    }
                }
            } else {
                values.push(parse_cell(cell, row, &headers[j])?);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(FirError::Data(format!("{}: no data rows", path.display())));
    }
    let features = Array2::from_shape_vec((rows, feature_names.len()), values)
        .map_err(|e| FirError::Data(e.to_string()))?;
    match schema.task {
        TaskHint::Regression => Dataset::new(
            features,
            Targets::Real(real_targets),
            TaskKind::Regression,
            feature_names,
        ),
        TaskHint::Classification => {
            let task = match class_names.len() {
                0 | 1 => {
                    return Err(FirError::Data(format!(
                        "{}: classification needs at least two classes",
                        path.display()
                    )))
                }
                2 => TaskKind::Binary,
                k => TaskKind::Multiclass(k),
            };
            Ok(Dataset::new(features, Targets::Labels(labels), task, feature_names)?
                .with_class_names(class_names))
        }
    }
}

/// Reads a headed CSV of features, leaving out the column named `skip`
/// (typically a target) if there is one.
pub fn load_feature_matrix(path: impl AsRef<Path>, skip: Option<&str>) -> Result<(Vec<String>, Array2<f64>)> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let all: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let skipped = skip.and_then(|name| all.iter().position(|h| h == name));
    let headers: Vec<String> = all
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != skipped)
        .map(|(_, h)| h.clone())
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != all.len() {
            return Err(FirError::Data(format!(
                "row {} has {} fields, header has {}",
                r + 1,
                record.len(),
                all.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if Some(j) != skipped {
                values.push(parse_cell(cell, r + 1, &all[j])?);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(FirError::Data(format!("{}: no data rows", path.display())));
    }
    let x = Array2::from_shape_vec((rows, headers.len()), values)
        .map_err(|e| FirError::Data(e.to_string()))?;
    Ok((headers, x))
}

/// Writes features followed by a `target` column (class names for
/// classification when known).
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, target_name: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = ds.feature_names.clone();
    header.push(target_name.to_string());
    w.write_record(&header)?;
    for (i, row) in ds.features.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(match &ds.targets {
            Targets::Real(v) => format!("{:?}", v[i]),
            Targets::Labels(l) => match &ds.class_names {
                Some(names) => names[l[i]].clone(),
                None => l[i].to_string(),
            },
        });
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| FirError::io(path, e))?;
    Ok(())
}
