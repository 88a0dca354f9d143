use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, TaskType};
use crate::matrix::Matrix;

/// Column layout and categorical encodings captured at training time, so that
/// later files are encoded consistently.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CsvSchema {
    pub feature_names: Vec<String>,
    pub target_name: String,
    #[serde(default)]
    pub encodings: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub class_labels: Option<Vec<String>>,
}

struct RawTable {
    headers: Vec<String>,
    cells: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record?;
        cells.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    Ok(RawTable { headers, cells })
}

fn is_blank(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

fn column_is_numeric(cells: &[Vec<String>], col: usize) -> bool {
    cells.iter().map(|row| row[col].as_str()).filter(|c| !is_blank(c)).all(|c| c.parse::<f64>().is_ok())
}

/// Sorted distinct non-blank values; numeric-looking values sort numerically.
fn categories(cells: &[Vec<String>], col: usize) -> Vec<String> {
    let mut values: Vec<String> = cells.iter().map(|row| row[col].clone()).filter(|c| !is_blank(c)).collect();
    values.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    });
    values.dedup();
    values
}

/// Loads a CSV file with a header row. Numeric columns are parsed as floats,
/// non-numeric columns are label-encoded, blank cells become NaN (missing).
pub fn load_csv(
    path: impl AsRef<Path>,
    task: TaskType,
    target_column: &str,
    horizon: Option<usize>,
) -> Result<Dataset, DataError> {
    let table = read_table(path.as_ref())?;
    let target_idx = table
        .headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| DataError::MissingTarget(target_column.to_string()))?;

    if task == TaskType::TsForecasting {
        let series = parse_numeric_column(&table, target_idx)?;
        let mut ds = Dataset::time_series(series, horizon.unwrap_or(1));
        ds.feature_names = vec![target_column.to_string()];
        ds.target_name = target_column.to_string();
        ds.forecast_horizon = horizon;
        return Ok(ds);
    }

    let mut schema = CsvSchema { target_name: target_column.to_string(), ..Default::default() };
    for (c, name) in table.headers.iter().enumerate() {
        if c == target_idx {
            continue;
        }
        schema.feature_names.push(name.clone());
        if !column_is_numeric(&table.cells, c) {
            schema.encodings.insert(name.clone(), categories(&table.cells, c));
        }
    }
    if task == TaskType::Classification {
        schema.class_labels = Some(categories(&table.cells, target_idx));
    }
    build_dataset(&table, task, &schema, horizon, true)
}

/// Loads a CSV using a schema captured earlier. The target column is optional;
/// when absent the target is filled with NaN.
pub fn load_csv_with_schema(
    path: impl AsRef<Path>,
    task: TaskType,
    schema: &CsvSchema,
    horizon: Option<usize>,
) -> Result<Dataset, DataError> {
    let table = read_table(path.as_ref())?;
    if task == TaskType::TsForecasting {
        let idx = table
            .headers
            .iter()
            .position(|h| *h == schema.target_name)
            .ok_or_else(|| DataError::MissingTarget(schema.target_name.clone()))?;
        let series = parse_numeric_column(&table, idx)?;
        let mut ds = Dataset::time_series(series, horizon.unwrap_or(1));
        ds.feature_names = vec![schema.target_name.clone()];
        ds.target_name = schema.target_name.clone();
        ds.forecast_horizon = horizon;
        return Ok(ds);
    }
    let has_target = table.headers.iter().any(|h| *h == schema.target_name);
    build_dataset(&table, task, schema, horizon, has_target)
}

/// Like [`load_csv_with_schema`], but every non-target column must match the
/// schema's feature columns exactly and in order.
pub fn load_csv_matching(
    path: impl AsRef<Path>,
    task: TaskType,
    schema: &CsvSchema,
    horizon: Option<usize>,
) -> Result<Dataset, DataError> {
    if task != TaskType::TsForecasting {
        let table = read_table(path.as_ref())?;
        let found: Vec<String> = table.headers.iter().filter(|h| **h != schema.target_name).cloned().collect();
        if found != schema.feature_names {
            return Err(DataError::SchemaMismatch { expected: schema.feature_names.clone(), found });
        }
    }
    load_csv_with_schema(path, task, schema, horizon)
}

fn parse_numeric_column(table: &RawTable, col: usize) -> Result<Vec<f64>, DataError> {
    table
        .cells
        .iter()
        .enumerate()
        .map(|(r, row)| {
            row[col].parse::<f64>().map_err(|_| DataError::Parse {
                row: r + 1,
                column: table.headers[col].clone(),
                message: format!("expected a number, found `{}`", row[col]),
            })
        })
        .collect()
}

fn build_dataset(
    table: &RawTable,
    task: TaskType,
    schema: &CsvSchema,
    horizon: Option<usize>,
    has_target: bool,
) -> Result<Dataset, DataError> {
    let mut col_idx = Vec::with_capacity(schema.feature_names.len());
    for name in &schema.feature_names {
        let idx = table.headers.iter().position(|h| h == name).ok_or_else(|| DataError::Parse {
            row: 0,
            column: name.clone(),
            message: "column missing from header".into(),
        })?;
        col_idx.push(idx);
    }
    let target_idx = if has_target {
        Some(
            table
                .headers
                .iter()
                .position(|h| *h == schema.target_name)
                .ok_or_else(|| DataError::MissingTarget(schema.target_name.clone()))?,
        )
    } else {
        None
    };

    let n = table.cells.len();
    let mut features = Matrix::zeros(n, col_idx.len());
    let mut target = vec![f64::NAN; n];
    for (r, row) in table.cells.iter().enumerate() {
        for (j, (&c, name)) in col_idx.iter().zip(&schema.feature_names).enumerate() {
            let cell = row[c].as_str();
            let value = if is_blank(cell) {
                f64::NAN
            } else if let Some(cats) = schema.encodings.get(name) {
                // unseen categories are treated as missing
                cats.iter().position(|k| k == cell).map_or(f64::NAN, |p| p as f64)
            } else {
                cell.parse::<f64>().map_err(|_| DataError::Parse {
                    row: r + 1,
                    column: name.clone(),
                    message: format!("expected a number, found `{cell}`"),
                })?
            };
            features.set(r, j, value);
        }
        if let Some(t) = target_idx {
            let cell = row[t].as_str();
            target[r] = if is_blank(cell) {
                return Err(DataError::Parse {
                    row: r + 1,
                    column: schema.target_name.clone(),
                    message: "target value is missing".into(),
                });
            } else if let Some(labels) = &schema.class_labels {
                labels.iter().position(|k| k == cell).ok_or_else(|| DataError::Parse {
                    row: r + 1,
                    column: schema.target_name.clone(),
                    message: format!("unknown class label `{cell}`"),
                })? as f64
            } else {
                cell.parse::<f64>().map_err(|_| DataError::Parse {
                    row: r + 1,
                    column: schema.target_name.clone(),
                    message: format!("expected a number, found `{cell}`"),
                })?
            };
        }
    }
    Ok(Dataset {
        features,
        target,
        feature_names: schema.feature_names.clone(),
        target_name: schema.target_name.clone(),
        task,
        forecast_horizon: horizon,
        encodings: schema.encodings.clone(),
        class_labels: schema.class_labels.clone(),
    })
}

/// Writes the dataset back out as CSV (features then target). Missing cells
/// are written blank; encoded categorical values are decoded.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    if data.task == TaskType::TsForecasting {
        w.write_record([data.target_name.as_str()])?;
        for v in &data.target {
            w.write_record([format_num(*v)])?;
        }
        w.flush()?;
        return Ok(());
    }
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.push(&data.target_name);
    w.write_record(&header)?;
    for r in 0..data.rows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for (c, name) in data.feature_names.iter().enumerate() {
            let v = data.features.get(r, c);
            rec.push(match (v.is_nan(), data.encodings.get(name)) {
                (true, _) => String::new(),
                (false, Some(cats)) => cats.get(v as usize).cloned().unwrap_or_default(),
                (false, None) => format_num(v),
            });
        }
        let t = data.target[r];
        rec.push(match &data.class_labels {
            Some(labels) if !t.is_nan() => labels.get(t as usize).cloned().unwrap_or_else(|| format_num(t)),
            _ => format_num(t),
        });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn format_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // shortest representation that parses back to the same value
        format!("{v:?}")
    }
}
