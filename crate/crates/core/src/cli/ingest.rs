//! CSV ingestion and export of regression data.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::RegressionData;
use crate::error::{Error, Result};

/// Which columns of a CSV file make up the regression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub response: String,
    /// Empty selects every column except the response, in file order.
    pub predictors: Vec<String>,
    /// Lags of the response appended as columns `{response}_lag{k}`.
    pub lags: Vec<usize>,
    /// Zero mean and unit population variance for the response and the
    /// predictors, applied before lags are formed.
    pub standardize: bool,
    /// Prepend a column of ones named `intercept`.
    pub intercept: bool,
}

impl CsvSchema {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            predictors: Vec::new(),
            lags: Vec::new(),
            standardize: false,
            intercept: false,
        }
    }
}

/// Parsed numeric table: header names and column-major values.
struct Table {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn read_table(path: &Path, wanted: &[String]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let positions = wanted
        .iter()
        .map(|w| {
            header
                .iter()
                .position(|h| h == w)
                .ok_or_else(|| Error::invalid(format!("column '{w}' not found in {}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec![Vec::new(); wanted.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        for (col, &pos) in columns.iter_mut().zip(&positions) {
            let cell = &record[pos];
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row: r + 1,
                column: header[pos].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: r + 1,
                    column: header[pos].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            col.push(value);
        }
    }
    Ok(Table {
        names: wanted.to_vec(),
        columns,
    })
}

fn all_predictors(path: &Path, response: &str) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    Ok(reader
        .headers()?
        .iter()
        .filter(|h| *h != response)
        .map(str::to_owned)
        .collect())
}

/// Centres a column and scales it to unit population variance.
pub fn standardize(values: &mut [f64], name: &str) -> Result<()> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::invalid(format!("column '{name}' is constant and cannot be standardized")));
    }
    let sd = var.sqrt();
    for v in values.iter_mut() {
        *v = (*v - mean) / sd;
    }
    Ok(())
}

/// Reads a header-first CSV file into regression data.
///
/// Row numbers in parse errors count data rows from 1, excluding the header.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<RegressionData> {
    let path = path.as_ref();
    let predictors = if schema.predictors.is_empty() {
        all_predictors(path, &schema.response)?
    } else {
        schema.predictors.clone()
    };
    let mut wanted = vec![schema.response.clone()];
    wanted.extend(predictors.iter().cloned());
    let mut table = read_table(path, &wanted)?;
    if schema.standardize {
        for (col, name) in table.columns.iter_mut().zip(&table.names) {
            standardize(col, name)?;
        }
    }
    let max_lag = schema.lags.iter().copied().max().unwrap_or(0);
    if schema.lags.contains(&0) {
        return Err(Error::invalid("lag 0 duplicates the response"));
    }
    let rows = table.columns[0].len();
    if rows <= max_lag {
        return Err(Error::invalid(format!("{rows} rows cannot support lag {max_lag}")));
    }
    let n = rows - max_lag;
    let y_full = &table.columns[0];
    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if schema.intercept {
        names.push("intercept".to_owned());
        cols.push(vec![1.0; n]);
    }
    for (name, col) in table.names.iter().zip(&table.columns).skip(1) {
        names.push(name.clone());
        cols.push(col[max_lag..].to_vec());
    }
    for &k in &schema.lags {
        names.push(format!("{}_lag{k}", schema.response));
        cols.push(y_full[max_lag - k..rows - k].to_vec());
    }
    if cols.is_empty() {
        return Err(Error::invalid("no predictor columns selected"));
    }
    let y = DVector::from_column_slice(&y_full[max_lag..]);
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    RegressionData::new(y, x, names)
}

/// Writes `response` followed by the design columns, one row per time
/// point. Values use the shortest decimal form that parses back exactly.
pub fn write_csv(data: &RegressionData, path: impl AsRef<Path>, response: &str) -> Result<()> {
    write_csv_to(data, std::fs::File::create(path)?, response)
}

pub fn write_csv_to<W: Write>(data: &RegressionData, out: W, response: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![response.to_owned()];
    header.extend(data.column_names().iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut row = vec![data.y()[i].to_string()];
        row.extend((0..data.p()).map(|j| data.x()[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a series as `t,{name}` rows.
pub fn write_series_to<W: Write>(times: &[f64], values: &[f64], name: &str, out: W) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", name])?;
    for (t, v) in times.iter().zip(values) {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
