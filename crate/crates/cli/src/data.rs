//! CSV input and output.

use std::path::{Path, PathBuf};

use crate::error::{CliError, DataError};

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Read the named columns of a CSV file with a header row, keeping row order.
/// Every listed cell must parse as a finite number.
pub fn load_columns(path: &Path, columns: &[&str]) -> Result<Table, DataError> {
    let read_err = |message: String| DataError::Read { path: path.to_path_buf(), message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| read_err(e.to_string()))?;
    let header: Vec<String> =
        reader.headers().map_err(|e| read_err(e.to_string()))?.iter().map(str::to_owned).collect();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| DataError::MissingColumn { path: path.to_path_buf(), column: (*c).to_owned() })
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| read_err(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                path: path.to_path_buf(),
                line,
                expected: header.len(),
                got: record.len(),
            });
        }
        let row = idx
            .iter()
            .map(|&j| {
                let cell = &record[j];
                let column = header[j].clone();
                let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: column.clone(),
                    value: cell.to_owned(),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(DataError::NotFinite { path: path.to_path_buf(), line, column, value: cell.to_owned() })
                }
            })
            .collect::<Result<Vec<f64>, DataError>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty { path: path.to_path_buf() });
    }
    Ok(Table { header: columns.iter().map(|c| (*c).to_owned()).collect(), rows })
}

/// Inputs `X` (one row per record) and targets `y`.
pub fn load_csv(path: &Path, feature_cols: &[&str], target_col: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>), DataError> {
    let mut cols = feature_cols.to_vec();
    cols.push(target_col);
    let table = load_columns(path, &cols)?;
    let d = feature_cols.len();
    Ok(table
        .rows
        .into_iter()
        .map(|mut r| {
            let y = r.pop().expect("target column present");
            debug_assert_eq!(r.len(), d);
            (r, y)
        })
        .unzip())
}

/// Header of a CSV file.
pub fn read_header(path: &Path) -> Result<Vec<String>, DataError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| DataError::Read { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(reader
        .headers()
        .map_err(|e| DataError::Read { path: path.to_path_buf(), message: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect())
}

/// Write `table` to `dir/name`. Numbers use the shortest representation that
/// reads back exactly, so reruns produce identical bytes.
pub fn write_table(dir: &Path, name: &str, table: &Table) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let out_err = |e: csv::Error| CliError::Output { path: path.clone(), source: e.into() };
    let mut w = csv::Writer::from_path(&path).map_err(out_err)?;
    w.write_record(&table.header).map_err(out_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(out_err)?;
    }
    w.flush().map_err(|source| CliError::Output { path: path.clone(), source })?;
    Ok(path)
}
