//! Per-site analytic dataset: a rectangular numeric table read from CSV.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{DraError, Result};
use crate::scalar::Scalar;

/// Numeric table held by one data partner. Missing cells (`""`, `.`, `NA`)
/// are stored as NaN and rejected when a used column is turned into a design.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticDataset<S> {
    pub partner_id: u32,
    columns: Vec<String>,
    rows: Vec<Vec<S>>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "." | "NA" | "NaN" | "nan")
}

impl<S: Scalar> AnalyticDataset<S> {
    pub fn new(partner_id: u32, columns: Vec<String>, rows: Vec<Vec<S>>) -> Result<Self> {
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(DraError::Dataset(format!(
                "row {} has {} cells, header has {}",
                i + 1,
                rows[i].len(),
                columns.len()
            )));
        }
        let mut seen: Vec<String> = columns.iter().map(|c| c.to_lowercase()).collect();
        seen.sort();
        seen.dedup();
        if seen.len() != columns.len() {
            return Err(DraError::Dataset("duplicate column names (case-insensitive)".into()));
        }
        Ok(Self {
            partner_id,
            columns,
            rows,
        })
    }

    pub fn from_csv_reader<R: Read>(partner_id: u32, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if columns.is_empty() {
            return Err(DraError::Dataset("CSV has no header row".into()));
        }
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(columns.len());
            for (cell, name) in record.iter().zip(&columns) {
                let v = if is_missing(cell) {
                    S::nan()
                } else {
                    let x: f64 = cell
                        .parse()
                        .map_err(|_| DraError::data(i + 1, name, format!("`{cell}` is not a number")))?;
                    S::from_f64(x).ok_or_else(|| DraError::data(i + 1, name, "value out of range"))?
                };
                row.push(v);
            }
            rows.push(row);
        }
        Self::new(partner_id, columns, rows)
    }

    pub fn from_csv_path(partner_id: u32, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| DraError::io(path, e))?;
        Self::from_csv_reader(partner_id, std::io::BufReader::new(file))
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    /// Case-insensitive column lookup.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, name: &str) -> Option<Vec<S>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Appends a column; used when adding site indicator variables.
    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<S>) -> Result<()> {
        let name = name.into();
        if values.len() != self.rows.len() {
            return Err(DraError::Dataset(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.rows.len()
            )));
        }
        if self.column_index(&name).is_some() {
            return Err(DraError::Dataset(format!("column `{name}` already exists")));
        }
        self.columns.push(name);
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.push(v);
        }
        Ok(())
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, partner_id: u32, indices: &[usize]) -> Self {
        Self {
            partner_id,
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Concatenates datasets with identical headers.
    pub fn concat(partner_id: u32, parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| DraError::Dataset("nothing to concatenate".into()))?;
        let mut rows = Vec::new();
        for p in parts {
            if p.columns != first.columns {
                return Err(DraError::Dataset(format!(
                    "partner {} has a different header",
                    p.partner_id
                )));
            }
            rows.extend(p.rows.iter().cloned());
        }
        Ok(Self {
            partner_id,
            columns: first.columns.clone(),
            rows,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_number(*v)))?;
        }
        w.flush().map_err(|e| DraError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| DraError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Shortest decimal that round-trips; integers print without a fraction.
pub(crate) fn format_number<S: Scalar>(v: S) -> String {
    if v.is_nan() {
        return String::new();
    }
    let x = v.to_f64_lossless();
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else if x != 0.0 && (x.abs() < 1e-5 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Locates `<name>.csv` in `dir`, falling back to a case-insensitive match.
pub fn resolve_dataset_path(dir: &Path, name: &str) -> Result<PathBuf> {
    let file_name = if name.to_lowercase().ends_with(".csv") {
        name.to_string()
    } else {
        format!("{name}.csv")
    };
    let exact = dir.join(&file_name);
    if exact.is_file() {
        return Ok(exact);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| DraError::io(dir, e))?;
    for entry in entries.flatten() {
        if entry.file_name().to_string_lossy().eq_ignore_ascii_case(&file_name) {
            return Ok(entry.path());
        }
    }
    Err(DraError::Dataset(format!(
        "dataset `{file_name}` not found in {}",
        dir.display()
    )))
}
