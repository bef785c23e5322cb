//! Rectangular numeric observations keyed by variable name.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::StatsError;

/// Smallest number of complete rows a dataset may hold.
pub const MIN_ROWS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTable {
    names: Vec<String>,
    columns: BTreeMap<String, Vec<f64>>,
    row_count: usize,
    dropped_rows: usize,
}

fn is_missing(field: &str) -> bool {
    matches!(field.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

impl DatasetTable {
    /// Builds a table from full columns; rows with a non-finite value in any column are dropped.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Result<Self, StatsError> {
        let len = columns.first().map_or(0, |c| c.1.len());
        let mut names = Vec::with_capacity(columns.len());
        for (name, col) in &columns {
            if col.len() != len {
                return Err(StatsError::LengthMismatch(len, col.len()));
            }
            if names.contains(name) {
                return Err(StatsError::DuplicateColumn(name.clone()));
            }
            names.push(name.clone());
        }
        let keep: Vec<bool> = (0..len)
            .map(|r| columns.iter().all(|(_, c)| c[r].is_finite()))
            .collect();
        let kept = keep.iter().filter(|k| **k).count();
        if kept < MIN_ROWS {
            return Err(StatsError::TooFewRows { rows: kept, min: MIN_ROWS });
        }
        let columns = columns
            .into_iter()
            .map(|(name, col)| {
                let col = col.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v).collect();
                (name, col)
            })
            .collect();
        Ok(DatasetTable {
            names,
            columns,
            row_count: kept,
            dropped_rows: len - kept,
        })
    }

    /// Reads CSV with a header row of variable names; incomplete rows are dropped and counted.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, StatsError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| StatsError::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| StatsError::Csv(e.to_string()))?;
            for (c, field) in record.iter().enumerate() {
                let v = if is_missing(field) {
                    f64::NAN
                } else {
                    field.trim().parse::<f64>().map_err(|_| {
                        StatsError::Csv(format!("row {}, column `{}`: `{field}` is not numeric", i + 2, header[c]))
                    })?
                };
                cols[c].push(v);
            }
        }
        Self::from_columns(header.into_iter().zip(cols).collect())
    }

    pub fn from_csv_str(text: &str) -> Result<Self, StatsError> {
        Self::from_csv(text.as_bytes())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StatsError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| StatsError::Csv(e.to_string());
        w.write_record(&self.names).map_err(err)?;
        for r in 0..self.row_count {
            w.write_record(self.names.iter().map(|n| format_value(self.columns[n][r])))
                .map_err(err)?;
        }
        w.flush().map_err(|e| StatsError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// SHA-256 of the canonical CSV form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }

    /// Column names in file order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[f64], StatsError> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| StatsError::MissingColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    /// Rows removed at construction because a value was missing.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
