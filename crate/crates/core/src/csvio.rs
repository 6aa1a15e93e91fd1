//! CSV emission and strict re-ingestion for plot data and benchmark tables.
//!
//! Headers are part of the interface:
//!
//! - sweep: `c,variance,bias_bound,capped_fraction`
//! - quantiles: `quantile,weight`
//! - benchmark records: one row per (test, estimator) with the online and
//!   offline uplifts and their intervals — the box data of an
//!   online-vs-offline decision plot (offline interval = width, online
//!   interval = height).

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{QuantileTable, SweepRow};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot access csv file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv: {0}")]
    Format(#[from] csv::Error),
}

/// One quantile row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub quantile: f64,
    pub weight: f64,
}

/// Writes any serializable row type with headers.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CsvError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Strict reader: every row must deserialize, no trailing garbage.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CsvError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, csv::Error>>()
        .map_err(CsvError::from)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), CsvError> {
    write_rows(path, rows)
}

pub fn write_quantiles(path: &Path, table: &QuantileTable) -> Result<(), CsvError> {
    let rows: Vec<QuantileRow> = table
        .quantiles
        .iter()
        .zip(&table.values)
        .map(|(&quantile, &weight)| QuantileRow { quantile, weight })
        .collect();
    write_rows(path, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_rows_round_trip() {
        let rows = vec![
            SweepRow {
                c: 1.0,
                variance: 0.25,
                bias_bound: 0.125,
                capped_fraction: 0.5,
            },
            SweepRow {
                c: 10.0,
                variance: 1.5,
                bias_bound: 0.0,
                capped_fraction: 0.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("c,variance,bias_bound,capped_fraction\n"));
        let back: Vec<SweepRow> = read_rows(&path).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn strict_reader_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "quantile,weight\n0.5,1.0,extra\n").unwrap();
        assert!(read_rows::<QuantileRow>(&path).is_err());
    }
}
