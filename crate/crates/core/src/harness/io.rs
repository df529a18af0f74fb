//! CSV and JSON file helpers.
//!
//! Matrices are written one row per line with Rust's shortest round-trip
//! float formatting, so a write followed by a read reproduces every value.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{de::DeserializeOwned, Serialize};

use crate::datagen::SampleSet;
use crate::error::{Error, Result};

pub fn write_matrix_csv(path: &Path, rows: ArrayView2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows.rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",").map_err(|e| Error::io(path, e))?;
            }
            write!(w, "{v}").map_err(|e| Error::io(path, e))?;
            first = false;
        }
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a rectangular CSV of finite reals, one sample per row (no header).
/// Blank lines are skipped; rows and columns in errors are 1-based.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            },
            _ => Error::Csv(e),
        })?;
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(r + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    row: line,
                    column: record.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_owned(),
                row: line,
                column: c + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    row: line,
                    column: c + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Internal(e.to_string()))
}

/// Load a sample matrix, one sample per row.
pub fn load_matrix_csv(path: &Path) -> Result<SampleSet> {
    read_matrix_csv(path).map(SampleSet::new)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::SyntheticSpec;
    use ndarray::array;

    #[test]
    fn reads_simple_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "1,0,2\n0,3,0\n").unwrap();
        let set = load_matrix_csv(&p).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.m(), 3);
        assert_eq!(set.samples, array![[1.0, 0.0, 2.0], [0.0, 3.0, 0.0]]);
    }

    #[test]
    fn ragged_rows_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "1,2,3\n4,5\n").unwrap();
        match load_matrix_csv(&p) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_values_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        std::fs::write(&p, "1,2\n3,abc\n").unwrap();
        assert!(matches!(
            load_matrix_csv(&p),
            Err(Error::Parse {
                row: 2,
                column: 2,
                ..
            })
        ));
        std::fs::write(&p, "1,NaN\n").unwrap();
        assert!(matches!(
            load_matrix_csv(&p),
            Err(Error::Parse {
                row: 1,
                column: 2,
                ..
            })
        ));
        assert!(matches!(
            load_matrix_csv(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn generated_data_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            seed: 3,
            random_sign: true,
            ..Default::default()
        };
        let data = spec.generate().unwrap();
        data.write(&spec, dir.path()).unwrap();
        let back = load_matrix_csv(&dir.path().join("train_d2.csv")).unwrap();
        assert_eq!(back, data.train[1]);
        let manifest: SyntheticSpec = read_json(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(manifest, spec);
    }
}
