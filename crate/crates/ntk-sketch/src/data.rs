//! Dataset representation and ingestion.
//!
//! A [`DataMatrix`] is a dense row-major `n x d` matrix of `f64` samples.
//! Ingestion supports CSV (optional header, detected by a non-numeric first
//! line) and LIBSVM (`label idx:val ...`, 1-based feature indices). Both
//! formats are documented in the README with sample files under `testdata/`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::prelude::*;

use crate::error::{Error, Result};

/// Dense row-major dataset; immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    normalized: bool,
}

/// Regression targets (or class labels cast to reals) aligned with a [`DataMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    values: Array1<f64>,
}

/// Supported on-disk dataset formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Libsvm,
}

impl DataMatrix {
    /// Wraps an owned array, checking shape and finiteness.
    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyDataset(format!(
                "matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        for ((i, j), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: i,
                    col: j,
                    message: format!("non-finite value {v}"),
                });
            }
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Whether every row is known to have unit Euclidean norm.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Checks the rows directly (for data loaded from disk, where the
    /// normalized flag cannot be known).
    pub fn rows_have_unit_norm(&self) -> bool {
        self.values
            .rows()
            .into_iter()
            .all(|r| (r.dot(&r).sqrt() - 1.0).abs() <= 1e-12)
    }

    /// Selects a subset of rows (used to split train/test pools).
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.rows() {
                return Err(Error::IndexOutOfRange(i, self.rows()));
            }
        }
        let values = self.values.select(Axis(0), indices);
        Ok(Self {
            values,
            normalized: self.normalized,
        })
    }
}

impl LabelVector {
    pub fn from_array(values: Array1<f64>) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: i,
                    col: 0,
                    message: format!("non-finite label {v}"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange(i, self.len()));
            }
        }
        Ok(Self {
            values: self.values.select(Axis(0), indices),
        })
    }
}

/// Returns a copy of `x` with every row scaled to unit Euclidean norm.
///
/// Rows already within `1e-12` of unit norm are left bit-identical, which
/// makes the operation exactly idempotent. A zero row is rejected rather than
/// dropped: downstream arc-cosine kernels divide by the row norm and the
/// caller should decide on remediation.
pub fn normalize_rows(x: &DataMatrix) -> Result<DataMatrix> {
    let mut values = x.values.clone();
    for (i, mut row) in values.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNormRow(i));
        }
        if (norm - 1.0).abs() > 1e-12 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(DataMatrix {
        values,
        normalized: true,
    })
}

fn numeric_cell(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads a dataset from disk.
///
/// For CSV, `label_column` (0-based) extracts that column as labels; a header
/// line is skipped when the first line contains any non-numeric cell. For
/// LIBSVM the leading token of each line is the label and `label_column` is
/// ignored; the feature dimension is inferred as the largest index seen.
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    label_column: Option<usize>,
) -> Result<(DataMatrix, Option<LabelVector>)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        DatasetFormat::Csv => parse_csv(&text, label_column),
        DatasetFormat::Libsvm => parse_libsvm(&text),
    }
}

fn parse_csv(text: &str, label_column: Option<usize>) -> Result<(DataMatrix, Option<LabelVector>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records: Vec<csv::StringRecord> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            row: records.len(),
            col: 0,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset("no CSV rows".into()));
    }
    // Header detection: a first line with any non-numeric cell is skipped.
    let has_header = records[0].iter().any(|f| numeric_cell(f).is_none());
    let data_rows = if has_header { &records[1..] } else { &records[..] };
    if data_rows.is_empty() {
        return Err(Error::EmptyDataset("CSV contains only a header".into()));
    }
    let width = data_rows[0].len();
    if let Some(lc) = label_column {
        if lc >= width {
            return Err(Error::InvalidParameter(format!(
                "label column {lc} out of range for width {width}"
            )));
        }
    }
    let d = width - usize::from(label_column.is_some());
    if d == 0 {
        return Err(Error::EmptyDataset("no feature columns left".into()));
    }
    let n = data_rows.len();
    let mut values = Array2::<f64>::zeros((n, d));
    let mut labels = label_column.map(|_| Array1::<f64>::zeros(n));
    for (i, rec) in data_rows.iter().enumerate() {
        let display_row = i + usize::from(has_header);
        if rec.len() != width {
            return Err(Error::Parse {
                row: display_row,
                col: rec.len(),
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let mut k = 0;
        for (j, field) in rec.iter().enumerate() {
            let v = numeric_cell(field).ok_or_else(|| Error::Parse {
                row: display_row,
                col: j,
                message: format!("non-numeric cell {field:?}"),
            })?;
            if Some(j) == label_column {
                labels.as_mut().unwrap()[i] = v;
            } else {
                values[[i, k]] = v;
                k += 1;
            }
        }
    }
    Ok((
        DataMatrix::from_array(values)?,
        labels.map(LabelVector::from_array).transpose()?,
    ))
}

fn parse_libsvm(text: &str) -> Result<(DataMatrix, Option<LabelVector>)> {
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label_tok = parts.next().unwrap();
        let label = label_tok.parse::<f64>().map_err(|_| Error::Parse {
            row: i,
            col: 0,
            message: format!("bad label {label_tok:?}"),
        })?;
        let mut feats = Vec::new();
        for (j, tok) in parts.enumerate() {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                row: i,
                col: j + 1,
                message: format!("expected idx:val, found {tok:?}"),
            })?;
            // LIBSVM indices are 1-based by convention; converted to 0-based here.
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                row: i,
                col: j + 1,
                message: format!("bad feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    row: i,
                    col: j + 1,
                    message: "LIBSVM feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                row: i,
                col: j + 1,
                message: format!("bad feature value {val:?}"),
            })?;
            max_index = max_index.max(idx);
            feats.push((idx - 1, val));
        }
        rows.push((label, feats));
    }
    if rows.is_empty() || max_index == 0 {
        return Err(Error::EmptyDataset("no LIBSVM rows".into()));
    }
    let mut values = Array2::<f64>::zeros((rows.len(), max_index));
    let mut labels = Array1::<f64>::zeros(rows.len());
    for (i, (label, feats)) in rows.iter().enumerate() {
        labels[i] = *label;
        for &(j, v) in feats {
            values[[i, j]] = v;
        }
    }
    Ok((
        DataMatrix::from_array(values)?,
        Some(LabelVector::from_array(labels)?),
    ))
}

/// Writes a matrix as plain CSV, one row per line.
///
/// Values use Rust's shortest round-trip float formatting, so reading the
/// file back reproduces the exact bits.
pub fn write_matrix_csv(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a headerless numeric CSV into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let (dm, _) = load_dataset(path, DatasetFormat::Csv, None)?;
    Ok(dm.values)
}
