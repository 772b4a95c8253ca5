//! Matrix file formats: dense CSV with optional label headers, and a sparse
//! 1-indexed coordinate triplet format.
//!
//! CSV layout: an optional first row of column labels and an optional first
//! column of row labels, both auto-detected by non-numeric cells. Coordinate
//! layout: a `rows cols nnz` header line followed by `i j value` lines;
//! duplicate coordinates are summed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{NmfError, Result};
use crate::model::{DataMatrix, Storage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Coord,
}

impl FromStr for MatrixFormat {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "coord" => Ok(MatrixFormat::Coord),
            other => Err(NmfError::InvalidInput(format!(
                "unknown matrix format `{other}`; expected csv or coord"
            ))),
        }
    }
}

/// Read a non-negative matrix from disk, computing sparsity and retaining
/// any labels found.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DataMatrix> {
    let reader = BufReader::new(File::open(path)?);
    match format {
        MatrixFormat::Csv => load_csv(reader),
        MatrixFormat::Coord => load_coord(reader),
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return None;
    }
    match trimmed.parse::<f64>() {
        Ok(value) if value.is_finite() => Some(value),
        _ => None,
    }
}

fn load_csv(reader: impl BufRead) -> Result<DataMatrix> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(line.split(',').map(|c| c.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(NmfError::EmptyMatrix);
    }

    // A non-numeric cell after the first column marks a header row; a single
    // non-numeric cell in a one-column file does too.
    let first = &rows[0];
    let has_header = if first.len() > 1 {
        first[1..].iter().any(|c| parse_cell(c).is_none())
    } else {
        parse_cell(&first[0]).is_none()
    };
    let mut col_labels = None;
    let data_start = usize::from(has_header);
    if rows.len() == data_start {
        return Err(NmfError::EmptyMatrix);
    }

    // Row labels: the first data row starts with a non-numeric cell.
    let has_row_labels = parse_cell(&rows[data_start][0]).is_none();
    if has_header {
        let mut labels = rows[0].clone();
        if has_row_labels {
            labels.remove(0);
        }
        col_labels = Some(labels);
    }

    let skip = usize::from(has_row_labels);
    let width = rows[data_start].len() - skip;
    if width == 0 {
        return Err(NmfError::EmptyMatrix);
    }
    let mut row_labels = has_row_labels.then(Vec::new);
    let mut values = Vec::with_capacity((rows.len() - data_start) * width);
    for (line_idx, row) in rows.iter().enumerate().skip(data_start) {
        let data_row = line_idx - data_start;
        if row.len() - skip != width {
            return Err(NmfError::RaggedRow {
                row: data_row,
                expected: width,
                found: row.len() - skip,
            });
        }
        if let Some(labels) = row_labels.as_mut() {
            labels.push(row[0].clone());
        }
        for (col, cell) in row[skip..].iter().enumerate() {
            let value = parse_cell(cell).ok_or_else(|| NmfError::FieldParse {
                row: data_row,
                field: cell.clone(),
            })?;
            if value < 0.0 {
                return Err(NmfError::NegativeEntry {
                    row: data_row,
                    col,
                    value,
                });
            }
            values.push(value);
        }
    }

    let n_rows = values.len() / width;
    let array = Array2::from_shape_vec((n_rows, width), values)
        .map_err(|e| NmfError::InvalidInput(e.to_string()))?;
    let mut matrix = DataMatrix::with_storage(array, Storage::Dense)?;
    matrix.row_labels = row_labels;
    matrix.col_labels = col_labels;
    Ok(matrix)
}

fn load_coord(reader: impl BufRead) -> Result<DataMatrix> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(NmfError::EmptyMatrix),
        }
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|tok| {
            tok.parse::<usize>().map_err(|_| NmfError::FieldParse {
                row: 0,
                field: tok.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(NmfError::InvalidInput(format!(
            "coordinate header must be `rows cols nnz`, got `{header}`"
        )));
    };
    if rows == 0 || cols == 0 {
        return Err(NmfError::EmptyMatrix);
    }

    let mut values = Array2::zeros((rows, cols));
    let mut seen = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(NmfError::RaggedRow {
                row: lineno + 1,
                expected: 3,
                found: fields.len(),
            });
        }
        let i: usize = fields[0].parse().map_err(|_| NmfError::FieldParse {
            row: lineno + 1,
            field: fields[0].to_string(),
        })?;
        let j: usize = fields[1].parse().map_err(|_| NmfError::FieldParse {
            row: lineno + 1,
            field: fields[1].to_string(),
        })?;
        let value = parse_cell(fields[2]).ok_or_else(|| NmfError::FieldParse {
            row: lineno + 1,
            field: fields[2].to_string(),
        })?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(NmfError::CoordinateOutOfRange { i, j, rows, cols });
        }
        if value < 0.0 {
            return Err(NmfError::NegativeEntry {
                row: i - 1,
                col: j - 1,
                value,
            });
        }
        values[(i - 1, j - 1)] += value;
        seen += 1;
    }
    if seen != nnz {
        log::warn!("coordinate file declared {nnz} entries but contained {seen}");
    }
    DataMatrix::with_storage(values, Storage::SparseCoordinate)
}

/// Write a matrix as CSV. When column labels are given, a header row is
/// emitted with `corner` in the top-left cell iff row labels are present.
pub fn write_matrix_csv(
    path: &Path,
    values: ArrayView2<f64>,
    row_labels: Option<&[String]>,
    col_labels: Option<&[String]>,
    corner: &str,
) -> Result<()> {
    if let Some(labels) = row_labels {
        if labels.len() != values.nrows() {
            return Err(NmfError::LabelMismatch {
                labels: labels.len(),
                cols: values.nrows(),
            });
        }
    }
    if let Some(labels) = col_labels {
        if labels.len() != values.ncols() {
            return Err(NmfError::LabelMismatch {
                labels: labels.len(),
                cols: values.ncols(),
            });
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(labels) = col_labels {
        let mut header = Vec::with_capacity(labels.len() + 1);
        if row_labels.is_some() {
            header.push(corner.to_string());
        }
        header.extend(labels.iter().cloned());
        writeln!(out, "{}", header.join(","))?;
    }
    for (i, row) in values.rows().into_iter().enumerate() {
        let mut fields = Vec::with_capacity(row.len() + 1);
        if let Some(labels) = row_labels {
            fields.push(labels[i].clone());
        }
        fields.extend(row.iter().map(|v| v.to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Write a matrix in the sparse coordinate format (1-indexed, zeros skipped).
pub fn write_matrix_coord(path: &Path, values: ArrayView2<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let nnz = values.iter().filter(|&&x| x != 0.0).count();
    writeln!(out, "{} {} {}", values.nrows(), values.ncols(), nnz)?;
    for ((i, j), &value) in values.indexed_iter() {
        if value != 0.0 {
            writeln!(out, "{} {} {}", i + 1, j + 1, value)?;
        }
    }
    out.flush()?;
    Ok(())
}
