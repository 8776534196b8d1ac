//! CSV layouts. Floating-point values are written with 17 significant digits,
//! which round-trips every `f64`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nnreg_core::biosensor::Grid2D;
use nnreg_core::{DenseOperator, Matrix};

use crate::error::{CliError, Result};

pub const GRID_HEADER: [&str; 3] = ["axis1", "axis2", "value"];
pub const OPERATOR_HEADER: [&str; 3] = ["row", "col", "value"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(f)))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::format(path, format!("{other:?}")),
    }
}

fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let found = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::format(path, format!("expected header {}", header.join(","))));
    }
    Ok(r)
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::format(path, format!("cannot parse `{s}` as a number")))
}

/// One row per cell centroid, in cell-index order.
pub fn write_grid_values(path: &Path, grid: &Grid2D, values: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(GRID_HEADER).map_err(|e| csv_err(path, e))?;
    for ((a1, a2), v) in grid.centroids().into_iter().zip(values) {
        w.write_record([fmt_f64(a1), fmt_f64(a2), fmt_f64(*v)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads values written by [`write_grid_values`], checking the centroids
/// against `grid`.
pub fn read_grid_values(path: &Path, grid: &Grid2D) -> Result<Vec<f64>> {
    let mut r = reader(path, &GRID_HEADER)?;
    let centroids = grid.centroids();
    let mut values = Vec::with_capacity(grid.len());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != 3 {
            return Err(CliError::format(path, format!("row {} has {} fields", i + 1, rec.len())));
        }
        let (c1, c2) = *centroids
            .get(i)
            .ok_or_else(|| CliError::format(path, format!("more than {} rows", grid.len())))?;
        let a1 = parse_f64(path, &rec[0])?;
        let a2 = parse_f64(path, &rec[1])?;
        let tol = 1e-12 * (1.0 + c1.abs().max(c2.abs()));
        if (a1 - c1).abs() > tol || (a2 - c2).abs() > tol {
            return Err(CliError::format(path, format!("row {} does not match the grid centroid", i + 1)));
        }
        values.push(parse_f64(path, &rec[2])?);
    }
    if values.len() != grid.len() {
        return Err(CliError::format(path, format!("expected {} rows, found {}", grid.len(), values.len())));
    }
    Ok(values)
}

/// Dense matrix as `row,col,value` triplets in row-major order.
pub fn write_operator(path: &Path, op: &DenseOperator) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(OPERATOR_HEADER).map_err(|e| csv_err(path, e))?;
    let m = op.matrix();
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            w.write_record([i.to_string(), j.to_string(), fmt_f64(*v)])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_operator(path: &Path, rows: usize, cols: usize) -> Result<DenseOperator> {
    let mut r = reader(path, &OPERATOR_HEADER)?;
    let mut data = vec![0.0; rows * cols];
    let mut seen = vec![false; rows * cols];
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != 3 {
            return Err(CliError::format(path, "operator rows need 3 fields"));
        }
        let i: usize = rec[0].trim().parse().map_err(|_| CliError::format(path, "bad row index"))?;
        let j: usize = rec[1].trim().parse().map_err(|_| CliError::format(path, "bad column index"))?;
        if i >= rows || j >= cols {
            return Err(CliError::format(path, format!("entry ({i}, {j}) outside {rows}×{cols}")));
        }
        if std::mem::replace(&mut seen[i * cols + j], true) {
            return Err(CliError::format(path, format!("duplicate entry ({i}, {j})")));
        }
        data[i * cols + j] = parse_f64(path, &rec[2])?;
    }
    let m = Matrix::new(rows, cols, data).map_err(|e| CliError::format(path, e))?;
    Ok(DenseOperator::new(m))
}

/// Writes `header` plus `rows` as CSV; the fields are written verbatim.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a CSV table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| csv_err(path, e))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// Left-aligned text table with two spaces between columns.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(c);
            if i + 1 < widths.len() {
                s.extend(std::iter::repeat_n(' ', w - c.chars().count()));
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}
