//! CSV persistence for vectors and matrices (with header rows).

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reads a dense matrix. The first row is a header and is skipped.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("{}: bad number {s:?}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{}: ragged matrix", path.display())));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..m.ncols()).map(|j| format!("c{j}")))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_vector_csv(path: &Path, name: &str, v: &DVector<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", name])?;
    for (i, x) in v.iter().enumerate() {
        w.write_record([i.to_string(), x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    match m.ncols() {
        1 => Ok(m.column(0).into_owned()),
        2 => Ok(m.column(1).into_owned()),
        c => Err(Error::Config(format!("{}: expected 1 or 2 columns, got {c}", path.display()))),
    }
}
