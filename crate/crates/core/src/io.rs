//! Dense matrices and vectors as CSV: a `rows,cols` header line followed by
//! the entries in row-major order. Vectors are stored as `n,1` matrices.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub fn write_matrix<W: Write>(out: W, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record([m.nrows().to_string(), m.ncols().to_string()])?;
    for row in m.rows() {
        w.write_record(row.iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Parse("missing rows,cols header".into()))??;
    if header.len() != 2 {
        return Err(Error::Parse(format!("header must be rows,cols, got {} fields", header.len())));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("bad dimension {s:?}: {e}")));
    let (rows, cols) = (dim(&header[0])?, dim(&header[1])?);
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (line, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Parse(format!("row {line} has {} entries, expected {cols}", rec.len())));
        }
        for field in rec.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {line}: bad number {field:?}: {e}")))?,
            );
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse(format!("header declares {rows} rows, found {seen}")));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Shape(e.to_string()))
}

pub fn write_vector<W: Write>(out: W, v: &Array1<f64>) -> Result<()> {
    write_matrix(out, &v.view().insert_axis(ndarray::Axis(1)).to_owned())
}

pub fn read_vector<R: Read>(input: R) -> Result<Array1<f64>> {
    let m = read_matrix(input)?;
    if m.ncols() != 1 {
        return Err(Error::Shape(format!("expected a single column, got {}", m.ncols())));
    }
    Ok(m.column(0).to_owned())
}

/// Reads a vector and checks every entry is `±1`.
pub fn read_labels<R: Read>(input: R) -> Result<Array1<f64>> {
    let v = read_vector(input)?;
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, &b)| b != 1.0 && b != -1.0) {
        return Err(Error::InvalidLabel { index, value });
    }
    Ok(v)
}
