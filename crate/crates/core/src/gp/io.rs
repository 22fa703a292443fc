//! Dataset CSV files: header `x_1,...,x_d,y`, one observation per row.
//!
//! Lines starting with `#` are treated as comments. The noise variance is not
//! part of the file and is supplied by the caller.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn read_dataset_csv<T: Scalar, R: Read>(reader: R, noise_variance: T) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let cols = headers.len();
    if cols < 2 {
        return Err(Error::Config("dataset needs at least one input column and y".into()));
    }
    for (i, h) in headers.iter().enumerate() {
        let expected = if i + 1 == cols { "y".to_string() } else { format!("x_{}", i + 1) };
        if h != expected {
            return Err(Error::Config(format!(
                "dataset header column {} is '{h}', expected '{expected}'",
                i + 1
            )));
        }
    }
    let d = cols - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Config(format!("row {}: cannot parse '{field}'", row + 1)))?;
            if j < d {
                xs.push(T::lit(v));
            } else {
                ys.push(T::lit(v));
            }
        }
    }
    let n = ys.len();
    Dataset::new(
        DMatrix::from_row_slice(n, d, &xs),
        DVector::from_vec(ys),
        noise_variance,
    )
}

pub fn write_dataset_csv<T: Scalar, W: Write>(dataset: &Dataset<T>, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let d = dataset.dimension();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.push("y".into());
    wtr.write_record(&header).map_err(csv_err)?;
    for i in 0..dataset.len() {
        let mut row: Vec<String> = dataset.point(i).iter().map(|v| fmt(*v)).collect();
        row.push(fmt(dataset.targets()[i]));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn fmt<T: Scalar>(v: T) -> String {
    format!("{:e}", v.as_f64())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}
