//! CSV tables of real numbers with a header row.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A numeric table: column names and one matrix row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: DMatrix<f64>,
}

/// Reads a header row and at least one record of numbers. Errors carry the
/// 1-based line number of the offending record.
pub fn read_table<R: Read>(input: R) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(1, "missing header row".into()));
    }
    let ncol = header.len();
    let mut values = Vec::new();
    let mut nrow = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != ncol {
            return Err(parse_err(
                line,
                format!("expected {ncol} fields, found {}", rec.len()),
            ));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(
                    line,
                    format!("column '{}': '{field}' is not a number", header[j]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    line,
                    format!("column '{}' is not finite", header[j]),
                ));
            }
            values.push(v);
        }
        nrow += 1;
    }
    if nrow == 0 {
        return Err(parse_err(2, "no data rows".into()));
    }
    Ok(Table {
        header,
        rows: DMatrix::from_row_slice(nrow, ncol, &values),
    })
}

fn parse_err(line: u64, msg: String) -> Error {
    Error::Parse { line, msg }
}

/// Training data: every column but the last is an input, the last is the response.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub input_names: Vec<String>,
    pub response_name: String,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

pub fn read_training<R: Read>(input: R) -> Result<TrainingData> {
    let t = read_table(input)?;
    let ncol = t.header.len();
    if ncol < 2 {
        return Err(parse_err(
            1,
            "need at least one input column and a response column".into(),
        ));
    }
    let m = ncol - 1;
    Ok(TrainingData {
        input_names: t.header[..m].to_vec(),
        response_name: t.header[m].clone(),
        x: t.rows.columns(0, m).into_owned(),
        y: t.rows.column(m).iter().copied().collect(),
    })
}

/// Reads test inputs that must have exactly `m` columns.
pub fn read_inputs<R: Read>(input: R, m: usize) -> Result<Table> {
    let t = read_table(input)?;
    if t.header.len() != m {
        return Err(parse_err(
            1,
            format!("expected {m} input columns, found {}", t.header.len()),
        ));
    }
    Ok(t)
}

/// Writes `header` and the rows of `rows`.
pub fn write_table<W: Write>(out: W, header: &[String], rows: &DMatrix<f64>) -> Result<()> {
    if header.len() != rows.ncols() {
        return Err(Error::invalid(format!(
            "{} column names for {} columns",
            header.len(),
            rows.ncols()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for i in 0..rows.nrows() {
        w.write_record(rows.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Default coordinate names `x1, x2, …`.
pub fn coordinate_names(m: usize) -> Vec<String> {
    (1..=m).map(|l| format!("x{l}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_training_csv() {
        let text = "a,b,y\n1,2,3\n4, 5 ,6\n";
        let d = read_training(text.as_bytes()).unwrap();
        assert_eq!(d.input_names, ["a", "b"]);
        assert_eq!(d.response_name, "y");
        assert_eq!(d.x.row(1).iter().copied().collect::<Vec<_>>(), [4.0, 5.0]);
        assert_eq!(d.y, [3.0, 6.0]);
    }

    #[test]
    fn parse_errors_have_line_numbers() {
        let err = read_table("x,y\n1,2\n3,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_table("x,y\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(matches!(
            read_table("x,y\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
        assert!(read_training("y\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn round_trip() {
        let rows = DMatrix::from_row_slice(2, 2, &[0.1, -2.5, 1e-300, 7.0]);
        let header = coordinate_names(2);
        let mut buf = Vec::new();
        write_table(&mut buf, &header, &rows).unwrap();
        let t = read_table(buf.as_slice()).unwrap();
        assert_eq!(t.header, header);
        assert_eq!(t.rows, rows);
    }
}
