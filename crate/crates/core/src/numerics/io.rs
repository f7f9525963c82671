//! Plain-text matrix format: a `rows,cols` header line followed by one
//! comma-separated row per line, every entry printed with 17 significant
//! digits so values round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Matrix, Vector};
use crate::error::{Error, Result};

pub fn write_matrix(m: &Matrix) -> String {
    let mut out = format!("{},{}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format_entry(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// A vector is stored as an n×1 matrix.
pub fn write_vector(v: &[f64]) -> String {
    let mut out = format!("{},1\n", v.len());
    for x in v {
        let _ = writeln!(out, "{}", format_entry(*x));
    }
    out
}

fn format_entry(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses a single matrix block from the front of `lines`, leaving the rest.
pub fn parse_matrix_block<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Matrix> {
    let header = lines
        .by_ref()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| Error::Parse("missing `rows,cols` header".into()))?;
    let (r, c) = header
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?;
    let rows: usize = r.trim().parse().map_err(|_| Error::Parse(format!("bad row count `{r}`")))?;
    let cols: usize = c.trim().parse().map_err(|_| Error::Parse(format!("bad column count `{c}`")))?;
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {rows} rows, found {i}")))?;
        let before = data.len();
        for tok in line.trim().split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{tok}` on row {i}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Parse(format!(
                "row {i} has {} entries, expected {cols}",
                data.len() - before
            )));
        }
    }
    Matrix::new(rows, cols, data)
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    parse_matrix_block(&mut text.lines())
}

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, write_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text)
}

pub fn save_vector(path: &Path, v: &[f64]) -> Result<()> {
    fs::write(path, write_vector(v)).map_err(|e| Error::io(path, e))
}

/// Accepts either an n×1 or a 1×n block.
pub fn load_vector(path: &Path) -> Result<Vector> {
    let m = load_matrix(path)?;
    if m.cols() == 1 || m.rows() == 1 {
        Ok(Vector::from(m.data().to_vec()))
    } else {
        Err(Error::Parse(format!(
            "{} holds a {}x{} matrix, expected a vector",
            path.display(),
            m.rows(),
            m.cols()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_digits() {
        let m = Matrix::new(1, 2, vec![0.1, -2.0]).unwrap();
        assert_eq!(write_matrix(&m), "1,2\n1.0000000000000001e-1,-2.0000000000000000e0\n");
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2,2\n1,2\n").is_err());
        assert!(parse_matrix("1,2\n1,2,3\n").is_err());
        assert!(parse_matrix("1,1\nabc\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(r in 1usize..5, c in 1usize..5, seed in any::<u64>()) {
            let mut s = crate::numerics::RandomStream::new(seed, 0);
            let m = Matrix::from_fn(r, c, |_, _| s.standard_normal() * 1e3);
            prop_assert_eq!(parse_matrix(&write_matrix(&m)).unwrap(), m);
        }
    }
}
