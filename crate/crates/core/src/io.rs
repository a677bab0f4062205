//! Matrix file formats.
//!
//! Sparse matrices use the MatrixMarket coordinate format (1-based indices,
//! `%%MatrixMarket matrix coordinate real general` header). Dense matrices
//! use a plain text format: a `rows cols` header line followed by row-major
//! values. Values are written in shortest round-trip form, so a write
//! followed by a read reproduces every f64 bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, SparseMatrix};

const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn write_sparse(path: impl AsRef<Path>, m: &SparseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MM_HEADER}")?;
    writeln!(w, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for (r, c, v) in m.iter() {
        writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sparse(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (lineno, first) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))
        .and_then(|(i, l)| Ok((i + 1, l?)))?;
    if first.trim() != MM_HEADER {
        return Err(parse_err(
            lineno,
            format!("expected header '{MM_HEADER}', got '{}'", first.trim()),
        ));
    }

    // Size line, skipping % comments.
    let mut size_line = None;
    for (i, line) in &mut lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        size_line = Some((i + 1, trimmed.to_owned()));
        break;
    }
    let (lineno, size_line) = size_line.ok_or_else(|| parse_err(2, "missing size line"))?;
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(parse_err(lineno, "size line must be 'rows cols nnz'"));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad row count '{}'", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad col count '{}'", dims[1])))?;
    let nnz: usize = dims[2]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad nnz count '{}'", dims[2])))?;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz);
    let mut seen = std::collections::HashSet::with_capacity(nnz);
    for (i, line) in &mut lines {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(lineno, "entry line must be 'i j value'"));
        }
        let r: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad row index '{}'", parts[0])))?;
        let c: usize = parts[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad col index '{}'", parts[1])))?;
        let v: f64 = parts[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad value '{}'", parts[2])))?;
        if r == 0 || c == 0 {
            return Err(parse_err(
                lineno,
                format!("indices are 1-based, got ({r}, {c})"),
            ));
        }
        if r > rows || c > cols {
            return Err(parse_err(
                lineno,
                format!("index ({r}, {c}) out of range for {rows}x{cols}"),
            ));
        }
        if !seen.insert((r, c)) {
            return Err(parse_err(lineno, format!("duplicate coordinate ({r}, {c})")));
        }
        triplets.push((r - 1, c - 1, v));
    }
    if triplets.len() != nnz {
        return Err(parse_err(
            lineno,
            format!("expected {nnz} entries, found {}", triplets.len()),
        ));
    }
    SparseMatrix::from_triplets(rows, cols, triplets)
}

pub fn write_dense(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        let row = m.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                write!(w, " ")?;
            }
            write!(w, "{:e}", v)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))
        .and_then(|(i, l)| Ok((i + 1, l?)))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(lineno, "header must be 'rows cols'"));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad row count '{}'", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad col count '{}'", dims[1])))?;

    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad value '{tok}'")))?;
            data.push(v);
            if data.len() > rows * cols {
                return Err(parse_err(
                    lineno,
                    format!("more than {} values present", rows * cols),
                ));
            }
        }
    }
    if data.len() != rows * cols {
        return Err(parse_err(
            0,
            format!("expected {} values, found {}", rows * cols, data.len()),
        ));
    }
    DenseMatrix::new(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn sparse_identity_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i2.mtx");
        let m = SparseMatrix::identity(2);
        write_sparse(&path, &m).unwrap();
        let back = read_sparse(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn zero_based_index_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mtx");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{MM_HEADER}").unwrap();
        writeln!(f, "2 2 1").unwrap();
        writeln!(f, "0 1 3.5").unwrap();
        let err = read_sparse(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_coordinate_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.mtx");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{MM_HEADER}").unwrap();
        writeln!(f, "3 3 2").unwrap();
        writeln!(f, "1 1 1.0").unwrap();
        writeln!(f, "1 1 2.0").unwrap();
        let err = read_sparse(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hdr.mtx");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "%%MatrixMarket matrix array real general").unwrap();
        let err = read_sparse(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn large_random_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rand.mtx");
        let mut s = RngStream::new(21, "io-roundtrip");
        let mut triplets = Vec::new();
        let mut used = std::collections::HashSet::new();
        while triplets.len() < 1000 {
            let r = s.index(200);
            let c = s.index(150);
            if used.insert((r, c)) {
                // Cauchy-ish magnitudes exercise extreme exponents.
                let v = (std::f64::consts::PI * (s.open_unit() - 0.5)).tan();
                triplets.push((r, c, v));
            }
        }
        let m = SparseMatrix::from_triplets(200, 150, triplets).unwrap();
        write_sparse(&path, &m).unwrap();
        let back = read_sparse(&path).unwrap();
        assert_eq!(m.nnz(), back.nnz());
        assert_eq!(m, back);
    }

    #[test]
    fn dense_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dense.txt");
        let mut s = RngStream::new(22, "io-dense");
        let m = DenseMatrix::from_fn(17, 5, |_, _| s.standard_normal() * 1e-7);
        write_dense(&path, &m).unwrap();
        let back = read_dense(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn dense_bad_token_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "2 2").unwrap();
        writeln!(f, "1.0 2.0").unwrap();
        writeln!(f, "3.0 oops").unwrap();
        let err = read_dense(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
