//! Matrix Market `coordinate complex general` reading and writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{LabError, Result};
use crate::linalg::{CMatrix, C64};

const HEADER: &str = "%%MatrixMarket matrix coordinate complex general";

/// Writes every entry, 1-based, with 17 significant digits.
pub fn write_matrix<W: Write>(m: &CMatrix, mut out: W) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), m.nrows() * m.ncols())?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            writeln!(out, "{} {} {:.16e} {:.16e}", i + 1, j + 1, v.re, v.im)?;
        }
    }
    Ok(())
}

pub fn to_string(m: &CMatrix) -> String {
    let mut buf = Vec::new();
    write_matrix(m, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn write_file(path: &Path, m: &CMatrix) -> Result<()> {
    fs::write(path, to_string(m))?;
    Ok(())
}

fn malformed(msg: impl Into<String>) -> LabError {
    LabError::MatrixMarket(format!("malformed header: {}", msg.into()))
}

pub fn parse(text: &str) -> Result<CMatrix> {
    let mut lines = text.lines();
    let banner = lines.next().ok_or_else(|| malformed("empty file"))?;
    let words: Vec<String> = banner.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" || words[2] != "coordinate" {
        return Err(malformed(banner));
    }
    if words[3] != "complex" || words[4] != "general" {
        return Err(malformed(format!("unsupported field/symmetry {} {}", words[3], words[4])));
    }
    let mut body = lines.filter(|l| !l.trim_start().starts_with('%') && !l.trim().is_empty());
    let size = body.next().ok_or_else(|| malformed("missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| w.parse::<usize>().map_err(|_| malformed(size)))
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(malformed(size));
    };
    let mut m = CMatrix::zeros(rows, cols);
    let mut seen = 0;
    for line in body {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(LabError::MatrixMarket(format!("bad entry line: {line}")));
        }
        let bad = || LabError::MatrixMarket(format!("bad entry line: {line}"));
        let i: usize = f[0].parse().map_err(|_| bad())?;
        let j: usize = f[1].parse().map_err(|_| bad())?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(LabError::MatrixMarket(format!("entry ({i}, {j}) outside {rows}x{cols}")));
        }
        let re: f64 = f[2].parse().map_err(|_| bad())?;
        let im: f64 = f[3].parse().map_err(|_| bad())?;
        m[(i - 1, j - 1)] = C64::new(re, im);
        seen += 1;
    }
    if seen != nnz {
        return Err(LabError::MatrixMarket(format!("expected {nnz} entries, found {seen}")));
    }
    Ok(m)
}

pub fn read_file(path: &Path) -> Result<CMatrix> {
    parse(&fs::read_to_string(path)?)
}

/// Reads a matrix and checks it is `n × n`.
pub fn read_square(path: &Path, n: usize) -> Result<CMatrix> {
    let m = read_file(path)?;
    if m.nrows() != n || m.ncols() != n {
        return Err(LabError::DimensionMismatch { expected: n, found: if m.nrows() != n { m.nrows() } else { m.ncols() } });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, random_gaussian_matrix, CVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_round_trip() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(2.0, 3.0)]));
        let back = parse(&to_string(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn empty_file_is_malformed() {
        let err = parse("").unwrap_err().to_string();
        assert!(err.contains("malformed header"), "{err}");
        assert!(parse("%%MatrixMarket matrix array real general\n1 1\n1\n").is_err());
    }

    #[test]
    fn random_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let m = random_gaussian_matrix(200, &mut rng);
        let back = parse(&to_string(&m)).unwrap();
        let worst = m
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).norm() / a.norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        assert!(worst < 1e-15, "{worst}");
    }

    #[test]
    fn entry_count_and_bounds_are_checked() {
        let short = format!("{HEADER}\n2 2 2\n1 1 1.0 0.0\n");
        assert!(parse(&short).is_err());
        let outside = format!("{HEADER}\n2 2 1\n3 1 1.0 0.0\n");
        assert!(parse(&outside).is_err());
    }

    #[test]
    fn square_reader_checks_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        write_file(&path, &CMatrix::zeros(3, 3)).unwrap();
        assert!(read_square(&path, 3).is_ok());
        assert!(matches!(read_square(&path, 4), Err(LabError::DimensionMismatch { .. })));
    }
}
