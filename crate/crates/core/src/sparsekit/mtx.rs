//! Matrix Market coordinate format (`real`/`integer`, `general`/`symmetric`).

use std::io::{BufRead, Write};

use super::{CsrMatrix, SparseError};

pub fn write_matrix_market<W: Write>(a: &CsrMatrix, mut w: W) -> Result<(), SparseError> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            // `{:e}` of f64 prints the shortest round-trip representation
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CsrMatrix, SparseError> {
    let mut lines = r.lines().enumerate();
    let parse_err = |line: usize, msg: String| SparseError::Parse { line: line + 1, msg };

    let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "empty file".into()))?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(ln, "missing %%MatrixMarket matrix header".into()));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(ln, format!("unsupported format '{}'", tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(ln, format!("unsupported field '{}'", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(ln, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (ln, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(parse_err(ln, "expected 'rows cols nnz'".into()));
                }
                let p = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|e| parse_err(ln, format!("bad size '{s}': {e}")))
                };
                let dims = (p(parts[0])?, p(parts[1])?, p(parts[2])?);
                triplets.reserve(if symmetric { 2 * dims.2 } else { dims.2 });
                size = Some(dims);
            }
            Some((m, n, _)) => {
                if parts.len() != 3 {
                    return Err(parse_err(ln, "expected 'row col value'".into()));
                }
                let i: usize = parts[0]
                    .parse()
                    .map_err(|e| parse_err(ln, format!("bad row index: {e}")))?;
                let j: usize = parts[1]
                    .parse()
                    .map_err(|e| parse_err(ln, format!("bad column index: {e}")))?;
                let v: f64 = parts[2].parse().map_err(|e| parse_err(ln, format!("bad value: {e}")))?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(parse_err(ln, format!("entry ({i}, {j}) outside {m}x{n}")));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (m, n, nnz) = size.ok_or_else(|| parse_err(0, "missing size line".into()))?;
    let stored = if symmetric {
        triplets.iter().filter(|t| t.0 >= t.1).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(parse_err(0, format!("declared {nnz} entries, found {stored}")));
    }
    CsrMatrix::from_triplets(m, n, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let a = CsrMatrix::from_dense(2, 3, &[1.0 / 3.0, 0.0, -2.5e-17, 0.0, 7.0, 1e300]);
        let mut buf = Vec::new();
        write_matrix_market(&a, &mut buf).unwrap();
        let b = read_matrix_market(&buf[..]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_storage_is_expanded() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 2.0\n2 1 -1\n";
        let a = read_matrix_market(text.as_bytes()).unwrap();
        assert_eq!(a.to_dense(), vec![2.0, -1.0, -1.0, 0.0]);
    }

    #[test]
    fn bad_entry_reports_line() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        match read_matrix_market(text.as_bytes()) {
            Err(SparseError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
