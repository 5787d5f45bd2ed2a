//! Classical C/F splitting with a strength-of-connection threshold and
//! direct interpolation.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use crate::sparsekit::CsrMatrix;

use super::AmgError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfSplit {
    pub kinds: Vec<PointKind>,
    /// Coarse index for C points, in ascending fine order.
    pub coarse_index: Vec<Option<usize>>,
    pub n_coarse: usize,
    /// Fraction of stored off-diagonal entries that are positive.
    pub positive_offdiag_fraction: f64,
}

/// `S_i = { j != i : |a_ij| >= alpha * max_{k != i} |a_ik| }`, ascending.
pub fn strong_connections(a: &CsrMatrix, alpha: f64) -> Vec<Vec<usize>> {
    (0..a.n_rows())
        .map(|i| {
            let (cols, vals) = a.row(i);
            let max = cols
                .iter()
                .zip(vals)
                .filter(|(&j, _)| j != i)
                .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
            if max == 0.0 {
                return Vec::new();
            }
            cols.iter()
                .zip(vals)
                .filter(|(&j, &v)| j != i && v != 0.0 && v.abs() >= alpha * max)
                .map(|(&j, _)| j)
                .collect()
        })
        .collect()
}

fn transpose_lists(s: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut st = vec![Vec::new(); s.len()];
    for (i, row) in s.iter().enumerate() {
        for &j in row {
            st[j].push(i);
        }
    }
    st
}

/// Ruge–Stüben style splitting followed by direct interpolation from strong
/// C neighbors. Returns the split and the prolongator.
pub fn strong_coarsen(a: &CsrMatrix, alpha: f64) -> Result<(CfSplit, CsrMatrix), AmgError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AmgError::InvalidConfig(format!(
            "strong threshold {alpha} outside [0, 1]"
        )));
    }
    let n = a.n_rows();
    let s = strong_connections(a, alpha);
    let st = transpose_lists(&s);

    let mut kind: Vec<Option<PointKind>> = vec![None; n];
    let mut lambda: Vec<usize> = st.iter().map(Vec::len).collect();
    let mut queue: BTreeSet<(Reverse<usize>, usize)> = (0..n).map(|i| (Reverse(lambda[i]), i)).collect();

    while let Some((_, j)) = queue.pop_first() {
        kind[j] = Some(PointKind::Coarse);
        for &i in &st[j] {
            if kind[i].is_some() {
                continue;
            }
            kind[i] = Some(PointKind::Fine);
            queue.remove(&(Reverse(lambda[i]), i));
            for &k in &s[i] {
                if kind[k].is_none() {
                    queue.remove(&(Reverse(lambda[k]), k));
                    lambda[k] += 1;
                    queue.insert((Reverse(lambda[k]), k));
                }
            }
        }
        for &k in &s[j] {
            if kind[k].is_none() && lambda[k] > 0 {
                queue.remove(&(Reverse(lambda[k]), k));
                lambda[k] -= 1;
                queue.insert((Reverse(lambda[k]), k));
            }
        }
    }
    let mut kinds: Vec<PointKind> = kind.into_iter().map(|k| k.unwrap_or(PointKind::Coarse)).collect();
    // F points with no strong C neighbor cannot interpolate
    for i in 0..n {
        if kinds[i] == PointKind::Fine && !s[i].iter().any(|&j| kinds[j] == PointKind::Coarse) {
            kinds[i] = PointKind::Coarse;
        }
    }

    let mut coarse_index = vec![None; n];
    let mut n_coarse = 0;
    for i in 0..n {
        if kinds[i] == PointKind::Coarse {
            coarse_index[i] = Some(n_coarse);
            n_coarse += 1;
        }
    }

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for i in 0..n {
        if let Some(c) = coarse_index[i] {
            col_idx.push(c);
            vals.push(1.0);
        } else {
            let mut entries: Vec<(usize, f64)> = s[i]
                .iter()
                .filter_map(|&j| coarse_index[j].map(|c| (c, a.get(i, j).abs())))
                .collect();
            let total: f64 = entries.iter().map(|e| e.1).sum();
            entries.sort_by_key(|e| e.0);
            for (c, w) in entries {
                col_idx.push(c);
                vals.push(w / total);
            }
        }
        row_ptr.push(col_idx.len());
    }
    let p = CsrMatrix::new(n, n_coarse, row_ptr, col_idx, vals).map_err(AmgError::Sparse)?;

    let (mut pos, mut off) = (0usize, 0usize);
    for i in 0..n {
        let (cols, v) = a.row(i);
        for (&j, &x) in cols.iter().zip(v) {
            if j != i && x != 0.0 {
                off += 1;
                if x > 0.0 {
                    pos += 1;
                }
            }
        }
    }
    let split = CfSplit {
        kinds,
        coarse_index,
        n_coarse,
        positive_offdiag_fraction: if off == 0 { 0.0 } else { pos as f64 / off as f64 },
    };
    Ok((split, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amg::graph::tests_support::tridiag;

    #[test]
    fn five_point_line() {
        let (split, p) = strong_coarsen(&tridiag(5), 0.5).unwrap();
        let c: Vec<usize> = (0..5).filter(|&i| split.kinds[i] == PointKind::Coarse).collect();
        assert_eq!(c, vec![1, 3]);
        let dense = p.to_dense();
        let expect = [1.0, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0, 0.0, 1.0];
        assert_eq!(dense, expect);
    }

    #[test]
    fn rows_of_p_sum_to_one() {
        let (_, p) = strong_coarsen(&tridiag(30), 0.25).unwrap();
        for s in p.row_sums() {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn tiny_alpha_marks_every_coupling_strong() {
        let a = CsrMatrix::from_dense(3, 3, &[4.0, -1.0, -0.001, -1.0, 4.0, -1.0, -0.001, -1.0, 4.0]);
        let s = strong_connections(&a, 1e-9);
        assert_eq!(s[0], vec![1, 2]);
        let s = strong_connections(&a, 0.5);
        assert_eq!(s[0], vec![1]);
    }

    #[test]
    fn decoupled_rows_become_coarse() {
        let (split, p) = strong_coarsen(&CsrMatrix::identity(4), 0.5).unwrap();
        assert_eq!(split.n_coarse, 4);
        assert_eq!(p, CsrMatrix::identity(4));
    }

    #[test]
    fn detects_positive_couplings() {
        let a = CsrMatrix::from_dense(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (split, _) = strong_coarsen(&a, 0.5).unwrap();
        assert_eq!(split.positive_offdiag_fraction, 1.0);
    }
}
