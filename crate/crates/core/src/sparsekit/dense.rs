//! Small dense symmetric factorizations used for Block Jacobi blocks and the
//! coarsest multigrid level.

use super::SparseError;

/// `A = L D L^T` with unit lower-triangular `L`, stored row-major.
///
/// In semidefinite mode, pivots below `rel_tol * max|diag(A)|` are treated as
/// exact zeros; the corresponding solution components are set to zero, which
/// keeps the solve operator symmetric (`L^-T D^+ L^-1`).
#[derive(Debug, Clone)]
pub struct DenseLdl {
    n: usize,
    l: Vec<f64>,
    d: Vec<f64>,
    dropped: usize,
}

impl DenseLdl {
    /// Factorization of a symmetric positive definite matrix; fails on the
    /// first non-positive pivot.
    pub fn factor_spd(a: &[f64], n: usize) -> Result<Self, SparseError> {
        Self::factor(a, n, None)
    }

    pub fn factor_semidefinite(a: &[f64], n: usize, rel_tol: f64) -> Result<Self, SparseError> {
        Self::factor(a, n, Some(rel_tol))
    }

    fn factor(a: &[f64], n: usize, drop_tol: Option<f64>) -> Result<Self, SparseError> {
        assert_eq!(a.len(), n * n, "dense buffer size");
        let scale = (0..n).fold(0.0f64, |m, i| m.max(a[i * n + i].abs()));
        let mut l = vec![0.0; n * n];
        let mut d = vec![0.0; n];
        let mut dropped = 0;
        // work[k] = l_jk * d_k for the current column j
        let mut work = vec![0.0; n];
        for j in 0..n {
            let lj = &l[j * n..j * n + j];
            let mut djj = a[j * n + j];
            for k in 0..j {
                work[k] = lj[k] * d[k];
                djj -= lj[k] * work[k];
            }
            l[j * n + j] = 1.0;
            let dead = match drop_tol {
                Some(tol) => djj <= tol * scale,
                None => {
                    if djj <= 0.0 || !djj.is_finite() {
                        return Err(SparseError::NotPositiveDefinite { pivot: j, value: djj });
                    }
                    false
                }
            };
            if dead {
                d[j] = 0.0;
                dropped += 1;
                continue;
            }
            d[j] = djj;
            for i in j + 1..n {
                let row = i * n;
                let mut s = a[row + j];
                for k in 0..j {
                    s -= l[row + k] * work[k];
                }
                l[row + j] = s / djj;
            }
        }
        Ok(Self { n, l, d, dropped })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of pivots treated as zero.
    pub fn dropped_pivots(&self) -> usize {
        self.dropped
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = b[i];
            for (k, lik) in row.iter().enumerate() {
                s -= lik * b[k];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] = if self.d[i] == 0.0 { 0.0 } else { b[i] / self.d[i] };
        }
        for i in (0..n).rev() {
            let bi = b[i];
            if bi != 0.0 {
                let row = &self.l[i * n..i * n + i];
                for (k, lik) in row.iter().enumerate() {
                    b[k] -= lik * bi;
                }
            }
        }
    }
}
