use rayon::prelude::*;

use super::SparseError;

/// Rows above this count are processed with rayon in `spmv`. Each output
/// entry is still produced by the same sequential loop, so the result is
/// bit-identical to the serial path.
const PAR_ROWS: usize = 4096;

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating the structure.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<f64>,
    ) -> Result<Self, SparseError> {
        if row_ptr.len() != n_rows + 1 {
            return Err(SparseError::InvalidStructure(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                n_rows + 1
            )));
        }
        if row_ptr[0] != 0 {
            return Err(SparseError::InvalidStructure("row_ptr[0] must be 0".into()));
        }
        if row_ptr[n_rows] != col_idx.len() || col_idx.len() != vals.len() {
            return Err(SparseError::InvalidStructure(format!(
                "row_ptr[n_rows] = {}, col_idx has {} entries, vals has {}",
                row_ptr[n_rows],
                col_idx.len(),
                vals.len()
            )));
        }
        for i in 0..n_rows {
            let (s, e) = (row_ptr[i], row_ptr[i + 1]);
            if e < s {
                return Err(SparseError::InvalidStructure(format!("row_ptr decreases at row {i}")));
            }
            let cols = &col_idx[s..e];
            for (k, &c) in cols.iter().enumerate() {
                if c >= n_cols {
                    return Err(SparseError::InvalidStructure(format!(
                        "column {c} out of range in row {i}"
                    )));
                }
                if k > 0 && cols[k - 1] >= c {
                    return Err(SparseError::InvalidStructure(format!(
                        "columns not strictly increasing in row {i}"
                    )));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed
    /// in input order.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, SparseError> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(SparseError::InvalidStructure(format!(
                    "triplet ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..n_rows {
            let (s, e) = (counts[i], counts[i + 1]);
            order.clear();
            order.extend(s..e);
            // stable sort keeps the summation order of duplicates deterministic
            order.sort_by_key(|&k| cols[k]);
            for &k in &order {
                let c = cols[k];
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *out_vals.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(c);
                    out_vals.push(vals[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            vals: out_vals,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: d.to_vec(),
        }
    }

    /// Dense row-major input; exact zeros are not stored.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), n_rows * n_cols, "dense buffer size");
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n_rows {
            for j in 0..n_cols {
                let v = dense[i * n_cols + j];
                if v != 0.0 {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[i * self.n_cols + j] = v;
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn vals_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.vals[s..e])
    }

    /// Position of `(i, j)` inside the value array, if stored.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[s..e].binary_search(&j).ok().map(|k| s + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) -> Result<(), SparseError> {
        if x.len() != self.n_cols {
            return Err(SparseError::DimensionMismatch {
                op: "spmv input",
                expected: self.n_cols,
                found: x.len(),
            });
        }
        if y.len() != self.n_rows {
            return Err(SparseError::DimensionMismatch {
                op: "spmv output",
                expected: self.n_rows,
                found: y.len(),
            });
        }
        self.apply_into(x, y);
        Ok(())
    }

    /// Allocating variant of [`spmv`](Self::spmv).
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv(x, &mut y)?;
        Ok(y)
    }

    /// Unchecked `y = A x`; callers guarantee dimensions.
    pub(crate) fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        let row = |i: usize| -> f64 {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = 0.0;
            for k in s..e {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            acc
        };
        if self.n_rows >= PAR_ROWS {
            y.par_chunks_mut(1024).enumerate().for_each(|(c, chunk)| {
                let base = c * 1024;
                for (k, yi) in chunk.iter_mut().enumerate() {
                    *yi = row(base + k);
                }
            });
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        }
    }

    /// `r = b - A x`, unchecked.
    pub(crate) fn residual_into(&self, b: &[f64], x: &[f64], r: &mut [f64]) {
        self.apply_into(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vs) = self.row(i);
            for (&c, &v) in cols.iter().zip(vs) {
                col_idx[next[c]] = i;
                vals[next[c]] = v;
                next[c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr: counts,
            col_idx,
            vals,
        }
    }

    /// Sparse product `self * other` (row-by-row Gustavson accumulation).
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix, SparseError> {
        if self.n_cols != other.n_rows {
            return Err(SparseError::DimensionMismatch {
                op: "matmul",
                expected: self.n_cols,
                found: other.n_rows,
            });
        }
        let m = other.n_cols;
        let mut acc = vec![0.0; m];
        let mut mark = vec![usize::MAX; m];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..self.n_rows {
            touched.clear();
            let (acols, avals) = self.row(i);
            for (&k, &aik) in acols.iter().zip(avals) {
                let (bcols, bvals) = other.row(k);
                for (&j, &bkj) in bcols.iter().zip(bvals) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += aik * bkj;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                vals.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            n_rows: self.n_rows,
            n_cols: m,
            row_ptr,
            col_idx,
            vals,
        })
    }

    /// `alpha * self + beta * other` over the union sparsity pattern.
    pub fn lin_comb(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<Self, SparseError> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(SparseError::DimensionMismatch {
                op: "lin_comb",
                expected: self.n_rows * self.n_cols,
                found: other.n_rows * other.n_cols,
            });
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut vals = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_ptr.push(0);
        for i in 0..self.n_rows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                let take_a = q >= bc.len() || (p < ac.len() && ac[p] < bc[q]);
                let take_b = p >= ac.len() || (q < bc.len() && bc[q] < ac[p]);
                if take_a {
                    col_idx.push(ac[p]);
                    vals.push(alpha * av[p]);
                    p += 1;
                } else if take_b {
                    col_idx.push(bc[q]);
                    vals.push(beta * bv[q]);
                    q += 1;
                } else {
                    col_idx.push(ac[p]);
                    vals.push(alpha * av[p] + beta * bv[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    /// `self + diag(d)`.
    pub fn add_diagonal(&self, d: &[f64]) -> Result<Self, SparseError> {
        if d.len() != self.n_rows || self.n_rows != self.n_cols {
            return Err(SparseError::DimensionMismatch {
                op: "add_diagonal",
                expected: self.n_rows,
                found: d.len(),
            });
        }
        self.lin_comb(1.0, &CsrMatrix::from_diagonal(d), 1.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Largest `|a_ij - a_ji|` over the stored pattern of both triangles.
    pub fn symmetry_defect(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        match self.lin_comb(1.0, &t, -1.0) {
            Ok(d) => d.max_abs(),
            Err(_) => f64::INFINITY,
        }
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Result<Self, SparseError> {
        self.lin_comb(0.5, &self.transpose(), 0.5)
    }

    /// Removes explicitly stored zeros.
    pub fn pruned(&self) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if x != 0.0 {
                    col_idx.push(j);
                    vals.push(x);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Principal submatrix on the contiguous index range `[start, end)` as a
    /// dense row-major buffer.
    pub fn dense_block(&self, start: usize, end: usize) -> Vec<f64> {
        let m = end - start;
        let mut out = vec![0.0; m * m];
        for i in start..end {
            let (cols, vals) = self.row(i);
            let lo = cols.partition_point(|&c| c < start);
            for k in lo..cols.len() {
                let c = cols[k];
                if c >= end {
                    break;
                }
                out[(i - start) * m + (c - start)] = vals[k];
            }
        }
        out
    }
}
