use super::{dense::DenseLdl, CsrMatrix, SparseError};

/// A fixed linear operator approximating `A^{-1}`.
pub trait Preconditioner: Send + Sync {
    /// `z = M^{-1} r`; `z` is fully overwritten.
    fn apply(&self, r: &[f64], z: &mut [f64]);

    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }

    fn describe(&self) -> String {
        "identity".into()
    }
}

/// Diagonal scaling.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Result<Self, SparseError> {
        let inv_diag = a
            .diagonal()
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                if d > 0.0 {
                    Ok(1.0 / d)
                } else {
                    Err(SparseError::NonPositiveDiagonal { row: i, value: d })
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { inv_diag })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }

    fn describe(&self) -> String {
        "jacobi".into()
    }
}

/// Block Jacobi over contiguous row ranges with exact dense block solves.
#[derive(Debug, Clone)]
pub struct BlockJacobi {
    ranges: Vec<(usize, usize)>,
    factors: Vec<DenseLdl>,
}

/// Contiguous partition of `0..n` into `n_blocks` ranges whose sizes differ by
/// at most one.
pub fn block_ranges(n: usize, n_blocks: usize) -> Vec<(usize, usize)> {
    let n_blocks = n_blocks.clamp(1, n.max(1));
    let base = n / n_blocks;
    let extra = n % n_blocks;
    let mut out = Vec::with_capacity(n_blocks);
    let mut start = 0;
    for b in 0..n_blocks {
        let len = base + usize::from(b < extra);
        out.push((start, start + len));
        start += len;
    }
    out
}

impl BlockJacobi {
    pub fn new(a: &CsrMatrix, n_blocks: usize) -> Result<Self, SparseError> {
        if n_blocks == 0 {
            return Err(SparseError::InvalidArgument("n_blocks must be >= 1".into()));
        }
        if a.n_rows() != a.n_cols() {
            return Err(SparseError::DimensionMismatch {
                op: "block jacobi",
                expected: a.n_rows(),
                found: a.n_cols(),
            });
        }
        let ranges = block_ranges(a.n_rows(), n_blocks);
        let factors = ranges
            .iter()
            .enumerate()
            .map(|(b, &(s, e))| {
                DenseLdl::factor_spd(&a.dense_block(s, e), e - s).map_err(|err| match err {
                    SparseError::NotPositiveDefinite { pivot, value } => SparseError::SingularBlock {
                        block: b,
                        row: s + pivot,
                        pivot: value,
                    },
                    other => other,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { ranges, factors })
    }

    pub fn n_blocks(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }
}

impl Preconditioner for BlockJacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        for (&(s, e), f) in self.ranges.iter().zip(&self.factors) {
            f.solve_in_place(&mut z[s..e]);
        }
    }

    fn describe(&self) -> String {
        format!("block-jacobi({} blocks)", self.ranges.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_balanced() {
        let r = block_ranges(10, 3);
        assert_eq!(r, vec![(0, 4), (4, 7), (7, 10)]);
        assert_eq!(block_ranges(4, 9).len(), 4);
    }

    #[test]
    fn one_block_per_row_is_jacobi() {
        let a = CsrMatrix::from_dense(3, 3, &[2.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 5.0]);
        let bj = BlockJacobi::new(&a, 3).unwrap();
        let j = Jacobi::new(&a).unwrap();
        let r = [1.0, 2.0, 3.0];
        let (mut z1, mut z2) = ([0.0; 3], [0.0; 3]);
        bj.apply(&r, &mut z1);
        j.apply(&r, &mut z2);
        for (p, q) in z1.iter().zip(&z2) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn singular_block_is_named() {
        let a = CsrMatrix::from_dense(
            4,
            4,
            &[
                2.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 1.0, //
                0.0, 0.0, 1.0, 1.0,
            ],
        );
        match BlockJacobi::new(&a, 2) {
            Err(SparseError::SingularBlock { block, .. }) => assert_eq!(block, 1),
            other => panic!("expected singular block, got {other:?}"),
        }
    }
}
