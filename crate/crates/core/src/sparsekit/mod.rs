//! Sparse linear algebra: CSR storage, vector kernels, PCG with pluggable
//! preconditioners and Block Jacobi.

mod csr;
pub mod dense;
mod mtx;
mod pcg;
mod precond;
pub mod vector;

pub use csr::CsrMatrix;
pub use mtx::{read_matrix_market, write_matrix_market};
pub use pcg::{pcg, PcgOptions, PcgOutcome, SolveStats};
pub use precond::{block_ranges, BlockJacobi, Identity, Jacobi, Preconditioner};

#[derive(Debug, thiserror::Error)]
pub enum SparseError {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-positive diagonal entry {value} in row {row}")]
    NonPositiveDiagonal { row: usize, value: f64 },
    #[error("matrix is not positive definite: pivot {pivot} = {value}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("block {block} is singular (row {row}, pivot {pivot})")]
    SingularBlock { block: usize, row: usize, pivot: f64 },
    #[error("PCG breakdown at iteration {iteration}: {quantity} = {value}")]
    Breakdown {
        iteration: usize,
        quantity: &'static str,
        value: f64,
    },
    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
