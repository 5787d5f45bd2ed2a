use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::vector::{axpy, dot, norm2, remove_mean};
use super::{CsrMatrix, Preconditioner, SparseError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    pub rtol: f64,
    /// Absolute floor on the residual norm.
    pub atol: f64,
    pub maxit: usize,
    /// Solve on the complement of the constant vector (singular Neumann
    /// systems). The right-hand side, every search direction and the result
    /// are projected.
    pub deflate_constants: bool,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-5,
            atol: 1e-50,
            maxit: 10_000,
            deflate_constants: false,
        }
    }
}

impl PcgOptions {
    pub fn deflated(mut self) -> Self {
        self.deflate_constants = true;
        self
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_relative_residual: f64,
    /// `||r_k||_2` for k = 0..=iterations.
    pub residual_history: Vec<f64>,
    /// Seconds.
    pub wall_time: f64,
    pub converged: bool,
}

impl SolveStats {
    pub fn trivial() -> Self {
        Self {
            iterations: 0,
            final_relative_residual: 0.0,
            residual_history: vec![0.0],
            wall_time: 0.0,
            converged: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub stats: SolveStats,
}

/// Preconditioned conjugate gradients.
///
/// Hitting `maxit` is not an error: the outcome carries `converged = false`.
/// A non-positive curvature `p^T A p` or `r^T z` is reported as
/// [`SparseError::Breakdown`].
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    precond: &dyn Preconditioner,
    x0: Option<&[f64]>,
    opts: &PcgOptions,
) -> Result<PcgOutcome, SparseError> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(SparseError::DimensionMismatch {
            op: "pcg matrix",
            expected: n,
            found: a.n_cols(),
        });
    }
    if b.len() != n {
        return Err(SparseError::DimensionMismatch {
            op: "pcg rhs",
            expected: n,
            found: b.len(),
        });
    }
    let start = Instant::now();
    let deflate = opts.deflate_constants;
    let mut rhs = b.to_vec();
    if deflate {
        remove_mean(&mut rhs);
    }
    let mut x = match x0 {
        Some(g) => {
            if g.len() != n {
                return Err(SparseError::DimensionMismatch {
                    op: "pcg initial guess",
                    expected: n,
                    found: g.len(),
                });
            }
            g.to_vec()
        }
        None => vec![0.0; n],
    };
    if deflate {
        remove_mean(&mut x);
    }
    let b_norm = norm2(&rhs);
    let mut r = vec![0.0; n];
    a.residual_into(&rhs, &x, &mut r);
    if deflate {
        remove_mean(&mut r);
    }
    let mut r_norm = norm2(&r);
    let mut history = vec![r_norm];
    let target = (opts.rtol * b_norm).max(opts.atol);
    let rel = |rn: f64| if b_norm > 0.0 { rn / b_norm } else { rn };

    if r_norm <= target || b_norm == 0.0 {
        if b_norm == 0.0 {
            // zero right-hand side: the zero vector is the minimum-norm solution
            x.iter_mut().for_each(|v| *v = 0.0);
            history[0] = 0.0;
            r_norm = 0.0;
        }
        return Ok(PcgOutcome {
            x,
            stats: SolveStats {
                iterations: 0,
                final_relative_residual: rel(r_norm),
                residual_history: history,
                wall_time: start.elapsed().as_secs_f64(),
                converged: true,
            },
        });
    }

    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    if deflate {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.maxit {
        if !(rz > 0.0) {
            return Err(SparseError::Breakdown {
                iteration: iterations,
                quantity: "r^T z",
                value: rz,
            });
        }
        a.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SparseError::Breakdown {
                iteration: iterations,
                quantity: "p^T A p",
                value: pap,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if deflate {
            remove_mean(&mut r);
        }
        iterations += 1;
        r_norm = norm2(&r);
        history.push(r_norm);
        if r_norm <= target {
            converged = true;
            break;
        }
        precond.apply(&r, &mut z);
        if deflate {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        if deflate {
            remove_mean(&mut p);
        }
    }
    if deflate {
        remove_mean(&mut x);
    }
    Ok(PcgOutcome {
        x,
        stats: SolveStats {
            iterations,
            final_relative_residual: rel(r_norm),
            residual_history: history,
            wall_time: start.elapsed().as_secs_f64(),
            converged,
        },
    })
}
