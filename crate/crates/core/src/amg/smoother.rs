use serde::{Deserialize, Serialize};

use crate::sparsekit::CsrMatrix;

use super::eig::estimate_lambda_max;
use super::AmgError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmootherKind {
    Jacobi {
        omega: f64,
    },
    SymmetricGaussSeidel,
    /// Jacobi-preconditioned Chebyshev on `[lo_frac λ̂, hi_frac λ̂]`.
    Chebyshev {
        degree: usize,
        lo_frac: f64,
        hi_frac: f64,
        esteig_iters: usize,
    },
}

impl SmootherKind {
    pub fn chebyshev_default() -> Self {
        SmootherKind::Chebyshev {
            degree: 2,
            lo_frac: 0.05,
            hi_frac: 1.05,
            esteig_iters: 10,
        }
    }

    pub fn validate(&self) -> Result<(), AmgError> {
        match *self {
            SmootherKind::Jacobi { omega } if !(omega > 0.0 && omega < 2.0) => {
                Err(AmgError::InvalidConfig(format!("jacobi omega {omega} outside (0, 2)")))
            }
            SmootherKind::Chebyshev {
                degree,
                lo_frac,
                hi_frac,
                esteig_iters,
            } => {
                if degree == 0 {
                    return Err(AmgError::InvalidConfig("chebyshev degree must be >= 1".into()));
                }
                if !(lo_frac > 0.0 && lo_frac < hi_frac) {
                    return Err(AmgError::InvalidConfig(format!(
                        "chebyshev interval [{lo_frac}, {hi_frac}] is empty"
                    )));
                }
                if esteig_iters == 0 {
                    return Err(AmgError::InvalidConfig("esteig_iters must be >= 1".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// A smoother bound to one operator.
#[derive(Debug, Clone)]
pub struct Smoother {
    kind: SmootherKind,
    inv_diag: Vec<f64>,
    interval: Option<(f64, f64)>,
}

impl Smoother {
    pub fn new(kind: SmootherKind, a: &CsrMatrix) -> Result<Self, AmgError> {
        kind.validate()?;
        let mut inv_diag = Vec::with_capacity(a.n_rows());
        for (i, d) in a.diagonal().into_iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(AmgError::NonPositiveDiagonal { row: i, value: d });
            }
            inv_diag.push(1.0 / d);
        }
        let interval = match kind {
            SmootherKind::Chebyshev {
                lo_frac,
                hi_frac,
                esteig_iters,
                ..
            } => {
                let lam = estimate_lambda_max(a, &inv_diag, esteig_iters)?;
                Some((lo_frac * lam, hi_frac * lam))
            }
            _ => None,
        };
        Ok(Self {
            kind,
            inv_diag,
            interval,
        })
    }

    pub fn kind(&self) -> SmootherKind {
        self.kind
    }

    /// Chebyshev target interval, if any.
    pub fn interval(&self) -> Option<(f64, f64)> {
        self.interval
    }

    /// Runs `steps` smoothing steps on `A x = b`, updating `x` in place.
    pub fn apply(&self, a: &CsrMatrix, b: &[f64], x: &mut [f64], steps: usize) {
        let n = x.len();
        let mut r = vec![0.0; n];
        for _ in 0..steps {
            match self.kind {
                SmootherKind::Jacobi { omega } => {
                    a.residual_into(b, x, &mut r);
                    for i in 0..n {
                        x[i] += omega * self.inv_diag[i] * r[i];
                    }
                }
                SmootherKind::SymmetricGaussSeidel => {
                    self.gs_sweep(a, b, x, 0..n);
                    self.gs_sweep(a, b, x, (0..n).rev());
                }
                SmootherKind::Chebyshev { degree, .. } => {
                    let (lo, hi) = self.interval.expect("chebyshev interval");
                    self.chebyshev(a, b, x, degree, lo, hi, &mut r);
                }
            }
        }
    }

    fn gs_sweep(&self, a: &CsrMatrix, b: &[f64], x: &mut [f64], order: impl Iterator<Item = usize>) {
        for i in order {
            let (cols, vals) = a.row(i);
            let mut s = b[i];
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    s -= v * x[j];
                }
            }
            x[i] = s * self.inv_diag[i];
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn chebyshev(&self, a: &CsrMatrix, b: &[f64], x: &mut [f64], degree: usize, lo: f64, hi: f64, r: &mut [f64]) {
        let n = x.len();
        let theta = 0.5 * (hi + lo);
        let delta = 0.5 * (hi - lo);
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let mut d = vec![0.0; n];
        a.residual_into(b, x, r);
        for i in 0..n {
            d[i] = self.inv_diag[i] * r[i] / theta;
            x[i] += d[i];
        }
        for _ in 1..degree {
            a.residual_into(b, x, r);
            let rho_new = 1.0 / (2.0 * sigma - rho);
            let c1 = rho_new * rho;
            let c2 = 2.0 * rho_new / delta;
            for i in 0..n {
                d[i] = c1 * d[i] + c2 * self.inv_diag[i] * r[i];
                x[i] += d[i];
            }
            rho = rho_new;
        }
    }
}

/// One-shot smoothing of `A x = b` from `x0`.
pub fn smoother_apply(
    kind: SmootherKind,
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    steps: usize,
) -> Result<Vec<f64>, AmgError> {
    if b.len() != a.n_rows() || x0.len() != a.n_rows() {
        return Err(AmgError::Sparse(crate::sparsekit::SparseError::DimensionMismatch {
            op: "smoother",
            expected: a.n_rows(),
            found: b.len().min(x0.len()),
        }));
    }
    let s = Smoother::new(kind, a)?;
    let mut x = x0.to_vec();
    s.apply(a, b, &mut x, steps);
    Ok(x)
}
