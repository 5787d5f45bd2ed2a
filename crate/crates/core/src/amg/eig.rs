use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sparsekit::{vector, CsrMatrix};

use super::AmgError;

const START_SEED: u64 = 0x5eed;

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`, by Sturm-sequence bisection.
pub fn tridiag_max_eig(alpha: &[f64], beta: &[f64]) -> f64 {
    let m = alpha.len();
    assert!(m > 0 && beta.len() + 1 >= m);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let left = if i > 0 { beta[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < m { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - left - right);
        hi = hi.max(alpha[i] + left + right);
    }
    // number of eigenvalues strictly below x
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..m {
            let b2 = if i > 0 { beta[i - 1] * beta[i - 1] } else { 0.0 };
            q = alpha[i] - x - if i > 0 { b2 / q } else { 0.0 };
            if q == 0.0 {
                q = -f64::EPSILON * (x.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) >= m {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Lanczos estimate of `λ_max(D^{-1} A)`, run on the symmetric
/// `D^{-1/2} A D^{-1/2}` from a fixed pseudo-random start.
pub fn estimate_lambda_max(a: &CsrMatrix, inv_diag: &[f64], iters: usize) -> Result<f64, AmgError> {
    let n = a.n_rows();
    if n == 0 {
        return Err(AmgError::InvalidConfig("eigen-estimate of an empty matrix".into()));
    }
    let iters = iters.clamp(1, n);
    let s: Vec<f64> = inv_diag
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > 0.0 && d.is_finite() {
                Ok(d.sqrt())
            } else {
                Err(AmgError::NonPositiveDiagonal { row: i, value: 1.0 / d })
            }
        })
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let nrm = vector::norm2(&q);
    q.iter_mut().for_each(|x| *x /= nrm);
    let mut q_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut alpha = Vec::with_capacity(iters);
    let mut beta: Vec<f64> = Vec::with_capacity(iters);
    for k in 0..iters {
        for i in 0..n {
            tmp[i] = s[i] * q[i];
        }
        a.apply_into(&tmp, &mut w);
        for i in 0..n {
            w[i] *= s[i];
        }
        let ak = vector::dot(&w, &q);
        alpha.push(ak);
        let b_prev = if k > 0 { beta[k - 1] } else { 0.0 };
        for i in 0..n {
            w[i] -= ak * q[i] + b_prev * q_prev[i];
        }
        let bk = vector::norm2(&w);
        if k + 1 == iters || bk <= 1e-12 * ak.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        beta.push(bk);
        std::mem::swap(&mut q_prev, &mut q);
        for i in 0..n {
            q[i] = w[i] / bk;
        }
    }
    let lambda = tridiag_max_eig(&alpha, &beta[..alpha.len() - 1]);
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(AmgError::EigenEstimate(lambda));
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_matches_known_spectrum() {
        // tridiag(-1, 2, -1) of size m: 2 - 2 cos(k π/(m+1))
        let m = 7;
        let l = tridiag_max_eig(&vec![2.0; m], &vec![-1.0; m - 1]);
        let exact = 2.0 - 2.0 * (m as f64 * std::f64::consts::PI / (m as f64 + 1.0)).cos();
        assert!((l - exact).abs() < 1e-12);
        assert!((tridiag_max_eig(&[3.0], &[]) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_exact_after_full_krylov() {
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let a = CsrMatrix::from_diagonal(&d);
        let lam = estimate_lambda_max(&a, &[1.0; 10], 10).unwrap();
        assert!((lam - 10.0).abs() < 1e-8, "{lam}");
    }

    #[test]
    fn jacobi_scaling_of_laplacian() {
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let lam = estimate_lambda_max(&a, &vec![0.5; n], 10).unwrap();
        let exact = 1.0 - (n as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!(lam <= exact + 1e-12 && lam > 0.9 * exact, "{lam} vs {exact}");
    }
}
