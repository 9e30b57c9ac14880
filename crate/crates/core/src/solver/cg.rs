//! Conjugate gradients in a diagonally weighted inner product.

use crate::error::{Error, Result};
use crate::linalg::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `||A u - b||_M / ||b||_M` at exit.
    pub relative_residual: f64,
}

pub(crate) fn weighted_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(mass.iter().zip(a).zip(b).map(|((m, x), y)| m * x * y))
}

/// Solves `A u = b` for `A` self-adjoint and positive definite in
/// `<a, b>_M = sum_i M_i a_i b_i`, starting from the contents of `u`.
pub fn conjugate_gradient<A>(
    apply: A,
    mass: &[f64],
    b: &[f64],
    u: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = weighted_dot(mass, b, b).sqrt();
    if b_norm == 0.0 {
        u.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let mut ap = vec![0.0; n];
    apply(u, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = weighted_dot(mass, &r, &r);
    let mut residual = rr.sqrt() / b_norm;
    let mut iterations = 0;
    while residual > tol {
        if iterations >= max_iter {
            return Err(Error::NonConvergence { iterations, residual });
        }
        apply(&p, &mut ap);
        let pap = weighted_dot(mass, &p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonConvergence { iterations, residual });
        }
        let alpha = rr / pap;
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = weighted_dot(mass, &r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        residual = rr.sqrt() / b_norm;
        iterations += 1;
    }
    Ok(CgOutcome { iterations, relative_residual: residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_weighted_tridiagonal_system() {
        // A = M^{-1} K with K the 1-D Neumann Laplacian plus identity.
        let n = 50;
        let mass: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).sin().abs()).collect();
        let apply = |u: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let mut k = 0.5 * mass[i] * u[i];
                if i > 0 {
                    k += u[i] - u[i - 1];
                }
                if i + 1 < n {
                    k += u[i] - u[i + 1];
                }
                out[i] = k / mass[i];
            }
        };
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 / 7.0).cos()).collect();
        let mut b = vec![0.0; n];
        apply(&exact, &mut b);
        let mut u = vec![0.0; n];
        let out = conjugate_gradient(apply, &mass, &b, &mut u, 1e-12, 500).unwrap();
        assert!(out.relative_residual <= 1e-12);
        assert!(u.iter().zip(&exact).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut u = vec![1.0; 3];
        let out = conjugate_gradient(|u, o| o.copy_from_slice(u), &[1.0; 3], &[0.0; 3], &mut u, 1e-10, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(u, vec![0.0; 3]);
    }

    #[test]
    fn reports_non_convergence() {
        let n = 40;
        let apply = |u: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = (i + 1) as f64 * u[i];
            }
        };
        let mut u = vec![0.0; n];
        let err = conjugate_gradient(apply, &vec![1.0; n], &vec![1.0; n], &mut u, 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 3, .. }));
    }
}
