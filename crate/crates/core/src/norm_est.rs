//! Matrix 2-norm estimation by power iteration on `A^T A`.

use crate::matrix::{spmv_into, spmv_transpose_into, CsrMatrix};
use crate::vector::{dot_slices, norm2_slice};

/// Result of a power-iteration norm estimate.
///
/// `converged == false` flags that the iteration cap was reached; `value`
/// then still holds the best available estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Default relative tolerance on the dominant eigenvalue estimate.
pub const NORM_EST_TOL: f64 = 1e-8;
/// Default power-iteration cap.
pub const NORM_EST_MAX_ITERS: usize = 500;

/// Power iteration for the largest eigenvalue of a symmetric positive
/// semidefinite operator `op` on R^n. Returns `sqrt(lambda_max)`.
///
/// Deterministic: fixed seed (normalized all-ones, `+1e-3` on the first
/// entry) and sequential kernels throughout.
pub fn power_iteration_norm<F>(mut op: F, n: usize, tol: f64, max_iters: usize) -> NormEstimate
where
    F: FnMut(&[f64], &mut [f64]),
{
    if n == 0 {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    v[0] += 1e-3;
    let mut w = vec![0.0; n];
    let mut lambda = 0.0f64;
    for it in 1..=max_iters {
        op(&v, &mut w);
        let vv = dot_slices(&v, &v);
        let new_lambda = dot_slices(&v, &w) / vv;
        let wn = norm2_slice(&w);
        if wn == 0.0 {
            // v is (numerically) in the null space; the Rayleigh quotient is
            // already the best statement we can make.
            return NormEstimate {
                value: new_lambda.max(0.0).sqrt(),
                iterations: it,
                converged: true,
            };
        }
        let inv = 1.0 / wn;
        for i in 0..n {
            v[i] = w[i] * inv;
        }
        let settled = (new_lambda - lambda).abs() <= tol * new_lambda.abs();
        lambda = new_lambda;
        if settled && it > 1 {
            return NormEstimate {
                value: lambda.max(0.0).sqrt(),
                iterations: it,
                converged: true,
            };
        }
    }
    NormEstimate {
        value: lambda.max(0.0).sqrt(),
        iterations: max_iters,
        converged: false,
    }
}

/// Estimates `||A||_2` via power iteration on `A^T A`.
pub fn estimate_two_norm(a: &CsrMatrix, tol: f64, max_iters: usize) -> NormEstimate {
    let mut av = vec![0.0; a.n_rows()];
    estimate_with_buffer(a, tol, max_iters, &mut av)
}

fn estimate_with_buffer(
    a: &CsrMatrix,
    tol: f64,
    max_iters: usize,
    av: &mut [f64],
) -> NormEstimate {
    power_iteration_norm(
        |v, out| {
            spmv_into(a, v, av);
            spmv_transpose_into(a, av, out);
        },
        a.n_cols(),
        tol,
        max_iters,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::CsrMatrix;

    #[test]
    fn identity_norm_is_one() {
        let est = estimate_two_norm(&CsrMatrix::identity(7), NORM_EST_TOL, NORM_EST_MAX_ITERS);
        assert!(est.converged);
        assert!((est.value - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn diagonal_norm_is_max_abs_entry() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 1.0), (1, 1, -3.0), (2, 2, 2.0)],
        )
        .unwrap();
        let est = estimate_two_norm(&a, NORM_EST_TOL, NORM_EST_MAX_ITERS);
        assert!(est.converged);
        assert!((est.value - 3.0).abs() <= 1e-6 * 3.0);
    }

    #[test]
    fn cap_reached_sets_flag() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (1, 1, 1.999999)]).unwrap();
        // Eigenvalue gap is tiny, so one iteration cannot settle.
        let est = estimate_two_norm(&a, 1e-15, 2);
        assert!(!est.converged);
        assert_eq!(est.iterations, 2);
        assert!(est.value > 1.9);
    }
}
