//! Zero-fill incomplete Cholesky preconditioning, `M = L L^T`.
//!
//! Factorization walks rows in ikj order; every inner accumulation is
//! sequential left-to-right, so factor and solves are bitwise reproducible.

use crate::error::{Error, Result};
use crate::matrix::{max_row_nnz, CsrMatrix};
use crate::norm_est::{power_iteration_norm, NormEstimate, NORM_EST_MAX_ITERS, NORM_EST_TOL};
use crate::vector::DenseVector;

/// Replacement value for an exactly-zero pivot.
const ZERO_PIVOT_SUBSTITUTE: f64 = 1e-8;

/// Incomplete Cholesky factor with zero fill.
#[derive(Clone, Debug)]
pub struct IccFactor {
    /// Lower triangle including the diagonal, pattern of `tril(A)`.
    l: CsrMatrix,
    /// `L^T`, cached for the backward solve.
    l_transpose: CsrMatrix,
    /// Per-row flag: true where a nonpositive pivot was replaced.
    diag_shift_applied: Vec<bool>,
}

impl IccFactor {
    pub fn l(&self) -> &CsrMatrix {
        &self.l
    }

    pub fn l_transpose(&self) -> &CsrMatrix {
        &self.l_transpose
    }

    pub fn diag_shift_applied(&self) -> &[bool] {
        &self.diag_shift_applied
    }

    pub fn any_pivot_shifted(&self) -> bool {
        self.diag_shift_applied.iter().any(|&f| f)
    }
}

/// The preconditioners the solvers accept.
#[derive(Clone, Debug)]
pub enum Preconditioner {
    /// `M = I`; application returns the input bitwise.
    Identity,
    Icc0(IccFactor),
}

impl Preconditioner {
    pub fn is_identity(&self) -> bool {
        matches!(self, Preconditioner::Identity)
    }
}

/// Computes the ICC(0) factor of `a`.
///
/// `a` must be square with a structurally symmetric pattern and a stored
/// diagonal in every row. Nonpositive pivots (possible for indefinite
/// input) are replaced by their absolute value, or by 1e-8 when exactly
/// zero, and flagged in `diag_shift_applied`.
pub fn icc0_factor(a: &CsrMatrix) -> Result<IccFactor> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    validate_pattern(a)?;

    // Structure of tril(A) including the diagonal; values filled below.
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut a_values = Vec::new();
    row_offsets.push(0);
    for r in 0..n {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if c <= r {
                col_indices.push(c);
                a_values.push(v);
            }
        }
        row_offsets.push(col_indices.len());
    }

    let mut values = vec![0.0f64; col_indices.len()];
    let mut diag_pos = vec![0usize; n]; // diagonal is the last entry per row
    let mut diag_shift_applied = vec![false; n];

    for i in 0..n {
        let row_start = row_offsets[i];
        let row_end = row_offsets[i + 1];
        diag_pos[i] = row_end - 1;
        debug_assert_eq!(col_indices[row_end - 1], i);

        for idx in row_start..row_end - 1 {
            let j = col_indices[idx];
            let mut s = a_values[idx];
            // Subtract sum_{k < j} L[i][k] * L[j][k] over the shared
            // pattern, in increasing k.
            let mut pi = row_start;
            let mut pj = row_offsets[j];
            let pj_end = diag_pos[j];
            while pi < idx && pj < pj_end {
                let ki = col_indices[pi];
                let kj = col_indices[pj];
                if ki == kj {
                    s -= values[pi] * values[pj];
                    pi += 1;
                    pj += 1;
                } else if ki < kj {
                    pi += 1;
                } else {
                    pj += 1;
                }
            }
            values[idx] = s / values[diag_pos[j]];
        }

        let mut d = a_values[row_end - 1];
        for idx in row_start..row_end - 1 {
            d -= values[idx] * values[idx];
        }
        if d < 0.0 {
            d = -d;
            diag_shift_applied[i] = true;
        } else if d == 0.0 {
            d = ZERO_PIVOT_SUBSTITUTE;
            diag_shift_applied[i] = true;
        }
        values[row_end - 1] = d.sqrt();
    }

    let l = CsrMatrix::new(n, n, row_offsets, col_indices, values)?;
    let l_transpose = l.transpose();
    Ok(IccFactor {
        l,
        l_transpose,
        diag_shift_applied,
    })
}

fn validate_pattern(a: &CsrMatrix) -> Result<()> {
    let n = a.n_rows();
    for r in 0..n {
        let (cols, _) = a.row(r);
        if cols.binary_search(&r).is_err() {
            return Err(Error::MissingDiagonal(r));
        }
    }
    let at = a.transpose();
    if a.row_offsets() != at.row_offsets() || a.col_indices() != at.col_indices() {
        for r in 0..n {
            let (cols, _) = a.row(r);
            for &c in cols {
                let (tcols, _) = a.row(c);
                if tcols.binary_search(&r).is_err() {
                    return Err(Error::UnsymmetricPattern(r, c));
                }
            }
        }
        // Pattern multisets differ even though every entry has a partner;
        // cannot happen for valid CSR, but keep a defensive error.
        return Err(Error::UnsymmetricPattern(0, 0));
    }
    Ok(())
}

/// Applies `M^{-1} v`: forward solve `L y = v`, then backward solve
/// `L^T z = y`. The identity preconditioner returns `v` bitwise.
pub fn apply_preconditioner(m: &Preconditioner, v: &DenseVector) -> Result<DenseVector> {
    match m {
        Preconditioner::Identity => Ok(v.clone()),
        Preconditioner::Icc0(f) => {
            if v.len() != f.l.n_rows() {
                return Err(Error::DimensionMismatch {
                    expected: f.l.n_rows(),
                    got: v.len(),
                    context: "apply_preconditioner",
                });
            }
            let mut out = DenseVector::zeros(v.len());
            apply_preconditioner_into(m, v, &mut out);
            Ok(out)
        }
    }
}

/// `apply_preconditioner` into a caller buffer; dimensions must agree.
pub fn apply_preconditioner_into(m: &Preconditioner, v: &[f64], out: &mut [f64]) {
    match m {
        Preconditioner::Identity => out.copy_from_slice(v),
        Preconditioner::Icc0(f) => {
            let n = f.l.n_rows();
            debug_assert_eq!(v.len(), n);
            // Forward: rows ascending, off-diagonals left-to-right, diagonal
            // stored last.
            for i in 0..n {
                let (cols, vals) = f.l.row(i);
                let mut acc = v[i];
                for idx in 0..cols.len() - 1 {
                    acc -= vals[idx] * out[cols[idx]];
                }
                out[i] = acc / vals[cols.len() - 1];
            }
            // Backward: rows descending; in L^T the diagonal is stored
            // first, remaining entries left-to-right.
            for i in (0..n).rev() {
                let (cols, vals) = f.l_transpose.row(i);
                let mut acc = out[i];
                for idx in 1..cols.len() {
                    acc -= vals[idx] * out[cols[idx]];
                }
                out[i] = acc / vals[0];
            }
        }
    }
}

/// Estimates `||M^{-1}||_2` by power iteration on `v -> M^{-1}(M^{-1} v)`
/// (valid since `M^{-1} = L^{-T} L^{-1}` is symmetric).
pub fn estimate_preconditioner_norm(m: &Preconditioner) -> NormEstimate {
    match m {
        Preconditioner::Identity => NormEstimate {
            value: 1.0,
            iterations: 0,
            converged: true,
        },
        Preconditioner::Icc0(f) => {
            let n = f.l.n_rows();
            let mut mid = vec![0.0; n];
            power_iteration_norm(
                |v, out| {
                    apply_preconditioner_into(m, v, &mut mid);
                    apply_preconditioner_into(m, &mid, out);
                },
                n,
                NORM_EST_TOL,
                NORM_EST_MAX_ITERS,
            )
        }
    }
}

/// Row-size proxy for the preconditioner application in the rounding model:
/// `2 * max_row_nnz(L) - 1` for ICC(0) (forward plus backward sweep through
/// one row of L and one of L^T), 1 for the identity.
pub fn mu_tilde(m: &Preconditioner) -> usize {
    match m {
        Preconditioner::Identity => 1,
        Preconditioner::Icc0(f) => 2 * max_row_nnz(&f.l) - 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::spmv;

    fn tridiagonal(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    fn dense_of(a: &CsrMatrix) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; a.n_cols()]; a.n_rows()];
        for (r, c, v) in a.triplets() {
            d[r][c] = v;
        }
        d
    }

    #[test]
    fn identity_input_factors_to_identity() {
        let f = icc0_factor(&CsrMatrix::identity(5)).unwrap();
        assert_eq!(f.l(), &CsrMatrix::identity(5));
        assert!(!f.any_pivot_shifted());
    }

    #[test]
    fn tridiagonal_factor_reproduces_a() {
        // No fill is dropped for a tridiagonal pattern, so L L^T = A up to
        // rounding.
        let a = tridiagonal(6);
        let f = icc0_factor(&a).unwrap();
        let l = dense_of(f.l());
        let ad = dense_of(&a);
        for i in 0..6 {
            for j in 0..6 {
                let mut s = 0.0;
                for k in 0..6 {
                    s += l[i][k] * l[j][k];
                }
                assert!((s - ad[i][j]).abs() <= 1e-14, "({i},{j}): {s}");
            }
        }
    }

    #[test]
    fn negative_pivot_is_flipped_and_flagged() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        let f = icc0_factor(&a).unwrap();
        assert_eq!(f.diag_shift_applied(), &[false, true]);
        let (_, vals) = f.l().row(1);
        assert_eq!(vals[0], 1.0);
    }

    #[test]
    fn zero_pivot_gets_substitute() {
        let a = CsrMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        let f = icc0_factor(&a).unwrap();
        assert_eq!(f.diag_shift_applied(), &[false, true]);
        let (cols, vals) = f.l().row(1);
        assert_eq!(cols, &[0, 1]);
        assert_eq!(vals[1], 1e-4); // sqrt(1e-8)
    }

    #[test]
    fn rejects_missing_diagonal_and_unsymmetric_pattern() {
        let no_diag =
            CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(matches!(
            icc0_factor(&no_diag),
            Err(Error::MissingDiagonal(1))
        ));

        let skew = CsrMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            icc0_factor(&skew),
            Err(Error::UnsymmetricPattern(0, 1))
        ));
    }

    #[test]
    fn identity_application_is_bitwise() {
        let v = DenseVector::from_vec(vec![0.1, -0.0, 3.5e-200]);
        let out = apply_preconditioner(&Preconditioner::Identity, &v).unwrap();
        for i in 0..v.len() {
            assert_eq!(v[i].to_bits(), out[i].to_bits());
        }
    }

    #[test]
    fn tridiagonal_apply_solves_m() {
        // M = L L^T equals A here, so M^{-1}(A x) must recover x.
        let a = tridiagonal(8);
        let m = Preconditioner::Icc0(icc0_factor(&a).unwrap());
        let x = DenseVector::from_vec((0..8).map(|i| (i as f64) - 3.5).collect());
        let ax = spmv(&a, &x).unwrap();
        let back = apply_preconditioner(&m, &ax).unwrap();
        for i in 0..8 {
            assert!((back[i] - x[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn application_is_linear_up_to_rounding() {
        let a = tridiagonal(10);
        let m = Preconditioner::Icc0(icc0_factor(&a).unwrap());
        let u = DenseVector::from_vec((0..10).map(|i| ((i * 7 % 5) as f64) - 2.0).collect());
        let v = DenseVector::from_vec((0..10).map(|i| ((i * 3 % 11) as f64) * 0.25).collect());
        let mu = apply_preconditioner(&m, &u).unwrap();
        let mv = apply_preconditioner(&m, &v).unwrap();
        let mut comb = DenseVector::zeros(10);
        for i in 0..10 {
            comb[i] = 2.0 * u[i] - 0.5 * v[i];
        }
        let mcomb = apply_preconditioner(&m, &comb).unwrap();
        for i in 0..10 {
            let expect = 2.0 * mu[i] - 0.5 * mv[i];
            assert!((mcomb[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn preconditioner_norm_identity_and_diagonal() {
        assert_eq!(
            estimate_preconditioner_norm(&Preconditioner::Identity).value,
            1.0
        );
        // A = diag(4, 16) -> L = diag(2, 4) -> ||M^{-1}|| = 1/4.
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 4.0), (1, 1, 16.0)]).unwrap();
        let m = Preconditioner::Icc0(icc0_factor(&a).unwrap());
        let est = estimate_preconditioner_norm(&m);
        assert!((est.value - 0.25).abs() <= 1e-8);
    }

    #[test]
    fn mu_tilde_proxy_values() {
        assert_eq!(mu_tilde(&Preconditioner::Identity), 1);
        let m = Preconditioner::Icc0(icc0_factor(&tridiagonal(6)).unwrap());
        // max row nnz of L is 2 -> proxy 3.
        assert_eq!(mu_tilde(&m), 3);
    }
}
