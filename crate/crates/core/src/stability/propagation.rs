//! Rounding-error propagation matrices built from the coefficient trace.
//!
//! Eight upper-triangular matrices (A, B, E, P, C, D, O, U in the naming
//! below) describe how local errors of one iteration enter the residual and
//! auxiliary gaps of later iterations; the gap evolution is governed by nine
//! products of them. `product_column_norms` evaluates the i-th column of
//! each product in O(i) per matrix apply via backward/suffix recurrences;
//! `propagation_matrices` materializes the dense factors for diagnostics and
//! oracle comparisons.

use crate::error::{Error, Result};
use crate::stability::CoefficientTrace;

/// Small dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }
}

/// The eight propagation factors of order `upto + 1`.
///
/// Signs follow the analysis: `a`, `p`, `c`, `o` carry a leading minus.
#[derive(Clone, Debug)]
pub struct PropagationMatrices {
    /// Strictly upper; entry (j,k) = -alpha_j for k > j.
    pub a: SquareMatrix,
    /// Upper incl. diagonal; entry (j,k) = prod_{m=j+1..=k} beta_m.
    pub b: SquareMatrix,
    /// `b` with row 0 zeroed.
    pub e: SquareMatrix,
    /// Strictly upper; entry (j,k) = -omega_j * prod_{m=j+1..=k} beta_m.
    pub p: SquareMatrix,
    /// Strictly upper; entry (j,k) = -omega_j.
    pub c: SquareMatrix,
    /// Strictly upper; entry (j,k) = omega_j * alpha_j.
    pub d: SquareMatrix,
    /// Diagonal; entry (j,j) = -omega_{j-1}, zero at j = 0.
    pub o: SquareMatrix,
    /// Upper triangular of ones.
    pub u: SquareMatrix,
}

/// Labels of the nine governed products, in CSV column order.
pub const PRODUCT_LABELS: [&str; 9] = [
    "U", "OU", "BA", "UEA", "BAEA", "BPA", "UC", "BAC", "BD",
];

/// Materializes the propagation factors of order `upto + 1` from the trace.
///
/// Requires `upto < trace.len()` since column `upto` of `b` reads
/// `beta_upto`.
pub fn propagation_matrices(trace: &CoefficientTrace, upto: usize) -> Result<PropagationMatrices> {
    if upto >= trace.len() {
        return Err(Error::InvalidInput(format!(
            "propagation matrices of order {} need {} trace entries, have {}",
            upto + 1,
            upto + 1,
            trace.len()
        )));
    }
    let n = upto + 1;
    let alphas = &trace.alphas;
    let betas = &trace.betas;
    let omegas = &trace.omegas;

    let mut a = SquareMatrix::zeros(n);
    let mut b = SquareMatrix::zeros(n);
    let mut e = SquareMatrix::zeros(n);
    let mut p = SquareMatrix::zeros(n);
    let mut c = SquareMatrix::zeros(n);
    let mut d = SquareMatrix::zeros(n);
    let mut o = SquareMatrix::zeros(n);
    let mut u = SquareMatrix::zeros(n);

    for j in 0..n {
        b.set(j, j, 1.0);
        if j > 0 {
            e.set(j, j, 1.0);
            o.set(j, j, -omegas[j - 1]);
        }
        let mut beta_prod = 1.0;
        for k in j..n {
            u.set(j, k, 1.0);
            if k > j {
                beta_prod *= betas[k];
                a.set(j, k, -alphas[j]);
                b.set(j, k, beta_prod);
                if j > 0 {
                    e.set(j, k, beta_prod);
                }
                p.set(j, k, -omegas[j] * beta_prod);
                c.set(j, k, -omegas[j]);
                d.set(j, k, omegas[j] * alphas[j]);
            }
        }
    }

    Ok(PropagationMatrices {
        a,
        b,
        e,
        p,
        c,
        d,
        o,
        u,
    })
}

/// Trace coefficient accessors that treat indices past the recorded window
/// as zero. In the nine products those positions only ever multiply zero
/// entries (the strictly-upper factors annihilate the last component), so
/// the substitution is exact.
struct Coeffs<'t> {
    trace: &'t CoefficientTrace,
}

impl Coeffs<'_> {
    fn alpha(&self, j: usize) -> f64 {
        self.trace.alphas.get(j).copied().unwrap_or(0.0)
    }

    fn beta(&self, j: usize) -> f64 {
        self.trace.betas.get(j).copied().unwrap_or(0.0)
    }

    fn omega(&self, j: usize) -> f64 {
        self.trace.omegas.get(j).copied().unwrap_or(0.0)
    }

    /// v <- U v (suffix sums).
    fn apply_u(&self, v: &mut [f64]) {
        let mut acc = 0.0;
        for j in (0..v.len()).rev() {
            acc += v[j];
            v[j] = acc;
        }
    }

    /// v <- O v (diagonal scaling by -omega_{j-1}).
    fn apply_o(&self, v: &mut [f64]) {
        for j in (1..v.len()).rev() {
            v[j] *= -self.omega(j - 1);
        }
        if !v.is_empty() {
            v[0] = 0.0;
        }
    }

    /// v <- B v via the backward recurrence (Bv)_j = v_j + beta_{j+1} (Bv)_{j+1}.
    fn apply_b(&self, v: &mut [f64]) {
        for j in (0..v.len().saturating_sub(1)).rev() {
            v[j] += self.beta(j + 1) * v[j + 1];
        }
    }

    /// v <- E v (B with row 0 removed).
    fn apply_e(&self, v: &mut [f64]) {
        self.apply_b(v);
        if !v.is_empty() {
            v[0] = 0.0;
        }
    }

    /// v <- A v: (Av)_j = -alpha_j * sum_{k>j} v_k.
    fn apply_a(&self, v: &mut [f64]) {
        let mut tail = 0.0;
        for j in (0..v.len()).rev() {
            let own = v[j];
            v[j] = -self.alpha(j) * tail;
            tail += own;
        }
    }

    /// v <- C v: (Cv)_j = -omega_j * sum_{k>j} v_k.
    fn apply_c(&self, v: &mut [f64]) {
        let mut tail = 0.0;
        for j in (0..v.len()).rev() {
            let own = v[j];
            v[j] = -self.omega(j) * tail;
            tail += own;
        }
    }

    /// v <- D v: (Dv)_j = omega_j alpha_j * sum_{k>j} v_k.
    fn apply_d(&self, v: &mut [f64]) {
        let mut tail = 0.0;
        for j in (0..v.len()).rev() {
            let own = v[j];
            v[j] = self.omega(j) * self.alpha(j) * tail;
            tail += own;
        }
    }

    /// v <- P v: (Pv)_j = -omega_j beta_{j+1} (Bv)_{j+1}.
    fn apply_p(&self, v: &mut [f64]) {
        self.apply_b(v);
        let n = v.len();
        for j in 0..n {
            v[j] = if j + 1 < n {
                -self.omega(j) * self.beta(j + 1) * v[j + 1]
            } else {
                0.0
            };
        }
    }
}

fn max_abs_from(v: &[f64], first_row: usize) -> f64 {
    v.iter()
        .skip(first_row)
        .fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Max-norms of column `i` of the nine products, in `PRODUCT_LABELS` order.
///
/// Entries in rows `< zero_rows_below` are ignored, implementing the row
/// zeroing applied after a residual replacement. At `i = 0` every norm
/// except `U`'s is 0.
pub fn product_column_norms_with_reset(
    trace: &CoefficientTrace,
    i: usize,
    zero_rows_below: usize,
) -> [f64; 9] {
    let co = Coeffs { trace };
    let n = i + 1;
    let e_i = |v: &mut Vec<f64>| {
        v.clear();
        v.resize(n, 0.0);
        v[i] = 1.0;
    };
    let mut v = Vec::with_capacity(n);
    let mut out = [0.0f64; 9];

    // U
    e_i(&mut v);
    co.apply_u(&mut v);
    out[0] = max_abs_from(&v, zero_rows_below);
    // OU
    e_i(&mut v);
    co.apply_u(&mut v);
    co.apply_o(&mut v);
    out[1] = max_abs_from(&v, zero_rows_below);
    // BA
    e_i(&mut v);
    co.apply_a(&mut v);
    co.apply_b(&mut v);
    out[2] = max_abs_from(&v, zero_rows_below);
    // UEA
    e_i(&mut v);
    co.apply_a(&mut v);
    co.apply_e(&mut v);
    co.apply_u(&mut v);
    out[3] = max_abs_from(&v, zero_rows_below);
    // BAEA
    e_i(&mut v);
    co.apply_a(&mut v);
    co.apply_e(&mut v);
    co.apply_a(&mut v);
    co.apply_b(&mut v);
    out[4] = max_abs_from(&v, zero_rows_below);
    // BPA
    e_i(&mut v);
    co.apply_a(&mut v);
    co.apply_p(&mut v);
    co.apply_b(&mut v);
    out[5] = max_abs_from(&v, zero_rows_below);
    // UC
    e_i(&mut v);
    co.apply_c(&mut v);
    co.apply_u(&mut v);
    out[6] = max_abs_from(&v, zero_rows_below);
    // BAC
    e_i(&mut v);
    co.apply_c(&mut v);
    co.apply_a(&mut v);
    co.apply_b(&mut v);
    out[7] = max_abs_from(&v, zero_rows_below);
    // BD
    e_i(&mut v);
    co.apply_d(&mut v);
    co.apply_b(&mut v);
    out[8] = max_abs_from(&v, zero_rows_below);

    out
}

/// `product_column_norms_with_reset` without row zeroing.
pub fn product_column_norms(trace: &CoefficientTrace, i: usize) -> [f64; 9] {
    product_column_norms_with_reset(trace, i, 0)
}
