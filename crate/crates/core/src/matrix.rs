//! Compressed sparse row matrices and the deterministic spmv kernel.

use crate::error::{Error, Result};
use crate::vector::DenseVector;

/// Sparse matrix in CSR layout.
///
/// Invariants, checked at construction: `row_offsets` has `n_rows + 1`
/// monotone entries, column indices are strictly increasing within each row
/// and in range, and `values` matches `col_indices` in length.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::InvalidStructure(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidStructure(format!(
                "col_indices ({}) and values ({}) differ in length",
                col_indices.len(),
                values.len()
            )));
        }
        for r in 0..n_rows {
            if row_offsets[r] > row_offsets[r + 1] {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decreases at row {r}"
                )));
            }
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            for pair in cols.windows(2) {
                if pair[0] >= pair[1] {
                    return Err(Error::InvalidStructure(format!(
                        "column indices not strictly increasing in row {r}"
                    )));
                }
            }
            if let Some(&last) = cols.last() {
                if last >= n_cols {
                    return Err(Error::InvalidStructure(format!(
                        "column index {last} out of range in row {r}"
                    )));
                }
            }
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from (row, col, value) triplets; duplicates are rejected.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        for pair in triplets.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::InvalidStructure(format!(
                    "duplicate entry at ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for &(r, c, v) in &triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidStructure(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        CsrMatrix::new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`, in stored (increasing) order.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    /// Stored entries as (row, col, value) triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.push((r, c, v));
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = self.triplets();
        for t in &mut triplets {
            std::mem::swap(&mut t.0, &mut t.1);
        }
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, triplets)
            .expect("transpose of a valid CSR matrix is valid")
    }
}

/// Sparse matrix-vector product `A v`.
///
/// Each output entry accumulates strictly in stored column order, left to
/// right, in binary64 with no FMA.
pub fn spmv(a: &CsrMatrix, v: &DenseVector) -> Result<DenseVector> {
    if v.len() != a.n_cols {
        return Err(Error::DimensionMismatch {
            expected: a.n_cols,
            got: v.len(),
            context: "spmv",
        });
    }
    let mut out = DenseVector::zeros(a.n_rows);
    spmv_into(a, v, &mut out);
    Ok(out)
}

/// `spmv` into a caller-provided buffer; dimensions must already agree.
pub fn spmv_into(a: &CsrMatrix, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(v.len(), a.n_cols);
    debug_assert_eq!(out.len(), a.n_rows);
    for r in 0..a.n_rows {
        let mut sum = 0.0;
        for idx in a.row_offsets[r]..a.row_offsets[r + 1] {
            sum += a.values[idx] * v[a.col_indices[idx]];
        }
        out[r] = sum;
    }
}

/// `A^T v` without materializing the transpose; deterministic scatter order
/// (row-major over stored entries).
pub fn spmv_transpose_into(a: &CsrMatrix, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(v.len(), a.n_rows);
    debug_assert_eq!(out.len(), a.n_cols);
    out.fill(0.0);
    for r in 0..a.n_rows {
        for idx in a.row_offsets[r]..a.row_offsets[r + 1] {
            let c = a.col_indices[idx];
            out[c] += a.values[idx] * v[r];
        }
    }
}

/// Returns `A` with every stored value multiplied by `s`.
pub fn scale_matrix(a: &CsrMatrix, s: f64) -> Result<CsrMatrix> {
    if s == 0.0 || !s.is_finite() {
        return Err(Error::InvalidScale(s));
    }
    let mut scaled = a.clone();
    for v in &mut scaled.values {
        *v *= s;
    }
    Ok(scaled)
}

/// Maximum number of stored entries over all rows (the `mu` of the rounding
/// model).
pub fn max_row_nnz(a: &CsrMatrix) -> usize {
    (0..a.n_rows)
        .map(|r| a.row_offsets[r + 1] - a.row_offsets[r])
        .max()
        .unwrap_or(0)
}
