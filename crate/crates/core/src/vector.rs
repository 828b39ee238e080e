//! Dense binary64 vectors and the sequential kernels (`dot`, `axpy`, `norm2`).
//!
//! All accumulation is strictly sequential left-to-right with no FMA, so
//! every kernel is bitwise reproducible across runs. The rounding-error
//! instrumentation in this crate depends on that ordering.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// Dense vector of binary64 values.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    pub fn zeros(n: usize) -> Self {
        DenseVector {
            values: vec![0.0; n],
        }
    }

    /// Vector with every entry set to `value`.
    pub fn filled(n: usize, value: f64) -> Self {
        DenseVector {
            values: vec![value; n],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        DenseVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(values: Vec<f64>) -> Self {
        DenseVector { values }
    }
}

fn check_same_len(u: &[f64], v: &[f64], context: &'static str) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
            context,
        });
    }
    Ok(())
}

/// Inner product with sequential left-to-right accumulation.
pub fn dot(u: &DenseVector, v: &DenseVector) -> Result<f64> {
    check_same_len(u, v, "dot")?;
    Ok(dot_slices(u, v))
}

/// `dot` on raw slices; lengths must already agree.
pub(crate) fn dot_slices(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut sum = 0.0;
    for i in 0..u.len() {
        sum += u[i] * v[i];
    }
    sum
}

/// Returns the vector with entries `fl(alpha * x[i] + y[i])`.
pub fn axpy(alpha: f64, x: &DenseVector, y: &DenseVector) -> Result<DenseVector> {
    check_same_len(x, y, "axpy")?;
    let mut out = y.clone();
    axpy_in_place(alpha, x, &mut out);
    Ok(out)
}

/// In-place `y[i] = fl(alpha * x[i] + y[i])`; lengths must agree.
pub fn axpy_in_place(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..y.len() {
        y[i] = alpha * x[i] + y[i];
    }
}

/// Euclidean norm, `sqrt(dot(v, v))`.
pub fn norm2(v: &DenseVector) -> f64 {
    norm2_slice(v)
}

pub(crate) fn norm2_slice(v: &[f64]) -> f64 {
    dot_slices(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_accumulates_left_to_right() {
        // (1 + 2^-53) collapses to 1 when added first, not when added last;
        // pins the required ordering.
        let tiny = (2.0f64).powi(-53);
        let u = DenseVector::from_vec(vec![1.0, 1.0, 1.0]);
        let v = DenseVector::from_vec(vec![tiny, tiny, 1.0]);
        let forward = dot(&u, &v).unwrap();
        assert_eq!(forward, tiny + tiny + 1.0);
        assert_ne!(forward, 1.0 + tiny + tiny);
    }

    #[test]
    fn dot_rejects_length_mismatch() {
        let u = DenseVector::zeros(3);
        let v = DenseVector::zeros(4);
        assert!(matches!(
            dot(&u, &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn axpy_elementwise_contract() {
        let x = DenseVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = DenseVector::from_vec(vec![10.0, 20.0, 30.0]);
        let out = axpy(3.0, &x, &y).unwrap();
        for i in 0..3 {
            assert_eq!(out[i], 3.0 * x[i] + y[i]);
        }
    }

    #[test]
    fn axpy_alpha_zero_keeps_y() {
        let x = DenseVector::from_vec(vec![5.0, -7.0]);
        let y = DenseVector::from_vec(vec![1.5, 2.5]);
        let out = axpy(0.0, &x, &y).unwrap();
        assert_eq!(out.as_slice(), y.as_slice());
    }

    #[test]
    fn norm2_matches_dot() {
        let v = DenseVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(norm2(&v), 5.0);
        assert_eq!(norm2(&DenseVector::zeros(4)), 0.0);
    }
}
