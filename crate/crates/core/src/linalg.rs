//! Dense factorization helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower Cholesky factor of a symmetric matrix; reports the failing pivot.
///
/// Only the lower triangle of `a` is read.
pub fn cholesky_lower<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    let mut l = a.lower_triangle();
    for j in 0..n {
        // left-looking: column j -= sum_k L[j.., k] * L[j, k]
        for k in 0..j {
            let ljk = l[(j, k)];
            if ljk == T::zero() {
                continue;
            }
            let (left, mut right) = l.columns_range_pair_mut(k, j);
            let src = left.rows_range(j..n);
            let mut dst = right.rows_range_mut(j..n);
            dst.axpy(-ljk, &src, T::one());
        }
        let pivot = l[(j, j)];
        if !(pivot > T::zero()) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in j + 1..n {
            l[(i, j)] /= root;
        }
    }
    Ok(l)
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn solve_lower_in_place<T: Scalar>(l: &DMatrix<T>, b: &mut DVector<T>) {
    l.solve_lower_triangular_mut(b);
}

/// Solves `(L L^T) x = b`.
pub fn cholesky_solve<T: Scalar>(l: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    let mut x = b.clone();
    l.solve_lower_triangular_mut(&mut x);
    l.tr_solve_lower_triangular_mut(&mut x);
    x
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue<T: Scalar>(a: &DMatrix<T>) -> T {
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or(T::one()), |m, v| m.min(v))
}
