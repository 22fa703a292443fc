//! Compact hyperrectangular input domains.

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Scalar};

/// Axis-aligned box `[lower, upper]` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T: Scalar> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Domain<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::arg("domain must have at least one dimension"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if !all_finite(&lower) || !all_finite(&upper) {
            return Err(Error::arg("domain bounds must be finite"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::arg("domain requires lower[i] < upper[i]"));
        }
        Ok(Self { lower, upper })
    }

    /// Hypercube `[lo, hi]^d`.
    pub fn cube(lo: T, hi: T, dimension: usize) -> Result<Self> {
        Self::new(vec![lo; dimension], vec![hi; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    /// Edge lengths `upper[i] - lower[i]`.
    pub fn widths(&self) -> Vec<T> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| u - l).collect()
    }

    /// Maximal extension `max ||x - x'||` over the box, i.e. the diagonal length.
    pub fn diameter(&self) -> T {
        crate::scalar::norm(&self.widths())
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dimension()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Tensor grid with `counts[i]` evenly spaced points per axis (endpoints included).
    ///
    /// Points are ordered with the last axis varying fastest.
    pub fn grid(&self, counts: &[usize]) -> Result<Vec<Vec<T>>> {
        if counts.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: counts.len(),
            });
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::arg("grid counts must be at least 1"));
        }
        let axes: Vec<Vec<T>> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| crate::scalar::linspace(self.lower[i], self.upper[i], c))
            .collect();
        Ok(tensor_grid(&axes))
    }
}

/// Cartesian product of per-axis coordinates, last axis fastest.
pub fn tensor_grid<T: Scalar>(axes: &[Vec<T>]) -> Vec<Vec<T>> {
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        out.push(idx.iter().zip(axes).map(|(&i, a)| a[i]).collect());
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}
