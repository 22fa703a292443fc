//! Exact Gaussian process regression.
//!
//! [`fit`] conditions a zero-mean GP prior on a [`Dataset`] and caches the
//! Cholesky factor of `K + sn2 I` together with the weight vector `alpha`.
//! The resulting [`Posterior`] is immutable and answers mean and variance
//! queries.

mod hyper;
mod io;
mod sample;

pub use hyper::{
    fit_hyperparameters, log_marginal_likelihood, FittedHyperparameters, HyperparameterOptions,
};
pub use io::{read_dataset_csv, write_dataset_csv};
pub use sample::{sample_function, DEFAULT_JITTER, MAX_JITTER};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::StationaryKernel;
use crate::linalg;
use crate::scalar::{all_finite, Scalar};

/// Above this many training points the smallest eigenvalue of `K + sn2 I` is
/// lower-bounded by `sn2` instead of being computed.
pub const EIGEN_SOLVE_LIMIT: usize = 2000;

/// Training data `(X_N, y_N)` with observation noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    // column-major d x N: each column is one input point
    points: DMatrix<T>,
    targets: DVector<T>,
    noise_variance: T,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from an `N x d` input matrix.
    pub fn new(inputs: DMatrix<T>, targets: DVector<T>, noise_variance: T) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                found: targets.len(),
            });
        }
        if !all_finite(inputs.as_slice()) || !all_finite(targets.as_slice()) {
            return Err(Error::arg("dataset entries must be finite"));
        }
        if !noise_variance.is_finite() || noise_variance < T::zero() {
            return Err(Error::arg("noise variance must be finite and non-negative"));
        }
        Ok(Self {
            points: inputs.transpose(),
            targets,
            noise_variance,
        })
    }

    /// Builds a dataset from a list of points.
    pub fn from_points(points: &[Vec<T>], targets: Vec<T>, noise_variance: T) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        let inputs = DMatrix::from_fn(points.len(), d, |i, j| points[i][j]);
        Self::new(inputs, DVector::from_vec(targets), noise_variance)
    }

    /// Dataset without observations in dimension `d`.
    pub fn empty(dimension: usize, noise_variance: T) -> Result<Self> {
        Self::new(
            DMatrix::zeros(0, dimension),
            DVector::zeros(0),
            noise_variance,
        )
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.points.nrows()
    }

    pub fn noise_variance(&self) -> T {
        self.noise_variance
    }

    pub fn targets(&self) -> &DVector<T> {
        &self.targets
    }

    /// The `i`-th input point.
    pub fn point(&self, i: usize) -> &[T] {
        let d = self.dimension();
        &self.points.as_slice()[i * d..(i + 1) * d]
    }

    /// Inputs as an `N x d` matrix.
    pub fn inputs(&self) -> DMatrix<T> {
        self.points.transpose()
    }

    pub fn with_targets(&self, targets: DVector<T>) -> Result<Self> {
        Self::new(self.inputs(), targets, self.noise_variance)
    }

    pub fn with_noise_variance(&self, noise_variance: T) -> Result<Self> {
        Self::new(self.inputs(), self.targets.clone(), noise_variance)
    }

    /// Appends one observation.
    pub fn push(&mut self, x: &[T], y: T) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: x.len(),
            });
        }
        let mut inputs = self.inputs();
        let n = inputs.nrows();
        inputs = inputs.insert_row(n, T::zero());
        for (j, &v) in x.iter().enumerate() {
            inputs[(n, j)] = v;
        }
        let targets = self.targets.clone().push(y);
        *self = Self::new(inputs, targets, self.noise_variance)?;
        Ok(())
    }

    /// Gram matrix `K(X_N, X_N)` without noise.
    pub fn gram<K: StationaryKernel<T>>(&self, kernel: &K) -> DMatrix<T> {
        let n = self.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = kernel.eval_pair(self.point(i), self.point(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// How the smallest eigenvalue of `K + sn2 I` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSource {
    /// Symmetric eigenvalue solve.
    EigenSolve,
    /// Lower bound `sn2`, valid because `K` is positive semidefinite.
    NoiseFloor,
    /// No training data.
    Empty,
}

impl EigenSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EigenSource::EigenSolve => "eigen-solve",
            EigenSource::NoiseFloor => "noise-floor",
            EigenSource::Empty => "empty",
        }
    }
}

/// GP conditioned on a dataset.
#[derive(Debug, Clone)]
pub struct Posterior<T: Scalar, K> {
    dataset: Dataset<T>,
    kernel: K,
    factor: DMatrix<T>,
    alpha: DVector<T>,
    min_eigenvalue: T,
    eigen_source: EigenSource,
}

/// Conditions the GP prior with `kernel` on `dataset`.
pub fn fit<T, K>(dataset: &Dataset<T>, kernel: &K) -> Result<Posterior<T, K>>
where
    T: Scalar,
    K: StationaryKernel<T>,
{
    if dataset.dimension() != kernel.dimension() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dimension(),
            found: dataset.dimension(),
        });
    }
    let n = dataset.len();
    let sn2 = dataset.noise_variance();
    let mut a = dataset.gram(kernel);
    for i in 0..n {
        a[(i, i)] += sn2;
    }
    let factor = linalg::cholesky_lower(&a)?;
    let alpha = linalg::cholesky_solve(&factor, dataset.targets());

    let (min_eigenvalue, eigen_source) = if n == 0 {
        (T::one(), EigenSource::Empty)
    } else if n <= EIGEN_SOLVE_LIMIT || sn2 <= T::zero() {
        // K is PSD, so the true value is at least sn2
        (linalg::min_symmetric_eigenvalue(&a).max(sn2), EigenSource::EigenSolve)
    } else {
        (sn2, EigenSource::NoiseFloor)
    };
    if !(min_eigenvalue > T::zero()) {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }

    Ok(Posterior {
        dataset: dataset.clone(),
        kernel: kernel.clone(),
        factor,
        alpha,
        min_eigenvalue,
        eigen_source,
    })
}

impl<T: Scalar, K: StationaryKernel<T>> Posterior<T, K> {
    pub fn dataset(&self) -> &Dataset<T> {
        &self.dataset
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.kernel.dimension()
    }

    /// Lower Cholesky factor of `K + sn2 I`.
    pub fn factor(&self) -> &DMatrix<T> {
        &self.factor
    }

    /// `(K + sn2 I)^{-1} y`.
    pub fn alpha(&self) -> &DVector<T> {
        &self.alpha
    }

    /// Smallest eigenvalue of `K + sn2 I` (or its lower bound, see [`EigenSource`]).
    pub fn min_eigenvalue(&self) -> T {
        self.min_eigenvalue
    }

    pub fn eigen_source(&self) -> EigenSource {
        self.eigen_source
    }

    /// Upper bound on the spectral norm `||(K + sn2 I)^{-1}||`; zero without data.
    pub fn inverse_norm(&self) -> T {
        if self.is_empty() {
            T::zero()
        } else {
            T::one() / self.min_eigenvalue
        }
    }

    fn check_query(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: x.len(),
            });
        }
        if !all_finite(x) {
            return Err(Error::arg("non-finite query point"));
        }
        Ok(())
    }

    /// `k(X_N, x)`.
    pub fn kernel_vector(&self, x: &[T]) -> DVector<T> {
        DVector::from_fn(self.len(), |i, _| {
            self.kernel.eval_pair(self.dataset.point(i), x)
        })
    }

    /// Posterior mean `nu_N(x)`.
    pub fn mean(&self, x: &[T]) -> Result<T> {
        self.check_query(x)?;
        Ok(self.kernel_vector(x).dot(&self.alpha))
    }

    /// Posterior mean and variance at `x`.
    ///
    /// Variances in `[-tol, 0)` are round-off and clamp to zero; anything more
    /// negative is reported as an error.
    pub fn predict(&self, x: &[T]) -> Result<(T, T)> {
        self.check_query(x)?;
        let mut v = self.kernel_vector(x);
        let mean = v.dot(&self.alpha);
        linalg::solve_lower_in_place(&self.factor, &mut v);
        let prior = self.kernel.eval_pair(x, x);
        let var = clamp_variance(prior - v.norm_squared(), prior)?;
        Ok((mean, var))
    }

    /// Posterior standard deviation `sigma_N(x)`.
    pub fn std_dev(&self, x: &[T]) -> Result<T> {
        Ok(self.predict(x)?.1.sqrt())
    }

    /// Batched [`predict`](Self::predict) using blocked triangular solves.
    pub fn predict_many(&self, points: &[Vec<T>]) -> Result<Vec<(T, T)>> {
        const BLOCK: usize = 256;
        for p in points {
            self.check_query(p)?;
        }
        let n = self.len();
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(BLOCK) {
            let mut kx = DMatrix::from_fn(n, chunk.len(), |i, j| {
                self.kernel.eval_pair(self.dataset.point(i), &chunk[j])
            });
            let means = kx.tr_mul(&self.alpha);
            self.factor.solve_lower_triangular_mut(&mut kx);
            for (j, p) in chunk.iter().enumerate() {
                let prior = self.kernel.eval_pair(p, p);
                let var = clamp_variance(prior - kx.column(j).norm_squared(), prior)?;
                out.push((means[j], var));
            }
        }
        Ok(out)
    }

    /// Posterior with the same kernel and targets scaled or replaced.
    pub fn refit_with_targets(&self, targets: DVector<T>) -> Result<Self> {
        fit(&self.dataset.with_targets(targets)?, &self.kernel)
    }
}

fn clamp_variance<T: Scalar>(var: T, prior: T) -> Result<T> {
    if var >= T::zero() {
        return Ok(var);
    }
    let tol = T::lit(1e-12).max(T::lit(64.0) * T::machine_epsilon()) * prior.max(T::one());
    if var >= -tol {
        Ok(T::zero())
    } else {
        Err(Error::NegativeVariance(var.as_f64()))
    }
}

#[cfg(test)]
mod tests;
