//! Stationary covariance kernels and the constants derived from them.
//!
//! A stationary kernel depends only on the lag `s = x - x'`. Everything the
//! error bounds need from a kernel (its Lipschitz constant, the partial
//! derivative kernels and their Lipschitz constants, its maximum) is computed
//! here from the lag representation.

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::scalar::{all_finite, norm, Scalar};

/// Over-approximation factor applied to numerically maximized constants.
pub const SAFETY_FACTOR: f64 = 1.01;

/// Grid resolution per lag axis used by the constant search.
pub const SEARCH_POINTS_PER_DIM: usize = 32;

/// A stationary covariance kernel `k(x, x') = k(x - x')`.
pub trait StationaryKernel<T: Scalar>: Clone + std::fmt::Debug + Send + Sync {
    fn dimension(&self) -> usize;

    /// Kernel value at lag `s = x - x'`.
    fn at_lag(&self, lag: &[T]) -> T;

    /// Gradient of `k(x, x')` with respect to `x`, evaluated at lag `s`.
    fn lag_gradient(&self, lag: &[T], out: &mut [T]);

    /// Partial derivative kernel `d^2 k / (dx_i dx'_i)` at lag `s` (0-based `i`).
    fn derivative_at_lag(&self, i: usize, lag: &[T]) -> T;

    /// Gradient with respect to `x` of the `i`-th partial derivative kernel.
    fn derivative_lag_gradient(&self, i: usize, lag: &[T], out: &mut [T]);

    /// True when every quantity depends on the lag coordinates only through
    /// their magnitudes, so searches may be restricted to the positive orthant.
    fn axis_symmetric(&self) -> bool {
        false
    }

    /// Unchecked evaluation on a pair of points.
    fn eval_pair(&self, x: &[T], x2: &[T]) -> T {
        let lag: Vec<T> = x.iter().zip(x2).map(|(&a, &b)| a - b).collect();
        self.at_lag(&lag)
    }

    /// `k(x, x)`.
    fn variance(&self) -> T {
        self.at_lag(&vec![T::zero(); self.dimension()])
    }

    /// Named hyperparameters, for reporting.
    fn parameters(&self) -> Vec<(&'static str, Vec<T>)> {
        Vec::new()
    }

    /// Checked evaluation of `k(x, x2)`.
    fn evaluate(&self, x: &[T], x2: &[T]) -> Result<T> {
        check_point(self.dimension(), x)?;
        check_point(self.dimension(), x2)?;
        Ok(self.eval_pair(x, x2))
    }

    /// Checked evaluation of the `i`-th partial derivative kernel.
    fn derivative_kernel(&self, i: usize, x: &[T], x2: &[T]) -> Result<T> {
        if i >= self.dimension() {
            return Err(Error::arg(format!(
                "derivative index {i} out of range for dimension {}",
                self.dimension()
            )));
        }
        check_point(self.dimension(), x)?;
        check_point(self.dimension(), x2)?;
        let lag: Vec<T> = x.iter().zip(x2).map(|(&a, &b)| a - b).collect();
        Ok(self.derivative_at_lag(i, &lag))
    }
}

fn check_point<T: Scalar>(d: usize, x: &[T]) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    if !all_finite(x) {
        return Err(Error::arg("non-finite kernel input"));
    }
    Ok(())
}

/// Squared-exponential kernel with one lengthscale per input dimension:
/// `k(x, x') = sf2 * exp(-0.5 * sum_i (x_i - x'_i)^2 / l_i^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeArdKernel<T: Scalar> {
    signal_variance: T,
    lengthscales: Vec<T>,
}

impl<T: Scalar> SeArdKernel<T> {
    pub fn new(signal_variance: T, lengthscales: Vec<T>) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::arg("at least one lengthscale is required"));
        }
        if !signal_variance.is_finite() || signal_variance <= T::zero() {
            return Err(Error::arg("signal variance must be finite and positive"));
        }
        if lengthscales.iter().any(|l| !l.is_finite() || *l <= T::zero()) {
            return Err(Error::arg("lengthscales must be finite and positive"));
        }
        Ok(Self {
            signal_variance,
            lengthscales,
        })
    }

    /// Same lengthscale in every dimension.
    pub fn isotropic(signal_variance: T, lengthscale: T, dimension: usize) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dimension])
    }

    pub fn signal_variance(&self) -> T {
        self.signal_variance
    }

    pub fn lengthscales(&self) -> &[T] {
        &self.lengthscales
    }

    #[inline]
    fn scaled_sq_dist(&self, lag: &[T]) -> T {
        lag.iter()
            .zip(&self.lengthscales)
            .fold(T::zero(), |acc, (&s, &l)| acc + (s / l) * (s / l))
    }
}

impl<T: Scalar> StationaryKernel<T> for SeArdKernel<T> {
    fn dimension(&self) -> usize {
        self.lengthscales.len()
    }

    fn at_lag(&self, lag: &[T]) -> T {
        self.signal_variance * (-T::lit(0.5) * self.scaled_sq_dist(lag)).exp()
    }

    fn lag_gradient(&self, lag: &[T], out: &mut [T]) {
        let k = self.at_lag(lag);
        for ((o, &s), &l) in out.iter_mut().zip(lag).zip(&self.lengthscales) {
            *o = -k * s / (l * l);
        }
    }

    fn derivative_at_lag(&self, i: usize, lag: &[T]) -> T {
        let li2 = self.lengthscales[i] * self.lengthscales[i];
        let si = lag[i];
        self.at_lag(lag) / li2 * (T::one() - si * si / li2)
    }

    fn derivative_lag_gradient(&self, i: usize, lag: &[T], out: &mut [T]) {
        let k = self.at_lag(lag);
        let li2 = self.lengthscales[i] * self.lengthscales[i];
        let si = lag[i];
        let poly = T::one() - si * si / li2;
        for (j, o) in out.iter_mut().enumerate() {
            let lj2 = self.lengthscales[j] * self.lengthscales[j];
            *o = if j == i {
                k * si / (li2 * li2) * (si * si / li2 - T::lit(3.0))
            } else {
                -k / li2 * poly * lag[j] / lj2
            };
        }
    }

    fn axis_symmetric(&self) -> bool {
        true
    }

    #[inline]
    fn eval_pair(&self, x: &[T], x2: &[T]) -> T {
        let mut acc = T::zero();
        for ((&a, &b), &l) in x.iter().zip(x2).zip(&self.lengthscales) {
            let z = (a - b) / l;
            acc += z * z;
        }
        self.signal_variance * (-T::lit(0.5) * acc).exp()
    }

    fn variance(&self) -> T {
        self.signal_variance
    }

    fn parameters(&self) -> Vec<(&'static str, Vec<T>)> {
        vec![
            ("signal_variance", vec![self.signal_variance]),
            ("lengthscales", self.lengthscales.clone()),
        ]
    }
}

/// Constants of a kernel restricted to a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConstants<T: Scalar> {
    /// Lipschitz constant `L_k` of `k` in its first argument.
    pub lipschitz_k: T,
    /// `k^{di}(x, x)` per dimension (constant in `x` for stationary kernels).
    pub deriv_kernel_diag: Vec<T>,
    /// Lipschitz constants `L_k^{di}` of the partial derivative kernels.
    pub deriv_kernel_lipschitz: Vec<T>,
    /// `max_{x, x'} k(x, x')`.
    pub max_kernel: T,
}

/// Computes [`KernelConstants`] for `kernel` on `domain`.
///
/// Lipschitz constants are suprema of gradient norms over all lags realizable
/// inside the domain (`|s_i| <= width_i`). They are found by a dense grid
/// search followed by compass-search refinement and inflated by
/// [`SAFETY_FACTOR`]. Zero-lag quantities are exact.
pub fn kernel_constants<T, K>(kernel: &K, domain: &Domain<T>) -> Result<KernelConstants<T>>
where
    T: Scalar,
    K: StationaryKernel<T>,
{
    let d = kernel.dimension();
    if domain.dimension() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: domain.dimension(),
        });
    }
    let widths = domain.widths();
    let lower: Vec<T> = if kernel.axis_symmetric() {
        vec![T::zero(); d]
    } else {
        widths.iter().map(|&w| -w).collect()
    };
    let safety = T::lit(SAFETY_FACTOR);

    let lipschitz_k = maximize_over_box(&lower, &widths, |s| {
        let mut g = vec![T::zero(); s.len()];
        kernel.lag_gradient(s, &mut g);
        norm(&g)
    }) * safety;

    let zero = vec![T::zero(); d];
    let mut deriv_kernel_diag = Vec::with_capacity(d);
    let mut deriv_kernel_lipschitz = Vec::with_capacity(d);
    for i in 0..d {
        deriv_kernel_diag.push(kernel.derivative_at_lag(i, &zero));
        let li = maximize_over_box(&lower, &widths, |s| {
            let mut g = vec![T::zero(); s.len()];
            kernel.derivative_lag_gradient(i, s, &mut g);
            norm(&g)
        });
        deriv_kernel_lipschitz.push(li * safety);
    }

    let out = KernelConstants {
        lipschitz_k,
        deriv_kernel_diag,
        deriv_kernel_lipschitz,
        max_kernel: kernel.variance(),
    };
    let ok = |v: T| v.is_finite() && v >= T::zero();
    if !ok(out.lipschitz_k)
        || !out.deriv_kernel_diag.iter().all(|&v| ok(v))
        || !out.deriv_kernel_lipschitz.iter().all(|&v| ok(v))
        || !ok(out.max_kernel)
    {
        return Err(Error::arg("kernel constants are not finite"));
    }
    Ok(out)
}

/// Maximizes `f` over the box `[lower, upper]`: grid scan, then compass search
/// from the best few grid points.
pub(crate) fn maximize_over_box<T, F>(lower: &[T], upper: &[T], f: F) -> T
where
    T: Scalar,
    F: Fn(&[T]) -> T,
{
    let d = lower.len();
    // Keep the scan tractable in higher dimensions.
    let per_dim = if d <= 4 {
        SEARCH_POINTS_PER_DIM
    } else {
        ((1usize << 22) as f64).powf(1.0 / d as f64).floor().max(4.0) as usize
    };
    let axes: Vec<Vec<T>> = (0..d)
        .map(|i| crate::scalar::linspace(lower[i], upper[i], per_dim))
        .collect();

    const STARTS: usize = 4;
    let mut best: Vec<(T, Vec<T>)> = Vec::with_capacity(STARTS + 1);
    let mut idx = vec![0usize; d];
    let mut point = vec![T::zero(); d];
    let total = per_dim.pow(d as u32);
    for _ in 0..total {
        for k in 0..d {
            point[k] = axes[k][idx[k]];
        }
        let v = f(&point);
        if best.len() < STARTS || v > best[best.len() - 1].0 {
            let pos = best.iter().position(|(b, _)| v > *b).unwrap_or(best.len());
            best.insert(pos, (v, point.clone()));
            best.truncate(STARTS);
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < per_dim {
                break;
            }
            idx[k] = 0;
        }
    }

    let cell: Vec<T> = (0..d)
        .map(|i| (upper[i] - lower[i]) / T::from_count(per_dim - 1))
        .collect();
    let mut overall = best[0].0;
    for (mut val, mut x) in best {
        let mut step = T::one();
        // step is a fraction of the grid cell; stop once it is negligible
        while step > T::lit(1e-9) {
            let mut improved = false;
            for k in 0..d {
                for sign in [T::one(), -T::one()] {
                    let mut cand = x.clone();
                    cand[k] = (cand[k] + sign * step * cell[k]).max(lower[k]).min(upper[k]);
                    let v = f(&cand);
                    if v > val {
                        val = v;
                        x = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= T::lit(0.5);
            }
        }
        if val > overall {
            overall = val;
        }
    }
    overall
}
