//! Marginal-likelihood hyperparameter fitting for the SE-ARD kernel.
//!
//! Parameters are optimized in log space: `log sf2`, `log l_1 .. log l_d` and,
//! unless the noise is fixed, `log sn2`. Each start runs BFGS with an Armijo
//! backtracking line search on the negative log marginal likelihood using
//! analytic gradients.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::kernels::SeArdKernel;
use crate::linalg;
use crate::scalar::Scalar;

/// Log-parameters outside this range are treated as infeasible.
const LOG_PARAM_LIMIT: f64 = 15.0;

#[derive(Debug, Clone)]
pub struct HyperparameterOptions {
    /// Number of starts; the first start is always the initial kernel.
    pub starts: usize,
    pub seed: u64,
    /// Keep the dataset's noise variance instead of optimizing it.
    pub fix_noise: bool,
    pub max_iterations: usize,
    /// Standard deviation of the log-space perturbation of further starts.
    pub perturbation_scale: f64,
    /// Convergence threshold on the max-norm of the log-space gradient.
    pub gradient_tolerance: f64,
}

impl Default for HyperparameterOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            fix_noise: true,
            max_iterations: 200,
            perturbation_scale: 1.0,
            gradient_tolerance: 1e-7,
        }
    }
}

/// Result of [`fit_hyperparameters`].
#[derive(Debug, Clone)]
pub struct FittedHyperparameters<T: Scalar> {
    pub kernel: SeArdKernel<T>,
    pub noise_variance: T,
    pub log_marginal_likelihood: T,
    pub initial_log_marginal_likelihood: T,
    /// False when no start improved on the initial hyperparameters; the
    /// initial kernel is returned unchanged in that case.
    pub improved: bool,
}

/// `log p(y | X, theta)` for the SE-ARD kernel with the dataset's noise.
pub fn log_marginal_likelihood<T: Scalar>(
    dataset: &Dataset<T>,
    kernel: &SeArdKernel<T>,
) -> Result<T> {
    let params = pack(kernel, dataset.noise_variance());
    let obj = Objective {
        dataset,
        fix_noise: true,
        fixed_noise: dataset.noise_variance(),
    };
    obj.evaluate(&params, false)
        .map(|(v, _)| -v)
        .ok_or(Error::NotPositiveDefinite { pivot: 0 })
}

/// Multi-start maximization of the log marginal likelihood.
///
/// Deterministic for a given `options.seed`. The returned likelihood is never
/// below that of `init`.
pub fn fit_hyperparameters<T: Scalar>(
    dataset: &Dataset<T>,
    init: &SeArdKernel<T>,
    options: &HyperparameterOptions,
) -> Result<FittedHyperparameters<T>> {
    if dataset.len() < 2 {
        return Err(Error::arg("hyperparameter fitting needs at least two points"));
    }
    if dataset.dimension() != init.lengthscales().len() {
        return Err(Error::DimensionMismatch {
            expected: init.lengthscales().len(),
            found: dataset.dimension(),
        });
    }
    if !options.fix_noise && dataset.noise_variance() <= T::zero() {
        return Err(Error::arg("free noise optimization needs a positive initial noise"));
    }
    let obj = Objective {
        dataset,
        fix_noise: options.fix_noise,
        fixed_noise: dataset.noise_variance(),
    };
    let x0 = obj.params_of(init);
    let initial = obj.evaluate(&x0, false).map(|(v, _)| v);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<(T, Vec<T>)> = initial.map(|v| (v, x0.clone()));
    for start in 0..options.starts.max(1) {
        let xs: Vec<T> = if start == 0 {
            x0.clone()
        } else {
            x0.iter()
                .map(|&v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + T::lit(z * options.perturbation_scale)
                })
                .collect()
        };
        if let Some((val, x)) = bfgs(&obj, xs, options) {
            if best.as_ref().is_none_or(|(b, _)| val < *b) {
                best = Some((val, x));
            }
        }
    }

    let initial_lml = initial.map(|v| -v).unwrap_or(T::min_value().unwrap_or(-T::one()));
    match best {
        Some((val, x)) if initial.is_none_or(|i| val < i) => {
            let (kernel, noise) = obj.unpack(&x)?;
            Ok(FittedHyperparameters {
                kernel,
                noise_variance: noise,
                log_marginal_likelihood: -val,
                initial_log_marginal_likelihood: initial_lml,
                improved: true,
            })
        }
        _ => Ok(FittedHyperparameters {
            kernel: init.clone(),
            noise_variance: dataset.noise_variance(),
            log_marginal_likelihood: initial_lml,
            initial_log_marginal_likelihood: initial_lml,
            improved: false,
        }),
    }
}

fn pack<T: Scalar>(kernel: &SeArdKernel<T>, noise: T) -> Vec<T> {
    let mut p = vec![kernel.signal_variance().ln()];
    p.extend(kernel.lengthscales().iter().map(|l| l.ln()));
    p.push(if noise > T::zero() { noise.ln() } else { T::lit(-LOG_PARAM_LIMIT) });
    p
}

struct Objective<'a, T: Scalar> {
    dataset: &'a Dataset<T>,
    fix_noise: bool,
    fixed_noise: T,
}

impl<T: Scalar> Objective<'_, T> {
    fn params_of(&self, kernel: &SeArdKernel<T>) -> Vec<T> {
        let mut p = pack(kernel, self.fixed_noise);
        if self.fix_noise {
            p.pop();
        }
        p
    }

    fn unpack(&self, p: &[T]) -> Result<(SeArdKernel<T>, T)> {
        let d = self.dataset.dimension();
        let sf2 = p[0].exp();
        let ls: Vec<T> = p[1..=d].iter().map(|v| v.exp()).collect();
        let noise = if self.fix_noise { self.fixed_noise } else { p[d + 1].exp() };
        Ok((SeArdKernel::new(sf2, ls)?, noise))
    }

    /// Negative log marginal likelihood and (optionally) its gradient.
    fn evaluate(&self, p: &[T], with_grad: bool) -> Option<(T, Vec<T>)> {
        let limit = T::lit(LOG_PARAM_LIMIT);
        if p.iter().any(|v| !v.is_finite() || v.magnitude() > limit) {
            return None;
        }
        let (kernel, noise) = self.unpack(p).ok()?;
        let ds = self.dataset;
        let n = ds.len();
        let d = ds.dimension();
        let k = ds.gram(&kernel);
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += noise;
        }
        let l = linalg::cholesky_lower(&a).ok()?;
        let alpha = linalg::cholesky_solve(&l, ds.targets());
        let log_det_half = (0..n).fold(T::zero(), |acc, i| acc + l[(i, i)].ln());
        let two_pi = T::lit(2.0 * std::f64::consts::PI);
        let lml = -T::lit(0.5) * ds.targets().dot(&alpha)
            - log_det_half
            - T::lit(0.5) * T::from_count(n) * two_pi.ln();
        if !lml.is_finite() {
            return None;
        }
        if !with_grad {
            return Some((-lml, Vec::new()));
        }

        // Q = alpha alpha^T - A^{-1}; dLML/dtheta = 0.5 * sum(Q .* dA/dtheta)
        let mut a_inv = DMatrix::<T>::identity(n, n);
        l.solve_lower_triangular_mut(&mut a_inv);
        l.tr_solve_lower_triangular_mut(&mut a_inv);
        let q = &alpha * alpha.transpose() - a_inv;

        let half = T::lit(0.5);
        let mut grad = vec![T::zero(); p.len()];
        grad[0] = half * q.component_mul(&k).sum();
        for m in 0..d {
            let lm2 = kernel.lengthscales()[m] * kernel.lengthscales()[m];
            let mut acc = T::zero();
            for j in 0..n {
                let xj = ds.point(j)[m];
                for i in 0..n {
                    let diff = ds.point(i)[m] - xj;
                    acc += q[(i, j)] * k[(i, j)] * diff * diff / lm2;
                }
            }
            grad[1 + m] = half * acc;
        }
        if !self.fix_noise {
            grad[d + 1] = half * noise * q.trace();
        }
        Some((-lml, grad.into_iter().map(|g| -g).collect()))
    }
}

/// Minimizes the objective from `x`. Returns the final value and point.
fn bfgs<T: Scalar>(
    obj: &Objective<'_, T>,
    mut x: Vec<T>,
    options: &HyperparameterOptions,
) -> Option<(T, Vec<T>)> {
    let n = x.len();
    let (mut f, g) = obj.evaluate(&x, true)?;
    let mut g = DVector::from_vec(g);
    let mut h = DMatrix::<T>::identity(n, n);
    let gtol = T::lit(options.gradient_tolerance);
    let c1 = T::lit(1e-4);

    for _ in 0..options.max_iterations {
        if g.amax() < gtol {
            break;
        }
        let mut p = -(&h * &g);
        if p.dot(&g) >= T::zero() {
            h = DMatrix::identity(n, n);
            p = -g.clone();
        }
        // cap the log-space step at one unit per coordinate
        let pmax = p.amax();
        if pmax > T::one() {
            p /= pmax;
        }
        let slope = p.dot(&g);
        let mut t = T::one();
        let mut accepted = None;
        while t > T::lit(1e-12) {
            let cand: Vec<T> = x.iter().zip(p.iter()).map(|(&xi, &pi)| xi + t * pi).collect();
            if let Some((fc, gc)) = obj.evaluate(&cand, true) {
                if fc <= f + c1 * t * slope {
                    accepted = Some((cand, fc, DVector::from_vec(gc)));
                    break;
                }
            }
            t *= T::lit(0.5);
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };
        let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(&a, &b)| a - b));
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > T::lit(1e-12) * s.norm() * y.norm() {
            let rho = T::one() / sy;
            let eye = DMatrix::<T>::identity(n, n);
            let left = &eye - (&s * y.transpose()) * rho;
            let right = &eye - (&y * s.transpose()) * rho;
            h = &left * &h * &right + (&s * s.transpose()) * rho;
        }
        let decrease = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        if decrease <= T::lit(1e-14) * (T::one() + f.magnitude()) && g.amax() < gtol * T::lit(1e3) {
            break;
        }
    }
    Some((f, x))
}
