//! Uniform error bounds for GP regression.
//!
//! With probability at least `1 - delta`,
//!
//! ```text
//! |f(x) - nu_N(x)| <= sqrt(beta(tau)) * sigma_N(x) + gamma(tau)   for all x in X
//! beta(tau)  = 2 log(M(tau, X) / delta)
//! gamma(tau) = (L_nu + L_f) tau + sqrt(beta(tau)) * omega_sigma(tau)
//! ```
//!
//! where `M` is a covering number of the domain, `L_nu` a Lipschitz constant
//! of the posterior mean, `omega_sigma` a modulus of continuity of the
//! posterior standard deviation and `L_f` a Lipschitz constant of the unknown
//! function.

mod asymptotics;
mod export;

pub use asymptotics::{
    asymptotic_harness, decay_slope, evaluation_grid, training_grid, AsymptoticRow, HarnessConfig,
};
pub use export::{CertificateRecord, ConstantProvenance, CERTIFICATE_SCHEMA};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::gp::{EigenSource, Posterior};
use crate::kernels::{KernelConstants, StationaryKernel};
use crate::scalar::Scalar;

/// Grid-based upper bound on the `tau`-covering number of a box.
///
/// Stored factor-wise because the product overflows integer types for small
/// `tau` in a few dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringNumber<T: Scalar> {
    factors: Vec<T>,
}

impl<T: Scalar> CoveringNumber<T> {
    /// Per-axis point counts `ceil(1 + w_i / tau)`.
    pub fn factors(&self) -> &[T] {
        &self.factors
    }

    /// Natural logarithm of the count.
    pub fn ln(&self) -> T {
        self.factors.iter().fold(T::zero(), |acc, f| acc + f.ln())
    }

    /// The count, if it fits in a `u128`.
    pub fn count(&self) -> Option<u128> {
        self.factors.iter().try_fold(1u128, |acc, f| {
            let v = f.as_f64();
            if v >= u128::MAX as f64 {
                None
            } else {
                acc.checked_mul(v as u128)
            }
        })
    }
}

/// `prod_i ceil(1 + w_i / tau)` for the edge lengths `w_i` of `domain`.
///
/// For a hypercube of edge `r` this is `(1 + r / tau)^d` rounded up per axis.
pub fn covering_number_bound<T: Scalar>(domain: &Domain<T>, tau: T) -> Result<CoveringNumber<T>> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::arg("tau must be positive and finite"));
    }
    let factors = domain
        .widths()
        .into_iter()
        .map(|w| (T::one() + w / tau).ceil())
        .collect();
    Ok(CoveringNumber { factors })
}

fn check_delta<T: Scalar>(delta: T) -> Result<()> {
    if delta > T::zero() && delta < T::one() {
        Ok(())
    } else {
        Err(Error::arg("delta must lie in (0, 1)"))
    }
}

/// `beta = 2 log(M / delta)` for a given covering number.
pub fn beta_from_covering<T: Scalar>(covering: &CoveringNumber<T>, delta: T) -> Result<T> {
    check_delta(delta)?;
    Ok(T::lit(2.0) * (covering.ln() - delta.ln()))
}

/// `beta(tau) = 2 log(M(tau, X) / delta)`.
pub fn beta<T: Scalar>(domain: &Domain<T>, tau: T, delta: T) -> Result<T> {
    beta_from_covering(&covering_number_bound(domain, tau)?, delta)
}

/// Lipschitz bound of the posterior mean, `L_k sqrt(N) ||alpha||`.
pub fn mean_lipschitz_bound<T, K>(posterior: &Posterior<T, K>, constants: &KernelConstants<T>) -> T
where
    T: Scalar,
    K: StationaryKernel<T>,
{
    constants.lipschitz_k * T::from_count(posterior.len()).sqrt() * posterior.alpha().norm()
}

/// Modulus of continuity of the posterior standard deviation,
/// `sqrt(2 tau L_k (1 + N ||(K + sn2 I)^{-1}|| max k))`.
///
/// The inverse norm is `1 / lambda_min` as recorded in the posterior.
pub fn std_modulus<T, K>(posterior: &Posterior<T, K>, constants: &KernelConstants<T>, tau: T) -> Result<T>
where
    T: Scalar,
    K: StationaryKernel<T>,
{
    if !(tau >= T::zero()) || !tau.is_finite() {
        return Err(Error::arg("tau must be non-negative and finite"));
    }
    let n = T::from_count(posterior.len());
    let inner = T::one() + n * posterior.inverse_norm() * constants.max_kernel;
    Ok((T::lit(2.0) * tau * constants.lipschitz_k * inner).sqrt())
}

/// Owned numbers of a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateConstants<T: Scalar> {
    pub tau: T,
    pub delta: T,
    pub beta: T,
    pub gamma: T,
    pub mean_lipschitz: T,
    pub std_modulus_at_tau: T,
    pub f_lipschitz: T,
    /// `ln M(tau, X)`.
    pub log_covering: T,
    pub inverse_norm_source: EigenSource,
}

impl<T: Scalar> CertificateConstants<T> {
    /// `sqrt(beta) * sigma + gamma`.
    pub fn eta_from_std(&self, sigma: T) -> T {
        self.beta.sqrt() * sigma + self.gamma
    }

    /// Re-attaches the constants to the posterior they were computed for.
    pub fn attach<'p, K>(&self, posterior: &'p Posterior<T, K>, domain: &Domain<T>) -> ErrorCertificate<'p, T, K> {
        ErrorCertificate {
            constants: self.clone(),
            domain: domain.clone(),
            posterior,
        }
    }
}

/// Probabilistic uniform error bound for one posterior on one domain.
#[derive(Debug, Clone)]
pub struct ErrorCertificate<'p, T: Scalar, K> {
    constants: CertificateConstants<T>,
    domain: Domain<T>,
    posterior: &'p Posterior<T, K>,
}

impl<'p, T: Scalar, K: StationaryKernel<T>> ErrorCertificate<'p, T, K> {
    pub fn constants(&self) -> &CertificateConstants<T> {
        &self.constants
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    pub fn posterior(&self) -> &'p Posterior<T, K> {
        self.posterior
    }

    pub fn tau(&self) -> T {
        self.constants.tau
    }

    pub fn delta(&self) -> T {
        self.constants.delta
    }

    pub fn beta(&self) -> T {
        self.constants.beta
    }

    pub fn gamma(&self) -> T {
        self.constants.gamma
    }

    pub fn mean_lipschitz(&self) -> T {
        self.constants.mean_lipschitz
    }

    pub fn std_modulus_at_tau(&self) -> T {
        self.constants.std_modulus_at_tau
    }

    pub fn f_lipschitz(&self) -> T {
        self.constants.f_lipschitz
    }

    /// `eta(x) = sqrt(beta) sigma_N(x) + gamma`.
    ///
    /// Defined for any `x`; only certified inside [`domain`](Self::domain).
    pub fn eta(&self, x: &[T]) -> Result<T> {
        let sigma = self.posterior.std_dev(x)?;
        Ok(self.constants.eta_from_std(sigma))
    }

    /// Bound at `x`, refusing points outside the certified domain.
    pub fn certified_eta(&self, x: &[T]) -> Result<T> {
        if !self.domain.contains(x) {
            return Err(Error::OutsideDomain);
        }
        self.eta(x)
    }
}

/// Builds the uniform error certificate for `posterior` on `domain`.
pub fn certify<'p, T, K>(
    posterior: &'p Posterior<T, K>,
    constants: &KernelConstants<T>,
    domain: &Domain<T>,
    tau: T,
    delta: T,
    f_lipschitz: T,
) -> Result<ErrorCertificate<'p, T, K>>
where
    T: Scalar,
    K: StationaryKernel<T>,
{
    if domain.dimension() != posterior.dimension() {
        return Err(Error::DimensionMismatch {
            expected: posterior.dimension(),
            found: domain.dimension(),
        });
    }
    if !(f_lipschitz >= T::zero()) || !f_lipschitz.is_finite() {
        return Err(Error::arg("f_lipschitz must be finite and non-negative"));
    }
    let covering = covering_number_bound(domain, tau)?;
    let beta = beta_from_covering(&covering, delta)?;
    let mean_lipschitz = mean_lipschitz_bound(posterior, constants);
    let modulus = std_modulus(posterior, constants, tau)?;
    let gamma = (mean_lipschitz + f_lipschitz) * tau + beta.sqrt() * modulus;
    if !gamma.is_finite() || !beta.is_finite() {
        return Err(Error::arg("certificate constants are not finite"));
    }
    Ok(ErrorCertificate {
        constants: CertificateConstants {
            tau,
            delta,
            beta,
            gamma,
            mean_lipschitz,
            std_modulus_at_tau: modulus,
            f_lipschitz,
            log_covering: covering.ln(),
            inverse_norm_source: posterior.eigen_source(),
        },
        domain: domain.clone(),
        posterior,
    })
}

/// Certifies several output dimensions jointly by splitting `delta` evenly
/// (union bound).
pub fn certify_multi<'p, T, K>(
    posteriors: &[&'p Posterior<T, K>],
    constants: &[KernelConstants<T>],
    domain: &Domain<T>,
    tau: T,
    delta: T,
    f_lipschitz: &[T],
) -> Result<Vec<ErrorCertificate<'p, T, K>>>
where
    T: Scalar,
    K: StationaryKernel<T>,
{
    let outputs = posteriors.len();
    if outputs == 0 {
        return Err(Error::arg("at least one output is required"));
    }
    if constants.len() != outputs || f_lipschitz.len() != outputs {
        return Err(Error::arg("one set of constants and one L_f per output is required"));
    }
    if let Some(p) = posteriors.iter().find(|p| p.dimension() != domain.dimension()) {
        return Err(Error::DimensionMismatch {
            expected: domain.dimension(),
            found: p.dimension(),
        });
    }
    check_delta(delta)?;
    let split = delta / T::from_count(outputs);
    posteriors
        .iter()
        .zip(constants)
        .zip(f_lipschitz)
        .map(|((p, c), &lf)| certify(p, c, domain, tau, split, lf))
        .collect()
}

/// Chi-square tail bound `2 sqrt(N eta) + 2 eta + N` with
/// `eta = log(pi^2 N^2 / (3 delta))`.
///
/// Bounds `||xi||^2 / sn2` for `N` i.i.d. noise terms simultaneously for all
/// `N >= 1` with probability at least `1 - delta / 2`.
pub fn noise_norm_bound<T: Scalar>(n: usize, delta: T) -> Result<T> {
    if n == 0 {
        return Err(Error::arg("noise norm bound needs N >= 1"));
    }
    check_delta(delta)?;
    let nn = T::from_count(n);
    let pi = T::pi();
    let eta = (pi * pi * nn * nn / (T::lit(3.0) * delta)).ln();
    Ok(T::lit(2.0) * (nn * eta).sqrt() + T::lit(2.0) * eta + nn)
}
