//! High-probability Lipschitz constants of GP sample paths.
//!
//! The partial derivatives of a sample are again GP samples, with the
//! derivative kernels `k^{di}` as covariances. Bounding the supremum of each
//! derivative process (expected supremum by metric entropy, concentration by
//! Borell-TIS) and combining the `d` bounds yields a constant that dominates
//! the Lipschitz constant of a sample with probability `1 - delta_l`.

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::kernels::{kernel_constants, KernelConstants, StationaryKernel};
use crate::scalar::{norm, Scalar};

fn check_nonneg<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must be finite and non-negative")))
    }
}

fn check_probability<T: Scalar>(delta: T) -> Result<()> {
    if delta > T::zero() && delta < T::one() {
        Ok(())
    } else {
        Err(Error::arg("probability must lie in (0, 1)"))
    }
}

/// `12 sqrt(6d) max(sqrt(kernel_max), sqrt(diameter * lipschitz))`.
///
/// Bounds `E[sup f]` for a GP whose kernel has maximum `kernel_max` and
/// Lipschitz constant `lipschitz` on a set of the given diameter.
pub fn expected_sup_bound<T: Scalar>(kernel_max: T, lipschitz: T, diameter: T, d: usize) -> Result<T> {
    check_nonneg("kernel_max", kernel_max)?;
    check_nonneg("lipschitz", lipschitz)?;
    check_nonneg("diameter", diameter)?;
    if d == 0 {
        return Err(Error::arg("dimension must be at least 1"));
    }
    let lead = T::lit(12.0) * (T::lit(6.0) * T::from_count(d)).sqrt();
    Ok(lead * kernel_max.sqrt().max((diameter * lipschitz).sqrt()))
}

/// [`expected_sup_bound`] plus `sqrt(2 log(1/delta)) sqrt(kernel_max)`; holds
/// for `sup f` with probability `1 - delta`.
pub fn sup_bound<T: Scalar>(kernel_max: T, lipschitz: T, diameter: T, d: usize, delta: T) -> Result<T> {
    check_probability(delta)?;
    let expected = expected_sup_bound(kernel_max, lipschitz, diameter, d)?;
    Ok(expected + (-T::lit(2.0) * delta.ln()).sqrt() * kernel_max.sqrt())
}

/// Probabilistic Lipschitz constant of a GP sample on a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate<T: Scalar> {
    /// Euclidean norm of `per_dimension`.
    pub value: T,
    pub delta_l: T,
    /// Bounds on `sup |df/dx_i|`.
    pub per_dimension: Vec<T>,
    pub diameter: T,
}

/// Lipschitz constant valid with probability `1 - delta_l`.
///
/// Entry `i` is `sqrt(2 log(2d/delta_l)) sqrt(k^{di}(x,x))
/// + 12 sqrt(6d) max(sqrt(k^{di}(x,x)), sqrt(r L_k^{di}))` with `r` the
/// domain diameter.
pub fn probabilistic_lipschitz<T: Scalar>(
    constants: &KernelConstants<T>,
    domain: &Domain<T>,
    delta_l: T,
) -> Result<LipschitzEstimate<T>> {
    check_probability(delta_l)?;
    let d = domain.dimension();
    if constants.deriv_kernel_diag.len() != d || constants.deriv_kernel_lipschitz.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: constants.deriv_kernel_diag.len(),
        });
    }
    let r = domain.diameter();
    let conc = (T::lit(2.0) * (T::lit(2.0) * T::from_count(d) / delta_l).ln()).sqrt();
    let per_dimension = constants
        .deriv_kernel_diag
        .iter()
        .zip(&constants.deriv_kernel_lipschitz)
        .map(|(&diag, &lip)| Ok(conc * diag.sqrt() + expected_sup_bound(diag, lip, r, d)?))
        .collect::<Result<Vec<T>>>()?;
    Ok(LipschitzEstimate {
        value: norm(&per_dimension),
        delta_l,
        per_dimension,
        diameter: r,
    })
}

/// [`probabilistic_lipschitz`] with the kernel constants computed on `domain`.
pub fn probabilistic_lipschitz_for<T, K>(kernel: &K, domain: &Domain<T>, delta_l: T) -> Result<LipschitzEstimate<T>>
where
    T: Scalar,
    K: StationaryKernel<T>,
{
    probabilistic_lipschitz(&kernel_constants(kernel, domain)?, domain, delta_l)
}

/// Largest forward-difference gradient norm of values on a tensor grid.
///
/// `values` are ordered last axis fastest (as [`Domain::grid`]); `spacings`
/// are the per-axis grid steps. Nodes on the upper boundary of any axis are
/// skipped, so every estimate uses `d` forward differences.
pub fn max_grid_slope<T: Scalar>(values: &[T], counts: &[usize], spacings: &[T]) -> Result<T> {
    let d = counts.len();
    if spacings.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: spacings.len(),
        });
    }
    if counts.iter().product::<usize>() != values.len() {
        return Err(Error::arg("value count does not match the grid"));
    }
    if counts.iter().any(|&c| c < 2) || spacings.iter().any(|&h| !(h > T::zero())) {
        return Err(Error::arg("grid needs at least two points and positive spacing per axis"));
    }
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * counts[k + 1];
    }
    let mut best = T::zero();
    let mut grad = vec![T::zero(); d];
    'nodes: for (flat, &v) in values.iter().enumerate() {
        for k in 0..d {
            let idx = (flat / strides[k]) % counts[k];
            if idx + 1 == counts[k] {
                continue 'nodes;
            }
            grad[k] = (values[flat + strides[k]] - v) / spacings[k];
        }
        best = best.max(norm(&grad));
    }
    Ok(best)
}
