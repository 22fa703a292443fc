//! Growing-data harness: error and bound as the number of gridded
//! observations increases with `tau(N) = tau0 / N^2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{covering_number_bound, noise_norm_bound, std_modulus};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::gp::{fit, Dataset};
use crate::kernels::{kernel_constants, StationaryKernel};
use crate::scalar::Scalar;

/// Settings of [`asymptotic_harness`].
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig<T: Scalar> {
    /// Strictly increasing training set sizes.
    pub schedule: Vec<usize>,
    pub delta: T,
    pub noise_variance: T,
    /// `tau(N) = tau0 / N^2`.
    pub tau0: T,
    /// Bound on `sup |f|` over the domain.
    pub f_max: T,
    /// Lipschitz constant of the truth.
    pub f_lipschitz: T,
    pub seed: u64,
    /// Largest `N` solved densely; larger entries fail with a capacity error.
    pub dense_cap: usize,
    pub eval_points_per_dim: usize,
    pub max_eval_points: usize,
}

impl<T: Scalar> HarnessConfig<T> {
    pub fn new(schedule: Vec<usize>, delta: T, noise_variance: T, f_max: T, f_lipschitz: T) -> Self {
        Self {
            schedule,
            delta,
            noise_variance,
            tau0: T::one(),
            f_max,
            f_lipschitz,
            seed: 0,
            dense_cap: 4000,
            eval_points_per_dim: 400,
            max_eval_points: 100_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::arg("schedule must not be empty"));
        }
        if self.schedule[0] == 0 || self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("schedule must be strictly increasing and positive"));
        }
        let largest = *self.schedule.last().unwrap_or(&0);
        if largest > self.dense_cap {
            return Err(Error::Capacity {
                requested: largest,
                capacity: self.dense_cap,
            });
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::arg("delta must lie in (0, 1)"));
        }
        let nonneg = |v: T| v >= T::zero() && v.is_finite();
        if !nonneg(self.noise_variance) || !nonneg(self.f_max) || !nonneg(self.f_lipschitz) {
            return Err(Error::arg("noise variance, f_max and f_lipschitz must be finite and >= 0"));
        }
        if !(self.tau0 > T::zero()) || !self.tau0.is_finite() {
            return Err(Error::arg("tau0 must be positive"));
        }
        if self.eval_points_per_dim == 0 || self.max_eval_points == 0 {
            return Err(Error::arg("evaluation grid must not be empty"));
        }
        Ok(())
    }
}

/// One row of the harness table.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticRow<T: Scalar> {
    pub n: usize,
    pub tau: T,
    /// `max |f - nu_N|` over the evaluation grid.
    pub sup_error: T,
    /// `max sqrt(beta_N) sigma_N + gamma_N` over the evaluation grid.
    pub bound: T,
    pub beta_n: T,
    pub gamma_n: T,
    pub max_sigma: T,
    pub mean_lipschitz: T,
}

/// Evaluation grid with `min(per_dim, floor(max_total^(1/d)))` points per axis.
pub fn evaluation_grid<T: Scalar>(domain: &Domain<T>, per_dim: usize, max_total: usize) -> Result<Vec<Vec<T>>> {
    let d = domain.dimension();
    let mut m = (max_total as f64).powf(1.0 / d as f64).floor() as usize;
    // guard against powf round-off in both directions
    while m > 1 && m.checked_pow(d as u32).is_none_or(|t| t > max_total) {
        m -= 1;
    }
    while (m + 1).checked_pow(d as u32).is_some_and(|t| t <= max_total) {
        m += 1;
    }
    domain.grid(&vec![m.clamp(1, per_dim.max(1)); d])
}

/// `n` points of the tensor grid with `ceil(n^(1/d))` points per axis.
///
/// When `n` is not a perfect power the points are taken at evenly strided
/// grid indices, so the result always has exactly `n` distinct points.
pub fn training_grid<T: Scalar>(domain: &Domain<T>, n: usize) -> Result<Vec<Vec<T>>> {
    if n == 0 {
        return Err(Error::arg("training grid needs at least one point"));
    }
    let d = domain.dimension();
    let mut m = (n as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    while m.pow(d as u32) < n {
        m += 1;
    }
    while m > 1 && (m - 1).pow(d as u32) >= n {
        m -= 1;
    }
    let full = domain.grid(&vec![m; d])?;
    if full.len() == n {
        return Ok(full);
    }
    let total = full.len();
    Ok((0..n).map(|i| full[i * (total - 1) / (n - 1).max(1)].clone()).collect())
}

/// Runs the growing-data experiment for every `N` of the schedule.
///
/// Each row uses `tau = tau0 / N^2`,
/// `beta_N = 2 log(M(tau) pi^2 N^2 / (3 delta))` and a data-independent
/// Lipschitz bound of the mean,
/// `L_k (N f_max + sqrt(N c_N) sn) / sn^2` with `c_N` from
/// [`noise_norm_bound`]. Without noise the bound computed from the fitted
/// posterior is used instead.
pub fn asymptotic_harness<T, K, F>(
    kernel: &K,
    domain: &Domain<T>,
    truth: F,
    config: &HarnessConfig<T>,
) -> Result<Vec<AsymptoticRow<T>>>
where
    T: Scalar,
    K: StationaryKernel<T>,
    F: Fn(&[T]) -> T,
{
    config.validate()?;
    if kernel.dimension() != domain.dimension() {
        return Err(Error::DimensionMismatch {
            expected: domain.dimension(),
            found: kernel.dimension(),
        });
    }
    let constants = kernel_constants(kernel, domain)?;
    let grid = evaluation_grid(domain, config.eval_points_per_dim, config.max_eval_points)?;
    let truth_on_grid: Vec<T> = grid.iter().map(|x| truth(x)).collect();
    if truth_on_grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("truth is not finite on the evaluation grid"));
    }
    let sn2 = config.noise_variance;
    let sn = sn2.sqrt();
    let pi2 = T::pi() * T::pi();

    let mut rows = Vec::with_capacity(config.schedule.len());
    for &n in &config.schedule {
        let points = training_grid(domain, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(n as u64);
        let targets: Vec<T> = points
            .iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                truth(x) + sn * T::lit(z)
            })
            .collect();
        let dataset = Dataset::from_points(&points, targets, sn2)?;
        let posterior = fit(&dataset, kernel)?;

        let nn = T::from_count(n);
        let tau = config.tau0 / (nn * nn);
        let covering = covering_number_bound(domain, tau)?;
        let beta_n = T::lit(2.0) * (covering.ln() + (pi2 * nn * nn / (T::lit(3.0) * config.delta)).ln());
        let mean_lipschitz = if sn2 > T::zero() {
            let chi = noise_norm_bound(n, config.delta)?;
            constants.lipschitz_k * (nn * config.f_max + (nn * chi).sqrt() * sn) / sn2
        } else {
            super::mean_lipschitz_bound(&posterior, &constants)
        };
        let modulus = std_modulus(&posterior, &constants, tau)?;
        let gamma_n = (mean_lipschitz + config.f_lipschitz) * tau + beta_n.sqrt() * modulus;

        let preds = posterior.predict_many(&grid)?;
        let mut sup_error = T::zero();
        let mut max_sigma = T::zero();
        for ((mean, var), f) in preds.iter().zip(&truth_on_grid) {
            sup_error = sup_error.max((*f - *mean).magnitude());
            max_sigma = max_sigma.max(var.sqrt());
        }
        rows.push(AsymptoticRow {
            n,
            tau,
            sup_error,
            bound: beta_n.sqrt() * max_sigma + gamma_n,
            beta_n,
            gamma_n,
            max_sigma,
            mean_lipschitz,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log(bound)` against `log(log(N))`.
///
/// Rows with `N < 2` or a non-positive bound are skipped; `None` when fewer
/// than two usable rows remain.
pub fn decay_slope<T: Scalar>(rows: &[AsymptoticRow<T>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.n >= 2 && r.bound > T::zero())
        .map(|r| ((r.n as f64).ln().ln(), r.bound.as_f64().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
