//! Draws from the GP prior on a finite set of points.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::StationaryKernel;
use crate::linalg;
use crate::scalar::Scalar;

/// Diagonal jitter tried first when factorizing the prior Gram matrix.
pub const DEFAULT_JITTER: f64 = 1e-10;
/// Largest jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-6;

/// Draws `count` prior sample paths evaluated on `grid`.
///
/// Row `r` of the result is draw `r`; column `j` corresponds to `grid[j]`.
/// Repeated grid points share a single latent value, so they receive
/// identical samples.
pub fn sample_function<T, K>(kernel: &K, grid: &[Vec<T>], seed: u64, count: usize) -> Result<DMatrix<T>>
where
    T: Scalar,
    K: StationaryKernel<T>,
{
    if grid.is_empty() {
        return Err(Error::arg("sampling grid is empty"));
    }
    if let Some(p) = grid.iter().find(|p| p.len() != kernel.dimension()) {
        return Err(Error::DimensionMismatch {
            expected: kernel.dimension(),
            found: p.len(),
        });
    }

    // map every grid point to its first exact duplicate
    let mut unique: Vec<&[T]> = Vec::new();
    let mut slot = Vec::with_capacity(grid.len());
    for p in grid {
        match unique.iter().position(|u| *u == p.as_slice()) {
            Some(i) => slot.push(i),
            None => {
                slot.push(unique.len());
                unique.push(p);
            }
        }
    }

    let m = unique.len();
    let gram = DMatrix::from_fn(m, m, |i, j| kernel.eval_pair(unique[i], unique[j]));
    let mut jitter = DEFAULT_JITTER;
    let factor = loop {
        let mut a = gram.clone();
        for i in 0..m {
            a[(i, i)] += T::lit(jitter);
        }
        match linalg::cholesky_lower(&a) {
            Ok(l) => break l,
            Err(e) => {
                jitter *= 10.0;
                if jitter > MAX_JITTER * (1.0 + 1e-9) {
                    return Err(e);
                }
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(m, count, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        T::lit(v)
    });
    let latent = factor * z;
    Ok(DMatrix::from_fn(count, grid.len(), |r, j| latent[(slot[j], r)]))
}
