use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::kernels::SeArdKernel;

/// Posterior via an explicit dense inverse of `K + sn2 I`.
pub(crate) fn dense_oracle(
    ds: &Dataset<f64>,
    k: &SeArdKernel<f64>,
    x: &[f64],
) -> (f64, f64) {
    let n = ds.len();
    let mut a = ds.gram(k);
    for i in 0..n {
        a[(i, i)] += ds.noise_variance();
    }
    let inv = a.try_inverse().expect("invertible");
    let kx = DVector::from_fn(n, |i, _| k.eval_pair(ds.point(i), x));
    let mean = (kx.transpose() * &inv * ds.targets())[0];
    let var = k.eval_pair(x, x) - (kx.transpose() * &inv * &kx)[0];
    (mean, var)
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, noise: f64) -> Dataset<f64> {
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let inputs = DMatrix::from_fn(n, d, |i, j| xs[i][j]);
    Dataset::new(inputs, DVector::from_vec(ys), noise).unwrap()
}

#[test]
fn prior_posterior_without_data() {
    let k = SeArdKernel::<f64>::new(2.5, vec![1.0, 0.3]).unwrap();
    let ds = Dataset::empty(2, 0.1).unwrap();
    let post = fit(&ds, &k).unwrap();
    let (m, v) = post.predict(&[0.4, -3.0]).unwrap();
    assert_eq!(m, 0.0);
    assert_eq!(v, 2.5);
    assert_eq!(post.eigen_source(), EigenSource::Empty);
    assert_eq!(post.inverse_norm(), 0.0);
}

#[test]
fn single_point_alpha_and_variance() {
    let k = SeArdKernel::<f64>::new(1.0, vec![1.0]).unwrap();
    let ds = Dataset::from_points(&[vec![0.0]], vec![1.0], 1.0).unwrap();
    let post = fit(&ds, &k).unwrap();
    assert!((post.alpha()[0] - 0.5).abs() < 1e-15);
    let (_, v) = post.predict(&[0.0]).unwrap();
    assert!((v - 0.5).abs() < 1e-15);
    assert!((post.min_eigenvalue() - 2.0).abs() < 1e-12);
}

#[test]
fn matches_dense_inverse_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = SeArdKernel::<f64>::new(1.4, vec![0.8, 1.2]).unwrap();
    let ds = random_dataset(&mut rng, 50, 2, 0.05);
    let post = fit(&ds, &k).unwrap();
    for _ in 0..50 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.5..2.5)).collect();
        let (m, v) = post.predict(&x).unwrap();
        let (mo, vo) = dense_oracle(&ds, &k, &x);
        assert!((m - mo).abs() <= 1e-8 * mo.abs().max(1.0));
        assert!((v - vo).abs() <= 1e-8 * vo.abs().max(1.0));
    }
}

#[test]
fn posterior_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let k = SeArdKernel::<f64>::new(1.0, vec![0.7, 0.7, 1.5]).unwrap();
    let ds = random_dataset(&mut rng, 40, 3, 0.01);
    let post = fit(&ds, &k).unwrap();
    let mut a = ds.gram(&k);
    for i in 0..ds.len() {
        a[(i, i)] += 0.01;
    }
    let l = post.factor();
    let rec = l * l.transpose();
    assert!((&rec - &a).norm() <= 1e-10 * a.norm());
    let resid = &a * post.alpha() - ds.targets();
    assert!(resid.norm() <= 1e-8 * ds.targets().norm());
    assert!(post.min_eigenvalue() >= 0.01);
    assert_eq!(post.eigen_source(), EigenSource::EigenSolve);
}

#[test]
fn batched_prediction_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let k = SeArdKernel::<f64>::new(1.0, vec![0.5]).unwrap();
    let ds = random_dataset(&mut rng, 30, 1, 0.02);
    let post = fit(&ds, &k).unwrap();
    let pts: Vec<Vec<f64>> = (0..600).map(|i| vec![-3.0 + i as f64 * 0.01]).collect();
    let batch = post.predict_many(&pts).unwrap();
    for (p, (m, v)) in pts.iter().zip(batch) {
        let (m1, v1) = post.predict(p).unwrap();
        assert!((m - m1).abs() < 1e-12 && (v - v1).abs() < 1e-12);
    }
}

#[test]
fn interpolates_with_vanishing_noise() {
    let k = SeArdKernel::<f64>::new(1.0, vec![1.0]).unwrap();
    let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.9]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x[0]).cos()).collect();
    let ds = Dataset::from_points(&xs, ys.clone(), 1e-12).unwrap();
    let post = fit(&ds, &k).unwrap();
    for (x, y) in xs.iter().zip(ys) {
        assert!((post.mean(x).unwrap() - y).abs() < 1e-4);
    }
}

#[test]
fn non_positive_definite_reports_pivot() {
    let k = SeArdKernel::<f64>::new(1.0, vec![1.0]).unwrap();
    let ds = Dataset::from_points(&[vec![0.0], vec![0.0]], vec![1.0, 1.0], 0.0).unwrap();
    assert!(matches!(fit(&ds, &k), Err(Error::NotPositiveDefinite { pivot: 1 })));
}

#[test]
fn query_validation() {
    let k = SeArdKernel::<f64>::new(1.0, vec![1.0, 1.0]).unwrap();
    let ds = Dataset::from_points(&[vec![0.0, 0.0]], vec![1.0], 0.1).unwrap();
    let post = fit(&ds, &k).unwrap();
    assert!(post.predict(&[0.0]).is_err());
    assert!(post.predict(&[0.0, f64::NAN]).is_err());
    let bad = Dataset::from_points(&[vec![0.0]], vec![1.0], 0.1).unwrap();
    assert!(fit(&bad, &k).is_err());
}

#[test]
fn variance_clamp() {
    assert_eq!(clamp_variance(-5e-13_f64, 1.0).unwrap(), 0.0);
    assert!(matches!(clamp_variance(-1e-9_f64, 1.0), Err(Error::NegativeVariance(_))));
    assert_eq!(clamp_variance(0.3_f64, 1.0).unwrap(), 0.3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mean_is_linear_in_targets(seed in any::<u64>(), n in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = SeArdKernel::<f64>::new(1.0, vec![0.9, 1.1]).unwrap();
        let ds = random_dataset(&mut rng, n, 2, 0.05);
        let post = fit(&ds, &k).unwrap();
        let post2 = post.refit_with_targets(ds.targets() * 2.0).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let m = post.mean(&x).unwrap();
            let m2 = post2.mean(&x).unwrap();
            prop_assert!((m2 - 2.0 * m).abs() <= 1e-10 * (1.0 + m.abs()));
        }
    }

    #[test]
    fn adding_data_never_increases_variance(seed in any::<u64>(), n in 0usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = SeArdKernel::<f64>::new(1.3, vec![0.6]).unwrap();
        let mut ds = random_dataset(&mut rng, n, 1, 0.01);
        let queries: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let before = fit(&ds, &k).unwrap();
        ds.push(&[rng.random_range(-2.0..2.0)], rng.random_range(-1.0..1.0)).unwrap();
        let after = fit(&ds, &k).unwrap();
        for q in &queries {
            let v0 = before.predict(q).unwrap().1;
            let v1 = after.predict(q).unwrap().1;
            prop_assert!(v1 <= v0 + 1e-12);
            prop_assert!(v0 <= 1.3 + 1e-12);
        }
    }
}

#[test]
fn sample_single_point_moments() {
    let k = SeArdKernel::<f64>::new(1.0, vec![1.0]).unwrap();
    let s = sample_function(&k, &[vec![0.3]], 17, 100_000).unwrap();
    let n = s.nrows() as f64;
    let mean = s.column(0).sum() / n;
    let var = s.column(0).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() <= 0.02, "mean {mean}");
    assert!((0.97..=1.03).contains(&var), "var {var}");
}

#[test]
fn sample_duplicates_and_determinism() {
    let k = SeArdKernel::<f64>::new(1.0, vec![0.5]).unwrap();
    let grid = vec![vec![0.0], vec![0.4], vec![0.0]];
    let a = sample_function(&k, &grid, 5, 50).unwrap();
    let b = sample_function(&k, &grid, 5, 50).unwrap();
    assert_eq!(a, b);
    for r in 0..50 {
        assert_eq!(a[(r, 0)], a[(r, 2)]);
    }
    assert!(sample_function::<f64, _>(&k, &[], 1, 1).is_err());
}

#[test]
fn sample_dense_grid_needs_jitter_escalation_only() {
    let k = SeArdKernel::<f64>::new(1.0, vec![1.0]).unwrap();
    let grid: Vec<Vec<f64>> = (0..512).map(|i| vec![i as f64 / 511.0]).collect();
    let s = sample_function(&k, &grid, 1, 3).unwrap();
    assert_eq!(s.shape(), (3, 512));
}

fn se_sample_dataset(seed: u64) -> Dataset<f64> {
    let truth = SeArdKernel::<f64>::new(1.0, vec![0.5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(0.0..10.0)]).collect();
    let f = sample_function(&truth, &xs, seed + 1, 1).unwrap();
    let noise: f64 = 0.01;
    let ys: Vec<f64> = (0..200)
        .map(|i| {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            f[(0, i)] + noise.sqrt() * z
        })
        .collect();
    Dataset::from_points(&xs, ys, noise).unwrap()
}

#[test]
fn recovers_generating_lengthscale() {
    let ds = se_sample_dataset(100);
    let init = SeArdKernel::<f64>::new(1.0, vec![1.0]).unwrap();
    let fit = fit_hyperparameters(&ds, &init, &HyperparameterOptions::default()).unwrap();
    let l = fit.kernel.lengthscales()[0];
    assert!(l > 0.5 / 1.5 && l < 0.5 * 1.5, "lengthscale {l}");
    assert!(fit.improved);
}

#[test]
fn refit_of_optimum_is_fixed_point() {
    let ds = se_sample_dataset(7);
    let init = SeArdKernel::<f64>::new(1.0, vec![1.0]).unwrap();
    let opts = HyperparameterOptions::default();
    let first = fit_hyperparameters(&ds, &init, &opts).unwrap();
    let second = fit_hyperparameters(&ds, &first.kernel, &opts).unwrap();
    assert!((second.log_marginal_likelihood - first.log_marginal_likelihood).abs() <= 1e-6);
}

#[test]
fn duplicated_data_matches_halved_noise() {
    // stacking the data twice with noise s2 has the same kernel argmax as the
    // original data with noise s2 / 2
    let ds = se_sample_dataset(3);
    let n = ds.len();
    let inputs = ds.inputs();
    let doubled_inputs = DMatrix::from_fn(2 * n, 1, |i, j| inputs[(i % n, j)]);
    let doubled_targets = DVector::from_fn(2 * n, |i, _| ds.targets()[i % n]);
    let doubled = Dataset::new(doubled_inputs, doubled_targets, ds.noise_variance()).unwrap();
    let halved = ds.with_noise_variance(ds.noise_variance() / 2.0).unwrap();

    let init = SeArdKernel::<f64>::new(1.0, vec![1.0]).unwrap();
    let opts = HyperparameterOptions { seed: 99, ..Default::default() };
    let a = fit_hyperparameters(&doubled, &init, &opts).unwrap();
    let b = fit_hyperparameters(&halved, &init, &opts).unwrap();
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    assert!(rel(a.kernel.signal_variance(), b.kernel.signal_variance()) < 1e-4);
    assert!(rel(a.kernel.lengthscales()[0], b.kernel.lengthscales()[0]) < 1e-4);
}

#[test]
fn single_precision_posterior() {
    let k = SeArdKernel::new(1.0_f32, vec![1.0]).unwrap();
    let ds = Dataset::from_points(&[vec![0.0_f32], vec![1.0]], vec![1.0, 0.0], 0.1).unwrap();
    let post = fit(&ds, &k).unwrap();
    let (m, v) = post.predict(&[0.0]).unwrap();
    assert!(m > 0.5 && v < 0.2);
}
