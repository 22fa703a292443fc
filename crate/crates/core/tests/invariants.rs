use proptest::prelude::*;

use gp_bounds::bounds::{beta, certify, noise_norm_bound};
use gp_bounds::gp::fit;
use gp_bounds::kernels::kernel_constants;
use gp_bounds::lipschitz::probabilistic_lipschitz_for;
use gp_bounds::{Dataset, Domain, SeArdKernel};

fn points(flat: &[f64], d: usize) -> Vec<Vec<f64>> {
    flat.chunks(d).map(<[f64]>::to_vec).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_stays_between_zero_and_prior(
        flat in prop::collection::vec(-2.0..2.0f64, 2..40),
        sf2 in 0.2..3.0f64,
        l in 0.2..2.0f64,
        q in prop::collection::vec(-4.0..4.0f64, 2),
    ) {
        let xs = points(&flat[..flat.len() / 2 * 2], 2);
        let ys = xs.iter().map(|p| p[0].sin() + p[1]).collect();
        let post = fit(&Dataset::from_points(&xs, ys, 0.01).unwrap(), &SeArdKernel::new(sf2, vec![l, l]).unwrap()).unwrap();
        let (_, v) = post.predict(&q).unwrap();
        prop_assert!(v >= 0.0 && v <= sf2 * (1.0 + 1e-12), "{v}");
    }

    #[test]
    fn beta_grows_as_delta_or_tau_shrinks(delta in 1e-6..0.5f64, tau in 1e-6..0.5f64) {
        let dom = Domain::new(vec![-1.0, 0.0], vec![2.0, 1.0]).unwrap();
        let b = beta(&dom, tau, delta).unwrap();
        prop_assert!(beta(&dom, tau, delta / 2.0).unwrap() > b);
        prop_assert!(beta(&dom, tau / 2.0, delta).unwrap() >= b);
    }

    #[test]
    fn lipschitz_estimate_grows_as_delta_shrinks(delta in 1e-6..0.5f64, l in 0.2..3.0f64) {
        let k = SeArdKernel::new(1.0, vec![l]).unwrap();
        let dom = Domain::new(vec![0.0], vec![2.0]).unwrap();
        let a = probabilistic_lipschitz_for(&k, &dom, delta).unwrap().value;
        let b = probabilistic_lipschitz_for(&k, &dom, delta / 10.0).unwrap().value;
        prop_assert!(b > a && a > 0.0);
    }

    #[test]
    fn noise_bound_exceeds_mean(n in 1usize..5000, delta in 1e-6..0.9f64) {
        prop_assert!(noise_norm_bound(n, delta).unwrap() > n as f64);
    }

    #[test]
    fn single_precision_tracks_double(
        flat in prop::collection::vec(-2.0..2.0f64, 4..30),
        q in -2.0..2.0f64,
    ) {
        let xs: Vec<Vec<f64>> = flat.iter().map(|&x| vec![x]).collect();
        let ys: Vec<f64> = flat.iter().map(|x| (2.0 * x).cos()).collect();
        let post64 = fit(&Dataset::from_points(&xs, ys.clone(), 0.05).unwrap(), &SeArdKernel::new(1.0, vec![0.7]).unwrap()).unwrap();
        let xs32: Vec<Vec<f32>> = flat.iter().map(|&x| vec![x as f32]).collect();
        let ys32: Vec<f32> = ys.iter().map(|&y| y as f32).collect();
        let post32 = fit(&Dataset::from_points(&xs32, ys32, 0.05).unwrap(), &SeArdKernel::new(1.0f32, vec![0.7]).unwrap()).unwrap();
        let (m64, v64) = post64.predict(&[q]).unwrap();
        let (m32, v32) = post32.predict(&[q as f32]).unwrap();
        prop_assert!((m64 - m32 as f64).abs() < 1e-3, "{m64} {m32}");
        prop_assert!((v64 - v32 as f64).abs() < 1e-3, "{v64} {v32}");
    }
}

#[test]
fn certificate_covers_its_own_training_targets() {
    let xs: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 / 24.0 * 3.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|p| p[0].sin()).collect();
    let k = SeArdKernel::new(1.0, vec![0.8]).unwrap();
    let post = fit(&Dataset::from_points(&xs, ys.clone(), 0.01).unwrap(), &k).unwrap();
    let dom = Domain::new(vec![0.0], vec![3.0]).unwrap();
    let kc = kernel_constants(&k, &dom).unwrap();
    let cert = certify(&post, &kc, &dom, 1e-6, 0.05, 1.0).unwrap();
    for (x, y) in xs.iter().zip(ys) {
        assert!((post.mean(x).unwrap() - y).abs() <= cert.certified_eta(x).unwrap());
    }
    assert!(cert.certified_eta(&[3.5]).is_err());
}
