use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bounds::certify;
use crate::domain::Domain;
use crate::gp::{fit, Dataset};
use crate::kernels::{kernel_constants, SeArdKernel};

fn synthetic_posterior() -> (Posterior<f64, SeArdKernel<f64>>, Domain<f64>) {
    let train = Domain::new(vec![0.0, -3.0], vec![3.0, 3.0]).unwrap();
    let pts = train.grid(&[9, 9]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ys: Vec<f64> = pts
        .iter()
        .map(|p| SyntheticPlant::f(p) + 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let ds = Dataset::from_points(&pts, ys, 0.01).unwrap();
    let k = SeArdKernel::new(1.0, vec![1.5, 2.0]).unwrap();
    let dom = Domain::new(vec![-6.0, -4.0], vec![4.0, 4.0]).unwrap();
    (fit(&ds, &k).unwrap(), dom)
}

#[test]
fn synthetic_plant_values() {
    assert_eq!(SyntheticPlant::f(&[0.0, 0.0]), 1.5);
    for x2 in [-3.0, 0.0, 2.5] {
        let v = SyntheticPlant::f(&[std::f64::consts::FRAC_PI_2, x2]);
        assert!((v - 1.0 / (1.0 + (-x2 as f64).exp())).abs() < 1e-15);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let x = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
        let v = SyntheticPlant::f(&x);
        assert!(v > 0.0 && v < 3.0);
    }
    let mut dx = [0.0; 2];
    Plant::<f64>::dynamics(&SyntheticPlant, &[0.0, 0.7], &[0.25], &mut dx);
    assert_eq!(dx[0], 0.7);
    assert!((dx[1] - SyntheticPlant::f(&[0.0, 0.7]) - 0.25).abs() < 1e-15);
}

#[test]
fn gains_validation() {
    assert!(ControllerGains::new(0.0, 1.0).is_err());
    assert!(ControllerGains::new(1.0, 0.0).is_err());
    assert!(ControllerGains::new(1.0, f64::INFINITY).is_err());
    let g = ControllerGains::new(2.0, 1.0).unwrap();
    assert!((g.radius_scale() - 2.0 * 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn policy_arithmetic() {
    let g = ControllerGains::new(2.0, 1.0).unwrap();
    let reference = ReferencePoint {
        position: vec![0.0],
        velocity: vec![0.0],
        acceleration: vec![0.0],
    };
    let u = policy(&[1.0, 1.0], &[0.0], &reference, &g);
    assert_eq!(u, vec![-5.0]);

    let x = [0.3_f64, -0.2];
    let f = SyntheticPlant::f(&x);
    let on_track = ReferencePoint {
        position: vec![0.3],
        velocity: vec![-0.2],
        acceleration: vec![0.9],
    };
    let u = policy(&x, &[f], &on_track, &g);
    assert!((u[0] - (0.9 - f)).abs() < 1e-15);
}

#[test]
fn sinusoid_derivatives_are_consistent() {
    let r = SinusoidalReference::new(vec![2.0, 0.5], vec![1.0, 1.7], vec![0.0, 0.3], vec![0.0, -0.2]).unwrap();
    let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.37).collect();
    assert!(reference_consistency(&r, &times, 1e-5) <= 1e-6);
    assert!(SinusoidalReference::new(vec![1.0], vec![], vec![], vec![]).is_err());
    let p = SinusoidalReference::sine(2.0).at(std::f64::consts::FRAC_PI_2);
    assert!((p.position[0] - 2.0).abs() < 1e-15);
}

#[test]
fn perfect_model_keeps_zero_error() {
    let plant = SyntheticPlant;
    let reference = SinusoidalReference::sine(2.0);
    let model = ExactModel(&plant);
    let gains = ControllerGains::new(2.0, 1.0).unwrap();
    let controller = FeedbackLinearizing {
        model: &model,
        reference: &reference,
        gains,
    };
    let opts = SimulationOptions::new(10.0, 1e-3, 1.0);
    let trace = simulate(&plant, &controller, &reference, &opts, &[0.0, 2.0]).unwrap();
    for k in 0..trace.len() {
        assert!(trace.error_norm(k) <= 1e-9);
    }
}

#[test]
fn zero_model_tracks_double_integrator() {
    let plant = FnPlant::new(1, |_: &[f64], out: &mut [f64]| out[0] = 0.0);
    let reference = SinusoidalReference::sine(1.0);
    let gains = ControllerGains::new(3.0, 1.5).unwrap();
    let controller = FeedbackLinearizing {
        model: &ZeroModel(1),
        reference: &reference,
        gains,
    };
    let opts = SimulationOptions::new(15.0, 1e-3, 1.5);
    let trace = simulate(&plant, &controller, &reference, &opts, &[1.0, -1.0]).unwrap();
    // error modes decay like exp(-1.5 t) and exp(-3 t)
    let last = trace.len() - 1;
    assert!(trace.error_norm(last) < 1e-8);
    assert!(trace.error_norm(0) > 1.0);
}

#[test]
fn damped_oscillator_matches_closed_form() {
    let plant = FnPlant::new(1, |_: &[f64], out: &mut [f64]| out[0] = 0.0);
    let controller = |_t: f64, x: &[f64], u: &mut [f64]| {
        u[0] = -x[0] - x[1];
        Ok(())
    };
    let reference = SinusoidalReference::constant(vec![0.0]);
    let opts = SimulationOptions::new(1.0, 1e-4, 1.0);
    let trace = simulate(&plant, &controller, &reference, &opts, &[1.0, 0.0]).unwrap();
    let w = 3f64.sqrt() / 2.0;
    let t = 1.0_f64;
    let x = (-t / 2.0).exp() * ((w * t).cos() + (w * t).sin() / (2.0 * w));
    let v = -(-t / 2.0).exp() * (w * t).sin() / w;
    let end = trace.states.last().unwrap();
    assert!((trace.times.last().unwrap() - 1.0).abs() < 1e-12);
    assert!((end[0] - x).abs() < 1e-6 && (end[1] - v).abs() < 1e-6);
}

#[test]
fn rk4_convergence_order() {
    let (post, _) = synthetic_posterior();
    let model = GpModel::new(vec![&post]).unwrap();
    let reference = SinusoidalReference::sine(2.0);
    let gains = ControllerGains::new(2.0, 1.0).unwrap();
    let controller = FeedbackLinearizing {
        model: &model,
        reference: &reference,
        gains,
    };
    let finals: Vec<Vec<f64>> = [0.08, 0.04, 0.02]
        .iter()
        .map(|&dt| {
            let opts = SimulationOptions::new(4.0, dt, 1.0);
            simulate(&SyntheticPlant, &controller, &reference, &opts, &[-1.0, 1.0])
                .unwrap()
                .states
                .pop()
                .unwrap()
        })
        .collect();
    let d1 = crate::scalar::distance(&finals[0], &finals[1]);
    let d2 = crate::scalar::distance(&finals[1], &finals[2]);
    let order = (d1 / d2).log2();
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn filtered_state_derivative_identity() {
    let (post, _) = synthetic_posterior();
    let model = GpModel::new(vec![&post]).unwrap();
    let reference = SinusoidalReference::sine(2.0);
    let gains = ControllerGains::new(2.0, 1.0).unwrap();
    let controller = FeedbackLinearizing {
        model: &model,
        reference: &reference,
        gains,
    };
    let dt = 1e-3;
    let opts = SimulationOptions::new(3.0, dt, 1.0);
    let trace = simulate(&SyntheticPlant, &controller, &reference, &opts, &[-2.0, 1.0]).unwrap();
    let mut worst = 0.0_f64;
    for k in 1..trace.len() - 1 {
        let r_dot = (trace.filtered_state[k + 1][0] - trace.filtered_state[k - 1][0]) / (2.0 * dt);
        let x = &trace.states[k];
        let expected = SyntheticPlant::f(x) - post.mean(x).unwrap() - 2.0 * trace.filtered_state[k][0];
        worst = worst.max((r_dot - expected).abs());
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn divergence_is_reported() {
    let plant = FnPlant::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[1] * x[1] * x[1]);
    let controller = |_t: f64, _x: &[f64], u: &mut [f64]| {
        u[0] = 0.0;
        Ok(())
    };
    let reference = SinusoidalReference::constant(vec![0.0]);
    let opts = SimulationOptions::new(100.0, 1e-2, 1.0);
    match simulate(&plant, &controller, &reference, &opts, &[0.0, 5.0]) {
        Err(Error::Divergence { time }) => assert!(time > 0.0 && time < 100.0),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn simulate_validates_inputs() {
    let reference = SinusoidalReference::sine(1.0);
    let controller = |_t: f64, _x: &[f64], u: &mut [f64]| {
        u[0] = 0.0;
        Ok(())
    };
    let mut opts = SimulationOptions::new(1.0, 0.0, 1.0);
    assert!(simulate(&SyntheticPlant, &controller, &reference, &opts, &[0.0, 0.0]).is_err());
    opts.dt = 0.1;
    assert!(simulate(&SyntheticPlant, &controller, &reference, &opts, &[0.0]).is_err());
    assert!(simulate(&SyntheticPlant, &controller, &reference, &opts, &[f64::NAN, 0.0]).is_err());
    let two = SinusoidalReference::constant(vec![0.0, 0.0]);
    assert!(simulate(&SyntheticPlant, &controller, &two, &opts, &[0.0, 0.0]).is_err());
    let trace = simulate(&SyntheticPlant, &controller, &reference, &opts, &[0.0, 0.0]).unwrap();
    assert_eq!(trace.len(), 11);
    let again = simulate(&SyntheticPlant, &controller, &reference, &opts, &[0.0, 0.0]).unwrap();
    assert_eq!(trace, again);
    opts.record_every = 4;
    let sparse = simulate(&SyntheticPlant, &controller, &reference, &opts, &[0.0, 0.0]).unwrap();
    assert_eq!(sparse.times.len(), 4);
    assert_eq!(sparse.states.last(), trace.states.last());
}

#[test]
fn ultimate_bound_radius_properties() {
    let (post, dom) = synthetic_posterior();
    let kc = kernel_constants(post.kernel(), &dom).unwrap();
    let cert = certify(&post, &kc, &dom, 1e-8, 0.01, 30.0).unwrap();
    let g2 = ControllerGains::new(2.0, 1.0).unwrap();
    let g4 = ControllerGains::new(4.0, 1.0).unwrap();
    let x = [1.0, 0.5];
    let r2 = ultimate_bound_radius(&cert, &x, &g2).unwrap();
    let r4 = ultimate_bound_radius(&cert, &x, &g4).unwrap();
    assert!(r2 > 0.0);
    assert!((r2 - 2.0 * r4).abs() < 1e-12);
    let tiny = ControllerGains::new(2.0, 1e-9).unwrap();
    let r0 = ultimate_bound_radius(&cert, &x, &tiny).unwrap();
    assert!((r0 - cert.eta(&x).unwrap() / 2.0).abs() < 1e-9);
    assert!(matches!(ultimate_bound_radius(&cert, &[5.0, 0.0], &g2), Err(Error::OutsideDomain)));
    // data-dense region gives a smaller ball than the far corner
    let near = ultimate_bound_radius(&cert, &[1.5, 0.0], &g2).unwrap();
    let far = ultimate_bound_radius(&cert, &[-5.5, 3.5], &g2).unwrap();
    assert!(near < far);
}

#[test]
fn containment_bookkeeping() {
    let mut trace = SimulationTrace {
        times: vec![0.0, 1.0, 2.0, 3.0],
        states: vec![vec![0.0, 0.0]; 4],
        controls: vec![vec![0.0]; 4],
        tracking_error: vec![vec![3.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.0], vec![1.5, 0.0]],
        filtered_state: vec![vec![0.0]; 4],
        bound_radius: None,
    };
    assert!(trace.containment().is_err());
    trace.annotate_bound(|_| Ok(vec![1.0])).unwrap();
    let c = trace.containment().unwrap()[0];
    assert_eq!(c.first_entry_time, Some(1.0));
    assert_eq!(c.entry_index, None);
    assert_eq!(c.excursions_after_first_entry, 1);
    assert!(!c.holds_within(3.0));

    trace.tracking_error[3] = vec![0.2, 0.0];
    let c = trace.containment().unwrap()[0];
    assert_eq!(c.entry_index, Some(1));
    assert_eq!(c.excursions_after_first_entry, 0);
    assert!(c.holds_within(1.0) && !c.holds_within(0.5));

    trace.tracking_error[2] = vec![1.2, 0.0];
    let c = trace.containment().unwrap()[0];
    assert_eq!((c.first_entry_time, c.entry_time), (Some(1.0), Some(3.0)));
    assert_eq!(c.excursions_after_first_entry, 1);

    // band |r| <= radius * sqrt(lambda^2 + 1) = sqrt(2) with unit gains
    trace.filtered_state = vec![vec![2.0], vec![1.0], vec![-1.5], vec![0.1]];
    let g = ControllerGains::new(1.0, 1.0).unwrap();
    let c = trace.filtered_containment(&g).unwrap()[0];
    assert_eq!((c.first_entry_time, c.entry_time), (Some(1.0), Some(3.0)));
    trace.filtered_state[2] = vec![-1.4];
    assert_eq!(trace.filtered_containment(&g).unwrap()[0].entry_time, Some(1.0));
}

#[test]
fn arm_without_forces_is_free() {
    let arm = TwoLinkArm::<f64>::unit(0.0);
    let mut f = [1.0; 2];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let x = [rng.random_range(-3.0..3.0), 0.0, rng.random_range(-3.0..3.0), 0.0];
        arm.unknown_part(&x, &mut f);
        assert!(f[0].abs() < 1e-15 && f[1].abs() < 1e-15);
    }
    let mut dx = [0.0; 4];
    arm.dynamics(&[0.2, 0.0, -0.4, 0.0], &[0.5, -1.0], &mut dx);
    assert_eq!(dx, [0.0, 0.5, 0.0, -1.0]);
}

#[test]
fn arm_mass_matrix_is_positive_definite() {
    let arm = TwoLinkArm::<f64>::unit(9.81);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let q = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let m = arm.mass_matrix(q);
        assert_eq!(m[0][1], m[1][0]);
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let min_eig = tr / 2.0 - ((tr / 2.0).powi(2) - det).sqrt();
        assert!(min_eig > 0.0);
    }
}

#[test]
fn arm_gravity_is_potential_gradient() {
    let arm = TwoLinkArm::<f64>::unit(9.81);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;
    for _ in 0..100 {
        let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let g = arm.gravity_vector(q);
        let d1 = (arm.potential([q[0] + h, q[1]]) - arm.potential([q[0] - h, q[1]])) / (2.0 * h);
        let d2 = (arm.potential([q[0], q[1] + h]) - arm.potential([q[0], q[1] - h])) / (2.0 * h);
        assert!((g[0] - d1).abs() < 1e-6 && (g[1] - d2).abs() < 1e-6);
    }
}

#[test]
fn passive_arm_conserves_energy() {
    let arm = TwoLinkArm::<f64>::unit(9.81);
    let passive = |_t: f64, _x: &[f64], u: &mut [f64]| {
        u.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    };
    let reference = SinusoidalReference::constant(vec![0.0, 0.0]);
    let mut opts = SimulationOptions::new(10.0, 1e-3, 1.0);
    opts.record_every = 100;
    let x0 = [std::f64::consts::FRAC_PI_4, 0.0, 0.0, 0.0];
    let trace = simulate(&arm, &passive, &reference, &opts, &x0).unwrap();
    let e0 = arm.energy(&x0);
    let drift = trace
        .states
        .iter()
        .map(|x| ((arm.energy(x) - e0) / e0).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-3, "{drift}");
    // the arm actually moved
    assert!(trace.states.iter().any(|x| (x[0] - x0[0]).abs() > 0.5));
}

#[test]
fn lyapunov_decrease_outside_bound() {
    let (post, dom) = synthetic_posterior();
    let kc = kernel_constants(post.kernel(), &dom).unwrap();
    let cert = certify(&post, &kc, &dom, 1e-8, 0.01, 30.0).unwrap();
    let model = GpModel::new(vec![&post]).unwrap();
    let reference = SinusoidalReference::sine(2.0);
    let gains = ControllerGains::new(2.0, 1.0).unwrap();
    let controller = FeedbackLinearizing {
        model: &model,
        reference: &reference,
        gains,
    };
    let opts = SimulationOptions::new(5.0, 1e-2, 1.0);
    let trace = simulate(&SyntheticPlant, &controller, &reference, &opts, &[3.0, -3.0]).unwrap();
    let report = lyapunov_violations(&trace, &SyntheticPlant, &model, &gains, |x| Ok(vec![cert.eta(x)?])).unwrap();
    assert!(report.checked > 0);
    assert_eq!(report.violations, 0);
}
