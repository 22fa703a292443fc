//! Learning, certifying and tracking with the two-link arm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    simulate, ultimate_bound_radius, Containment, ControllerGains, FeedbackLinearizing, GpModel, Plant,
    SimulationOptions, SimulationTrace, SinusoidalReference, TwoLinkArm,
};
use crate::bounds::{certify_multi, CertificateConstants, ErrorCertificate};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::gp::{fit, fit_hyperparameters, Dataset, HyperparameterOptions, Posterior};
use crate::kernels::{kernel_constants, maximize_over_box, KernelConstants, SeArdKernel, SAFETY_FACTOR};
use crate::scalar::{norm, Scalar};

/// Everything needed for the arm experiment.
#[derive(Debug, Clone)]
pub struct RobotSetup<T: Scalar> {
    pub arm: TwoLinkArm<T>,
    /// Certified state domain.
    pub domain: Domain<T>,
    /// Box holding the training grid.
    pub training_box: Domain<T>,
    /// Grid points per state axis.
    pub training_counts: Vec<usize>,
    pub noise_variance: T,
    /// Initial kernel for both joints.
    pub kernel: SeArdKernel<T>,
    /// Fit hyperparameters per joint by marginal likelihood.
    pub optimize_hyperparameters: bool,
    pub hyper_options: HyperparameterOptions,
    pub tau: T,
    /// Joint failure probability, split evenly over the joints.
    pub delta: T,
    pub gains: ControllerGains<T>,
    pub reference: SinusoidalReference<T>,
    pub initial_state: Vec<T>,
    pub t_end: T,
    pub dt: T,
    pub record_every: usize,
    pub seed: u64,
}

/// Training set for both joints: observations of `q'' - u = f(x)` with
/// Gaussian noise, at the same inputs.
pub fn robot_training_data<T: Scalar>(setup: &RobotSetup<T>) -> Result<[Dataset<T>; 2]> {
    let points = setup.training_box.grid(&setup.training_counts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let sn = setup.noise_variance.sqrt();
    let mut targets = [Vec::with_capacity(points.len()), Vec::with_capacity(points.len())];
    let mut f = [T::zero(); 2];
    for x in &points {
        setup.arm.unknown_part(x, &mut f);
        for j in 0..2 {
            let z: f64 = StandardNormal.sample(&mut rng);
            targets[j].push(f[j] + sn * T::lit(z));
        }
    }
    let [t0, t1] = targets;
    Ok([
        Dataset::from_points(&points, t0, setup.noise_variance)?,
        Dataset::from_points(&points, t1, setup.noise_variance)?,
    ])
}

/// Lipschitz constants of the true `f_j` on the domain from a maximized
/// central-difference gradient norm, inflated by the kernel safety factor.
fn sampled_truth_lipschitz<T: Scalar>(arm: &TwoLinkArm<T>, domain: &Domain<T>) -> [T; 2] {
    let h = T::lit(1e-6);
    let grad_norm = |j: usize| {
        move |x: &[T]| {
            let mut y = x.to_vec();
            let mut g = [T::zero(); 4];
            let (mut fp, mut fm) = ([T::zero(); 2], [T::zero(); 2]);
            for (k, gk) in g.iter_mut().enumerate() {
                y[k] = x[k] + h;
                arm.unknown_part(&y, &mut fp);
                y[k] = x[k] - h;
                arm.unknown_part(&y, &mut fm);
                y[k] = x[k];
                *gk = (fp[j] - fm[j]) / (T::lit(2.0) * h);
            }
            norm(&g)
        }
    };
    let safety = T::lit(SAFETY_FACTOR);
    [0, 1].map(|j| safety * maximize_over_box(domain.lower(), domain.upper(), grad_norm(j)))
}

/// Enclosure of `[lo, hi]` under `cos`.
fn interval_cos<T: Scalar>(lo: T, hi: T) -> (T, T) {
    let two_pi = T::two_pi();
    if hi - lo >= two_pi {
        return (-T::one(), T::one());
    }
    let (a, b) = (lo.cos(), hi.cos());
    let (mut min, mut max) = (a.min(b), a.max(b));
    // multiples of pi inside the interval are extrema
    let mut k = (lo / T::pi()).ceil();
    while k * T::pi() <= hi {
        let even = (k / T::lit(2.0)).floor() * T::lit(2.0) == k;
        if even {
            max = T::one();
        } else {
            min = -T::one();
        }
        k += T::one();
    }
    (min, max)
}

fn interval_sin<T: Scalar>(lo: T, hi: T) -> (T, T) {
    interval_cos(lo - T::frac_pi_2(), hi - T::frac_pi_2())
}

/// Axis-aligned box containing the end effector for all joint angles with
/// `|q_i - center_i| <= radius_i`.
pub fn end_effector_box<T: Scalar>(arm: &TwoLinkArm<T>, center: [T; 2], radius: [T; 2]) -> ([T; 2], [T; 2]) {
    let [l1, l2] = arm.params().lengths;
    let q1 = (center[0] - radius[0], center[0] + radius[0]);
    let q12 = (q1.0 + center[1] - radius[1], q1.1 + center[1] + radius[1]);
    let (c1, c12) = (interval_cos(q1.0, q1.1), interval_cos(q12.0, q12.1));
    let (s1, s12) = (interval_sin(q1.0, q1.1), interval_sin(q12.0, q12.1));
    (
        [l1 * c1.0 + l2 * c12.0, l1 * s1.0 + l2 * s12.0],
        [l1 * c1.1 + l2 * c12.1, l1 * s1.1 + l2 * s12.1],
    )
}

/// End-effector containment after the joint errors entered their bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpaceReport<T> {
    /// Start of the final stretch with every joint inside its bound.
    pub start_index: Option<usize>,
    pub checked: usize,
    pub violations: usize,
    /// Largest half-diagonal of the task-space boxes checked.
    pub max_half_diagonal: T,
}

/// Result of [`certify_and_simulate_robot`].
#[derive(Debug, Clone)]
pub struct RobotOutcome<T: Scalar> {
    pub datasets: [Dataset<T>; 2],
    pub posteriors: Vec<Posterior<T, SeArdKernel<T>>>,
    pub kernel_constants: Vec<KernelConstants<T>>,
    pub f_lipschitz: [T; 2],
    pub certificates: Vec<CertificateConstants<T>>,
    pub trace: SimulationTrace<T>,
    pub containment: Vec<Containment<T>>,
    pub task_space: TaskSpaceReport<T>,
    pub domain: Domain<T>,
}

impl<T: Scalar> RobotOutcome<T> {
    /// Certificates re-attached to the fitted posteriors.
    pub fn error_certificates(&self) -> Vec<ErrorCertificate<'_, T, SeArdKernel<T>>> {
        self.certificates
            .iter()
            .zip(&self.posteriors)
            .map(|(c, p)| c.attach(p, &self.domain))
            .collect()
    }
}

/// Learns one GP per joint acceleration, certifies both jointly and tracks
/// the reference with the feedback-linearizing policy.
pub fn certify_and_simulate_robot<T: Scalar>(setup: &RobotSetup<T>) -> Result<RobotOutcome<T>> {
    if setup.domain.dimension() != 4 || setup.training_box.dimension() != 4 {
        return Err(Error::arg("arm state domain must be four-dimensional"));
    }
    if setup.kernel.lengthscales().len() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: setup.kernel.lengthscales().len(),
        });
    }
    let datasets = robot_training_data(setup).map_err(|e| e.in_stage("training data"))?;

    let mut posteriors = Vec::with_capacity(2);
    for ds in &datasets {
        let kernel = if setup.optimize_hyperparameters {
            fit_hyperparameters(ds, &setup.kernel, &setup.hyper_options)
                .map_err(|e| e.in_stage("hyperparameters"))?
                .kernel
        } else {
            setup.kernel.clone()
        };
        posteriors.push(fit(ds, &kernel).map_err(|e| e.in_stage("posterior"))?);
    }
    let kernel_constants = posteriors
        .iter()
        .map(|p| kernel_constants(p.kernel(), &setup.domain))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("kernel constants"))?;
    let f_lipschitz = sampled_truth_lipschitz(&setup.arm, &setup.domain);

    let refs: Vec<&Posterior<T, SeArdKernel<T>>> = posteriors.iter().collect();
    let certs = certify_multi(&refs, &kernel_constants, &setup.domain, setup.tau, setup.delta, &f_lipschitz)
        .map_err(|e| e.in_stage("certify"))?;

    let model = GpModel::new(refs.clone())?;
    let controller = FeedbackLinearizing {
        model: &model,
        reference: &setup.reference,
        gains: setup.gains,
    };
    let mut options = SimulationOptions::new(setup.t_end, setup.dt, setup.gains.lambda());
    options.record_every = setup.record_every;
    let mut trace = simulate(&setup.arm, &controller, &setup.reference, &options, &setup.initial_state)
        .map_err(|e| e.in_stage("simulate"))?;
    trace
        .annotate_bound(|x| certs.iter().map(|c| ultimate_bound_radius(c, x, &setup.gains)).collect())
        .map_err(|e| e.in_stage("bound radius"))?;
    let containment = trace.containment()?;
    let task_space = task_space_report(&setup.arm, &setup.reference, &trace)?;
    let certificates = certs.iter().map(|c| c.constants().clone()).collect();

    Ok(RobotOutcome {
        datasets,
        posteriors,
        kernel_constants,
        f_lipschitz,
        certificates,
        trace,
        containment,
        task_space,
        domain: setup.domain.clone(),
    })
}

fn task_space_report<T: Scalar>(
    arm: &TwoLinkArm<T>,
    reference: &SinusoidalReference<T>,
    trace: &SimulationTrace<T>,
) -> Result<TaskSpaceReport<T>> {
    use super::Reference;
    let radii = trace
        .bound_radius
        .as_ref()
        .ok_or_else(|| Error::arg("trace has no bound annotation"))?;
    let inside = |k: usize| (0..2).all(|i| trace.joint_error_norm(k, i) <= radii[k][i]);
    let start = match (0..trace.len()).rev().find(|&k| !inside(k)) {
        None if !trace.is_empty() => Some(0),
        Some(k) if k + 1 < trace.len() => Some(k + 1),
        _ => None,
    };
    let mut report = TaskSpaceReport {
        start_index: start,
        checked: 0,
        violations: 0,
        max_half_diagonal: T::zero(),
    };
    let Some(k0) = start else {
        return Ok(report);
    };
    for k in k0..trace.len() {
        let r = reference.at(trace.times[k]);
        let (lo, hi) = end_effector_box(arm, [r.position[0], r.position[1]], [radii[k][0], radii[k][1]]);
        let x = &trace.states[k];
        let p = arm.forward_kinematics([x[0], x[2]]);
        report.checked += 1;
        if !(0..2).all(|i| lo[i] <= p[i] && p[i] <= hi[i]) {
            report.violations += 1;
        }
        let half = norm(&[(hi[0] - lo[0]) / T::lit(2.0), (hi[1] - lo[1]) / T::lit(2.0)]);
        report.max_half_diagonal = report.max_half_diagonal.max(half);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use nalgebra::DVector;

    use super::*;

    #[test]
    fn interval_cos_encloses_samples() {
        let cases = [(-0.3, 0.2), (0.5, 2.0), (2.5, 4.0), (-7.0, -5.5), (1.0, 9.0), (3.0, 3.0)];
        for (lo, hi) in cases {
            let (mn, mx) = interval_cos::<f64>(lo, hi);
            let (smn, smx) = interval_sin::<f64>(lo, hi);
            for i in 0..=1000 {
                let t = lo + (hi - lo) * i as f64 / 1000.0;
                assert!(mn - 1e-12 <= t.cos() && t.cos() <= mx + 1e-12);
                assert!(smn - 1e-12 <= t.sin() && t.sin() <= smx + 1e-12);
            }
        }
        assert_eq!(interval_cos::<f64>(-0.3, 0.2).1, 1.0);
        assert_eq!(interval_cos::<f64>(2.5, 4.0).0, -1.0);
    }

    #[test]
    fn end_effector_box_contains_perturbed_arms() {
        let arm = TwoLinkArm::<f64>::unit(9.81);
        let center = [0.4, -1.1];
        let radius = [0.2, 0.35];
        let (lo, hi) = end_effector_box(&arm, center, radius);
        for i in 0..=20 {
            for j in 0..=20 {
                let q = [
                    center[0] - radius[0] + 2.0 * radius[0] * i as f64 / 20.0,
                    center[1] - radius[1] + 2.0 * radius[1] * j as f64 / 20.0,
                ];
                let p = arm.forward_kinematics(q);
                // corners agree only up to rounding of q_1 + q_2
                let tol = 1e-12;
                assert!(lo[0] - tol <= p[0] && p[0] <= hi[0] + tol && lo[1] - tol <= p[1] && p[1] <= hi[1] + tol);
            }
        }
        let (lo0, hi0) = end_effector_box(&arm, center, [0.0, 0.0]);
        let p = arm.forward_kinematics(center);
        for i in 0..2 {
            assert!((lo0[i] - p[i]).abs() < 1e-12 && (hi0[i] - p[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_lipschitz_dominates_random_pairs() {
        use rand::Rng;
        let arm = TwoLinkArm::<f64>::unit(9.81);
        let dom = Domain::cube(-1.0, 1.0, 4).unwrap();
        let lf = sampled_truth_lipschitz(&arm, &dom);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut fa, mut fb) = ([0.0; 2], [0.0; 2]);
        for _ in 0..5000 {
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = a.iter().map(|v| (v + rng.random_range(-0.05..0.05_f64)).clamp(-1.0, 1.0)).collect();
            arm.unknown_part(&a, &mut fa);
            arm.unknown_part(&b, &mut fb);
            let dist = crate::scalar::distance(&a, &b);
            for j in 0..2 {
                assert!((fa[j] - fb[j]).abs() <= lf[j] * dist + 1e-12);
            }
        }
    }

    #[test]
    fn training_targets_are_noisy_truth() {
        let setup = crate::experiments::default_robot_setup(3).unwrap();
        let [d0, d1] = robot_training_data(&setup).unwrap();
        assert_eq!(d0.len(), 81);
        let mut f = [0.0; 2];
        let mut resid = Vec::new();
        for i in 0..d0.len() {
            setup.arm.unknown_part(d0.point(i), &mut f);
            resid.push(d0.targets()[i] - f[0]);
            resid.push(d1.targets()[i] - f[1]);
        }
        let var = DVector::from_vec(resid).map(|v| v * v).mean();
        assert!(var > 0.005 && var < 0.02, "{var}");
    }
}
