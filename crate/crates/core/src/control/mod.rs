//! Feedback-linearizing tracking control of second-order plants with a GP
//! model of the unknown dynamics.
//!
//! With the filtered state `r = lambda e_1 + e_2`, the policy
//! `u = -nu_N(x) + x_d'' - k_c r - lambda e_2` gives
//! `r' = f(x) - nu_N(x) - k_c r`. Once `|k_c r|` exceeds the model error
//! bound `eta(x)` the Lyapunov function `r^2 / 2` decreases, so the
//! tracking error ends up in the ball of radius
//! `eta(x) / (k_c sqrt(lambda^2 + 1))`.

mod plant;
mod robot;

pub use plant::{ArmParameters, FnPlant, Plant, SyntheticPlant, TwoLinkArm};
pub use robot::{
    certify_and_simulate_robot, end_effector_box, robot_training_data, RobotOutcome, RobotSetup, TaskSpaceReport,
};

use crate::bounds::ErrorCertificate;
use crate::error::{Error, Result};
use crate::gp::Posterior;
use crate::kernels::StationaryKernel;
use crate::scalar::{norm, Scalar};

/// Gains of the linear part of the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains<T: Scalar> {
    k_c: T,
    lambda: T,
}

impl<T: Scalar> ControllerGains<T> {
    pub fn new(k_c: T, lambda: T) -> Result<Self> {
        if !(k_c > T::zero() && lambda > T::zero()) || !k_c.is_finite() || !lambda.is_finite() {
            return Err(Error::arg("gains k_c and lambda must be positive and finite"));
        }
        Ok(Self { k_c, lambda })
    }

    pub fn k_c(&self) -> T {
        self.k_c
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// `k_c sqrt(lambda^2 + 1)`.
    pub fn radius_scale(&self) -> T {
        self.k_c * (self.lambda * self.lambda + T::one()).sqrt()
    }
}

/// Desired position, velocity and acceleration per degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint<T> {
    pub position: Vec<T>,
    pub velocity: Vec<T>,
    pub acceleration: Vec<T>,
}

pub trait Reference<T: Scalar> {
    fn dof(&self) -> usize;
    fn at(&self, t: T) -> ReferencePoint<T>;
}

/// Per-joint `offset + amplitude sin(frequency t + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidalReference<T: Scalar> {
    pub amplitude: Vec<T>,
    pub frequency: Vec<T>,
    pub phase: Vec<T>,
    pub offset: Vec<T>,
}

impl<T: Scalar> SinusoidalReference<T> {
    pub fn new(amplitude: Vec<T>, frequency: Vec<T>, phase: Vec<T>, offset: Vec<T>) -> Result<Self> {
        let n = amplitude.len();
        if n == 0 || frequency.len() != n || phase.len() != n || offset.len() != n {
            return Err(Error::arg("sinusoid parameters need one entry per degree of freedom"));
        }
        let all = amplitude.iter().chain(&frequency).chain(&phase).chain(&offset);
        if !crate::scalar::all_finite(&all.copied().collect::<Vec<_>>()) {
            return Err(Error::arg("sinusoid parameters must be finite"));
        }
        Ok(Self {
            amplitude,
            frequency,
            phase,
            offset,
        })
    }

    /// `amplitude sin(t)` for one degree of freedom.
    pub fn sine(amplitude: T) -> Self {
        Self {
            amplitude: vec![amplitude],
            frequency: vec![T::one()],
            phase: vec![T::zero()],
            offset: vec![T::zero()],
        }
    }

    /// Constant set point.
    pub fn constant(values: Vec<T>) -> Self {
        let n = values.len();
        Self {
            amplitude: vec![T::zero(); n],
            frequency: vec![T::zero(); n],
            phase: vec![T::zero(); n],
            offset: values,
        }
    }
}

impl<T: Scalar> Reference<T> for SinusoidalReference<T> {
    fn dof(&self) -> usize {
        self.amplitude.len()
    }

    fn at(&self, t: T) -> ReferencePoint<T> {
        let n = self.dof();
        let mut p = ReferencePoint {
            position: Vec::with_capacity(n),
            velocity: Vec::with_capacity(n),
            acceleration: Vec::with_capacity(n),
        };
        for i in 0..n {
            let (a, w) = (self.amplitude[i], self.frequency[i]);
            let arg = w * t + self.phase[i];
            let (s, c) = (arg.sin(), arg.cos());
            p.position.push(self.offset[i] + a * s);
            p.velocity.push(a * w * c);
            p.acceleration.push(-a * w * w * s);
        }
        p
    }
}

/// Largest central-difference mismatch of velocity and acceleration at the
/// given times, with step `h`.
pub fn reference_consistency<T: Scalar, R: Reference<T>>(reference: &R, times: &[T], h: T) -> T {
    let two_h = T::lit(2.0) * h;
    let mut worst = T::zero();
    for &t in times {
        let (lo, mid, hi) = (reference.at(t - h), reference.at(t), reference.at(t + h));
        for i in 0..reference.dof() {
            let v = (hi.position[i] - lo.position[i]) / two_h;
            let a = (hi.velocity[i] - lo.velocity[i]) / two_h;
            worst = worst
                .max((v - mid.velocity[i]).magnitude())
                .max((a - mid.acceleration[i]).magnitude());
        }
    }
    worst
}

/// Estimate `f_hat` of the unknown dynamics used by the policy.
pub trait DynamicsModel<T: Scalar> {
    fn dof(&self) -> usize;
    fn estimate(&self, x: &[T], out: &mut [T]) -> Result<()>;
}

/// `f_hat = 0`; the policy reduces to PD tracking.
#[derive(Debug, Clone, Copy)]
pub struct ZeroModel(pub usize);

impl<T: Scalar> DynamicsModel<T> for ZeroModel {
    fn dof(&self) -> usize {
        self.0
    }

    fn estimate(&self, _x: &[T], out: &mut [T]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = T::zero());
        Ok(())
    }
}

/// The true unknown part of a plant.
pub struct ExactModel<'a, P>(pub &'a P);

impl<T: Scalar, P: Plant<T>> DynamicsModel<T> for ExactModel<'_, P> {
    fn dof(&self) -> usize {
        self.0.dof()
    }

    fn estimate(&self, x: &[T], out: &mut [T]) -> Result<()> {
        self.0.unknown_part(x, out);
        Ok(())
    }
}

/// Posterior means, one GP per degree of freedom.
#[derive(Debug, Clone)]
pub struct GpModel<'p, T: Scalar, K> {
    posteriors: Vec<&'p Posterior<T, K>>,
}

impl<'p, T: Scalar, K: StationaryKernel<T>> GpModel<'p, T, K> {
    pub fn new(posteriors: Vec<&'p Posterior<T, K>>) -> Result<Self> {
        if posteriors.is_empty() {
            return Err(Error::arg("at least one posterior is required"));
        }
        let d = posteriors[0].dimension();
        if d != 2 * posteriors.len() || posteriors.iter().any(|p| p.dimension() != d) {
            return Err(Error::DimensionMismatch {
                expected: 2 * posteriors.len(),
                found: d,
            });
        }
        Ok(Self { posteriors })
    }
}

impl<T: Scalar, K: StationaryKernel<T>> DynamicsModel<T> for GpModel<'_, T, K> {
    fn dof(&self) -> usize {
        self.posteriors.len()
    }

    fn estimate(&self, x: &[T], out: &mut [T]) -> Result<()> {
        for (o, p) in out.iter_mut().zip(&self.posteriors) {
            *o = p.mean(x)?;
        }
        Ok(())
    }
}

/// Errors `e = x - x_d` (interleaved like the state) and filtered states
/// `r_i = lambda e_{1,i} + e_{2,i}`.
pub fn tracking_error<T: Scalar>(x: &[T], reference: &ReferencePoint<T>, lambda: T) -> (Vec<T>, Vec<T>) {
    let n = reference.position.len();
    let mut e = Vec::with_capacity(2 * n);
    let mut r = Vec::with_capacity(n);
    for i in 0..n {
        let e1 = x[2 * i] - reference.position[i];
        let e2 = x[2 * i + 1] - reference.velocity[i];
        e.push(e1);
        e.push(e2);
        r.push(lambda * e1 + e2);
    }
    (e, r)
}

/// `u = -f_hat + x_d'' - k_c r - lambda e_2` per degree of freedom.
pub fn policy<T: Scalar>(x: &[T], f_hat: &[T], reference: &ReferencePoint<T>, gains: &ControllerGains<T>) -> Vec<T> {
    let (e, r) = tracking_error(x, reference, gains.lambda);
    (0..f_hat.len())
        .map(|i| -f_hat[i] + reference.acceleration[i] - gains.k_c * r[i] - gains.lambda * e[2 * i + 1])
        .collect()
}

/// Maps time and state to an input.
pub trait Controller<T: Scalar> {
    fn control(&self, t: T, x: &[T], u: &mut [T]) -> Result<()>;
}

impl<T: Scalar, F: Fn(T, &[T], &mut [T]) -> Result<()>> Controller<T> for F {
    fn control(&self, t: T, x: &[T], u: &mut [T]) -> Result<()> {
        self(t, x, u)
    }
}

/// [`policy`] with a model and a reference.
pub struct FeedbackLinearizing<'a, T: Scalar, M, R> {
    pub model: &'a M,
    pub reference: &'a R,
    pub gains: ControllerGains<T>,
}

impl<T: Scalar, M: DynamicsModel<T>, R: Reference<T>> Controller<T> for FeedbackLinearizing<'_, T, M, R> {
    fn control(&self, t: T, x: &[T], u: &mut [T]) -> Result<()> {
        let mut f_hat = vec![T::zero(); self.model.dof()];
        self.model.estimate(x, &mut f_hat)?;
        let v = policy(x, &f_hat, &self.reference.at(t), &self.gains);
        u.copy_from_slice(&v);
        Ok(())
    }
}

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions<T> {
    pub t0: T,
    pub t_end: T,
    pub dt: T,
    /// Store every `record_every`-th step.
    pub record_every: usize,
    /// Filter gain used for the recorded filtered state.
    pub lambda: T,
}

impl<T: Scalar> SimulationOptions<T> {
    pub fn new(t_end: T, dt: T, lambda: T) -> Self {
        Self {
            t0: T::zero(),
            t_end,
            dt,
            record_every: 1,
            lambda,
        }
    }

    fn steps(&self) -> Result<usize> {
        let span = self.t_end - self.t0;
        if !(self.dt > T::zero()) || !self.dt.is_finite() || !span.is_finite() || span < T::zero() {
            return Err(Error::arg("need dt > 0 and a finite, non-negative time span"));
        }
        if self.record_every == 0 {
            return Err(Error::arg("record_every must be at least 1"));
        }
        Ok((span / self.dt).round().as_f64() as usize)
    }
}

/// Recorded closed-loop trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace<T: Scalar> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub controls: Vec<Vec<T>>,
    /// `x - x_d` in state layout.
    pub tracking_error: Vec<Vec<T>>,
    /// Filtered state per degree of freedom.
    pub filtered_state: Vec<Vec<T>>,
    /// Ultimate bound radius per degree of freedom, once annotated.
    pub bound_radius: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> SimulationTrace<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.filtered_state.first().map_or(0, Vec::len)
    }

    /// `||e||` over the whole state.
    pub fn error_norm(&self, k: usize) -> T {
        norm(&self.tracking_error[k])
    }

    /// `||(e_{1,i}, e_{2,i})||` for one degree of freedom.
    pub fn joint_error_norm(&self, k: usize, i: usize) -> T {
        let e = &self.tracking_error[k];
        norm(&[e[2 * i], e[2 * i + 1]])
    }

    /// Fills [`bound_radius`](Self::bound_radius) with `radius(x)` at every
    /// recorded state.
    pub fn annotate_bound<F: FnMut(&[T]) -> Result<Vec<T>>>(&mut self, mut radius: F) -> Result<()> {
        let radii = self.states.iter().map(|x| radius(x)).collect::<Result<Vec<_>>>()?;
        self.bound_radius = Some(radii);
        Ok(())
    }

    /// Entry into and containment in the bound, per degree of freedom.
    pub fn containment(&self) -> Result<Vec<Containment<T>>> {
        let radii = self.radii()?;
        Ok((0..self.dof())
            .map(|i| self.settling(|k| self.joint_error_norm(k, i) <= radii[k][i]))
            .collect())
    }

    /// Containment of the filtered state in `|r_i| <= eta_i(x) / k_c`, the
    /// band outside of which the Lyapunov function strictly decreases.
    pub fn filtered_containment(&self, gains: &ControllerGains<T>) -> Result<Vec<Containment<T>>> {
        let radii = self.radii()?;
        // eta / k_c = radius sqrt(lambda^2 + 1)
        let scale = gains.radius_scale() / gains.k_c();
        Ok((0..self.dof())
            .map(|i| self.settling(|k| self.filtered_state[k][i].magnitude() <= radii[k][i] * scale))
            .collect())
    }

    fn radii(&self) -> Result<&Vec<Vec<T>>> {
        self.bound_radius
            .as_ref()
            .ok_or_else(|| Error::arg("trace has no bound annotation"))
    }

    fn settling(&self, inside: impl Fn(usize) -> bool) -> Containment<T> {
        let first = (0..self.len()).find(|&k| inside(k));
        let settle = match (0..self.len()).rev().find(|&k| !inside(k)) {
            None if !self.is_empty() => Some(0),
            Some(k) if k + 1 < self.len() => Some(k + 1),
            _ => None,
        };
        Containment {
            first_entry_time: first.map(|k| self.times[k]),
            entry_time: settle.map(|k| self.times[k]),
            entry_index: settle,
            excursions_after_first_entry: first.map_or(0, |k0| (k0..self.len()).filter(|&k| !inside(k)).count()),
        }
    }
}

/// Result of [`SimulationTrace::containment`] for one degree of freedom.
///
/// The error is ultimately bounded: it may start inside a large bound, leave
/// it during the transient, and then converge into it for good.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment<T> {
    /// First recorded time with the error inside the bound.
    pub first_entry_time: Option<T>,
    /// Start of the final stretch of samples inside the bound; `None` when the
    /// last sample is outside.
    pub entry_time: Option<T>,
    pub entry_index: Option<usize>,
    /// Samples outside the bound after the first entry.
    pub excursions_after_first_entry: usize,
}

impl<T: PartialOrd> Containment<T> {
    /// The error entered the bound no later than `transient` and stayed inside
    /// until the end of the trace.
    pub fn holds_within(&self, transient: T) -> bool {
        self.entry_time.as_ref().is_some_and(|t| *t <= transient)
    }
}

fn rk4_step<T, P, C>(plant: &P, controller: &C, t: T, x: &mut [T], dt: T, scratch: &mut Rk4Scratch<T>) -> Result<()>
where
    T: Scalar,
    P: Plant<T>,
    C: Controller<T>,
{
    let half = T::lit(0.5) * dt;
    let Rk4Scratch { u, k, tmp } = scratch;
    let [k1, k2, k3, k4] = k;
    let mut eval = |time: T, state: &[T], out: &mut [T]| -> Result<()> {
        controller.control(time, state, u)?;
        plant.dynamics(state, u, out);
        Ok(())
    };
    eval(t, x, k1)?;
    tmp.iter_mut().zip(x.iter().zip(k1.iter())).for_each(|(s, (a, b))| *s = *a + half * *b);
    eval(t + half, tmp, k2)?;
    tmp.iter_mut().zip(x.iter().zip(k2.iter())).for_each(|(s, (a, b))| *s = *a + half * *b);
    eval(t + half, tmp, k3)?;
    tmp.iter_mut().zip(x.iter().zip(k3.iter())).for_each(|(s, (a, b))| *s = *a + dt * *b);
    eval(t + dt, tmp, k4)?;
    let sixth = dt / T::lit(6.0);
    for i in 0..x.len() {
        x[i] += sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
    }
    Ok(())
}

struct Rk4Scratch<T> {
    u: Vec<T>,
    k: [Vec<T>; 4],
    tmp: Vec<T>,
}

/// Integrates the closed loop with classical RK4, evaluating the controller
/// at every stage.
///
/// Fails with [`Error::Divergence`] at the first non-finite state.
pub fn simulate<T, P, C, R>(
    plant: &P,
    controller: &C,
    reference: &R,
    options: &SimulationOptions<T>,
    x0: &[T],
) -> Result<SimulationTrace<T>>
where
    T: Scalar,
    P: Plant<T>,
    C: Controller<T>,
    R: Reference<T>,
{
    let dof = plant.dof();
    if x0.len() != plant.state_dimension() {
        return Err(Error::DimensionMismatch {
            expected: plant.state_dimension(),
            found: x0.len(),
        });
    }
    if reference.dof() != dof {
        return Err(Error::DimensionMismatch {
            expected: dof,
            found: reference.dof(),
        });
    }
    if !crate::scalar::all_finite(x0) {
        return Err(Error::arg("initial state must be finite"));
    }
    let steps = options.steps()?;
    let capacity = steps / options.record_every + 1;
    let mut trace = SimulationTrace {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        controls: Vec::with_capacity(capacity),
        tracking_error: Vec::with_capacity(capacity),
        filtered_state: Vec::with_capacity(capacity),
        bound_radius: None,
    };
    let n = x0.len();
    let mut scratch = Rk4Scratch {
        u: vec![T::zero(); dof],
        k: [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]],
        tmp: vec![T::zero(); n],
    };
    let mut x = x0.to_vec();
    for step in 0..=steps {
        let t = options.t0 + T::from_count(step) * options.dt;
        if step % options.record_every == 0 || step == steps {
            let mut u = vec![T::zero(); dof];
            controller.control(t, &x, &mut u)?;
            let (e, r) = tracking_error(&x, &reference.at(t), options.lambda);
            trace.times.push(t);
            trace.states.push(x.clone());
            trace.controls.push(u);
            trace.tracking_error.push(e);
            trace.filtered_state.push(r);
        }
        if step == steps {
            break;
        }
        rk4_step(plant, controller, t, &mut x, options.dt, &mut scratch)?;
        if !crate::scalar::all_finite(&x) {
            return Err(Error::Divergence {
                time: (t + options.dt).as_f64(),
            });
        }
    }
    Ok(trace)
}

/// `eta(x) / (k_c sqrt(lambda^2 + 1))`; errors outside the certified domain.
pub fn ultimate_bound_radius<T, K>(certificate: &ErrorCertificate<'_, T, K>, x: &[T], gains: &ControllerGains<T>) -> Result<T>
where
    T: Scalar,
    K: StationaryKernel<T>,
{
    Ok(certificate.certified_eta(x)? / gains.radius_scale())
}

/// Samples where `|r| > eta(x) / k_c` but `V' = r (f - nu_N - k_c r)` is not
/// negative. `eta` returns the per-degree-of-freedom error bounds.
pub fn lyapunov_violations<T, P, M, E>(
    trace: &SimulationTrace<T>,
    plant: &P,
    model: &M,
    gains: &ControllerGains<T>,
    mut eta: E,
) -> Result<LyapunovReport>
where
    T: Scalar,
    P: Plant<T>,
    M: DynamicsModel<T>,
    E: FnMut(&[T]) -> Result<Vec<T>>,
{
    let dof = plant.dof();
    let mut f = vec![T::zero(); dof];
    let mut f_hat = vec![T::zero(); dof];
    let mut report = LyapunovReport::default();
    for (x, r) in trace.states.iter().zip(&trace.filtered_state) {
        plant.unknown_part(x, &mut f);
        model.estimate(x, &mut f_hat)?;
        let bounds = eta(x)?;
        for i in 0..dof {
            if r[i].magnitude() > bounds[i] / gains.k_c {
                report.checked += 1;
                let v_dot = r[i] * (f[i] - f_hat[i] - gains.k_c * r[i]);
                if !(v_dot < T::zero()) {
                    report.violations += 1;
                }
            }
        }
    }
    Ok(report)
}

/// Outcome of [`lyapunov_violations`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LyapunovReport {
    /// Samples (times degrees of freedom) outside the bound.
    pub checked: usize,
    /// Of those, samples without strict decrease.
    pub violations: usize,
}

#[cfg(test)]
mod tests;
