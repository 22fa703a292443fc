//! Plants of the form `p' = v`, `v' = f(x) + u`.
//!
//! States interleave positions and velocities per degree of freedom:
//! `x = [p_1, v_1, p_2, v_2, ...]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Control-affine second-order plant.
pub trait Plant<T: Scalar> {
    /// Number of position/velocity pairs.
    fn dof(&self) -> usize;

    fn state_dimension(&self) -> usize {
        2 * self.dof()
    }

    /// The unknown acceleration `f(x)`, written to `out` (length `dof`).
    fn unknown_part(&self, x: &[T], out: &mut [T]);

    /// State derivative for input `u`.
    fn dynamics(&self, x: &[T], u: &[T], dx: &mut [T]) {
        let n = self.dof();
        let mut f = vec![T::zero(); n];
        self.unknown_part(x, &mut f);
        for i in 0..n {
            dx[2 * i] = x[2 * i + 1];
            dx[2 * i + 1] = f[i] + u[i];
        }
    }
}

/// `f(x) = 1 - sin(x_1) + 1 / (1 + exp(-x_2))`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SyntheticPlant;

impl SyntheticPlant {
    pub fn f<T: Scalar>(x: &[T]) -> T {
        T::one() - x[0].sin() + T::one() / (T::one() + (-x[1]).exp())
    }
}

impl<T: Scalar> Plant<T> for SyntheticPlant {
    fn dof(&self) -> usize {
        1
    }

    fn unknown_part(&self, x: &[T], out: &mut [T]) {
        out[0] = Self::f(x);
    }
}

/// Plant given by a closure for `f`.
pub struct FnPlant<F> {
    dof: usize,
    f: F,
}

impl<F> FnPlant<F> {
    pub fn new(dof: usize, f: F) -> Self {
        Self { dof, f }
    }
}

impl<T: Scalar, F: Fn(&[T], &mut [T])> Plant<T> for FnPlant<F> {
    fn dof(&self) -> usize {
        self.dof
    }

    fn unknown_part(&self, x: &[T], out: &mut [T]) {
        (self.f)(x, out)
    }
}

/// Link parameters of a planar two-link arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmParameters<T: Scalar> {
    pub masses: [T; 2],
    pub lengths: [T; 2],
    /// Distance of each center of mass from its joint.
    pub com: [T; 2],
    /// Moments of inertia about the centers of mass.
    pub inertia: [T; 2],
    /// Gravitational acceleration along `-z_2`.
    pub gravity: T,
}

impl<T: Scalar> ArmParameters<T> {
    /// Unit masses, lengths and inertia, centers of mass at mid-link.
    pub fn unit(gravity: T) -> Self {
        let half = T::lit(0.5);
        Self {
            masses: [T::one(), T::one()],
            lengths: [T::one(), T::one()],
            com: [half, half],
            inertia: [T::one(), T::one()],
            gravity,
        }
    }
}

/// Planar two-link revolute arm; `q_i` measured from the `z_1` axis, link 2
/// relative to link 1.
///
/// The input is the joint acceleration offset `u`, so `q'' = f(x) + u` with
/// `f = M^{-1}(-C q' - g)` and applied torque `M u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLinkArm<T: Scalar> {
    params: ArmParameters<T>,
}

impl<T: Scalar> TwoLinkArm<T> {
    pub fn new(params: ArmParameters<T>) -> Result<Self> {
        let p = &params;
        let positive = p.masses.iter().chain(&p.lengths).chain(&p.inertia).all(|&v| v > T::zero());
        let com_ok = p.com.iter().all(|&c| c >= T::zero());
        if !positive || !com_ok || !p.gravity.is_finite() {
            return Err(Error::arg("arm masses, lengths and inertia must be positive"));
        }
        Ok(Self { params })
    }

    /// Unit arm with the given gravity.
    pub fn unit(gravity: T) -> Self {
        Self {
            params: ArmParameters::unit(gravity),
        }
    }

    pub fn params(&self) -> &ArmParameters<T> {
        &self.params
    }

    fn coefficients(&self) -> (T, T, T) {
        let p = &self.params;
        let [m1, m2] = p.masses;
        let [l1, _] = p.lengths;
        let [r1, r2] = p.com;
        let [i1, i2] = p.inertia;
        let alpha = i1 + i2 + m1 * r1 * r1 + m2 * (l1 * l1 + r2 * r2);
        let beta = m2 * l1 * r2;
        let delta = i2 + m2 * r2 * r2;
        (alpha, beta, delta)
    }

    /// Mass matrix `M(q)` as `[[m11, m12], [m12, m22]]`.
    pub fn mass_matrix(&self, q: [T; 2]) -> [[T; 2]; 2] {
        let (alpha, beta, delta) = self.coefficients();
        let c2 = q[1].cos();
        let m11 = alpha + T::lit(2.0) * beta * c2;
        let m12 = delta + beta * c2;
        [[m11, m12], [m12, delta]]
    }

    /// Coriolis matrix `C(q, q')`.
    pub fn coriolis(&self, q: [T; 2], qd: [T; 2]) -> [[T; 2]; 2] {
        let (_, beta, _) = self.coefficients();
        let s2 = q[1].sin();
        [
            [-beta * s2 * qd[1], -beta * s2 * (qd[0] + qd[1])],
            [beta * s2 * qd[0], T::zero()],
        ]
    }

    /// Gravity torque `g(q)`, the gradient of [`potential`](Self::potential).
    pub fn gravity_vector(&self, q: [T; 2]) -> [T; 2] {
        let p = &self.params;
        let [m1, m2] = p.masses;
        let c1 = q[0].cos();
        let c12 = (q[0] + q[1]).cos();
        let a = (m1 * p.com[0] + m2 * p.lengths[0]) * p.gravity;
        let b = m2 * p.com[1] * p.gravity;
        [a * c1 + b * c12, b * c12]
    }

    pub fn potential(&self, q: [T; 2]) -> T {
        let p = &self.params;
        let [m1, m2] = p.masses;
        p.gravity * ((m1 * p.com[0] + m2 * p.lengths[0]) * q[0].sin() + m2 * p.com[1] * (q[0] + q[1]).sin())
    }

    /// Kinetic plus potential energy of state `x`.
    pub fn energy(&self, x: &[T]) -> T {
        let (q, qd) = split(x);
        let m = self.mass_matrix(q);
        let kinetic = T::lit(0.5)
            * (m[0][0] * qd[0] * qd[0] + T::lit(2.0) * m[0][1] * qd[0] * qd[1] + m[1][1] * qd[1] * qd[1]);
        kinetic + self.potential(q)
    }

    /// Torque `M(q) u` realizing acceleration input `u`.
    pub fn torque(&self, x: &[T], u: &[T]) -> [T; 2] {
        let (q, _) = split(x);
        let m = self.mass_matrix(q);
        [m[0][0] * u[0] + m[0][1] * u[1], m[1][0] * u[0] + m[1][1] * u[1]]
    }

    /// End-effector position in the `z_1`-`z_2` plane.
    pub fn forward_kinematics(&self, q: [T; 2]) -> [T; 2] {
        let [l1, l2] = self.params.lengths;
        let q12 = q[0] + q[1];
        [l1 * q[0].cos() + l2 * q12.cos(), l1 * q[0].sin() + l2 * q12.sin()]
    }
}

fn split<T: Scalar>(x: &[T]) -> ([T; 2], [T; 2]) {
    ([x[0], x[2]], [x[1], x[3]])
}

impl<T: Scalar> Plant<T> for TwoLinkArm<T> {
    fn dof(&self) -> usize {
        2
    }

    fn unknown_part(&self, x: &[T], out: &mut [T]) {
        let (q, qd) = split(x);
        let m = self.mass_matrix(q);
        let c = self.coriolis(q, qd);
        let g = self.gravity_vector(q);
        let rhs = [
            -(c[0][0] * qd[0] + c[0][1] * qd[1]) - g[0],
            -(c[1][0] * qd[0] + c[1][1] * qd[1]) - g[1],
        ];
        // M is uniformly positive definite, so the determinant never vanishes
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        out[0] = (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det;
        out[1] = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
    }
}
