//! Rigid-body dynamics of planar open-chain manipulators.
//!
//! Three model flavors share one interface: closed-form one- and two-link
//! arms (exact inertia/Coriolis/gravity terms, used as oracles) and an
//! n-link chain evaluated by a planar recursive Newton-Euler pass. All
//! operations are pure; a model is immutable after construction.

mod friction;
mod simulate;
mod trajectory;

pub use friction::FrictionProfile;
pub use simulate::{rollout, simulate};
pub use trajectory::{fd_acceleration, SampledTrajectory};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Inertial parameters of one link, expressed at the joint frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// Link mass (kg).
    pub mass: f64,
    /// Joint-to-joint length (m).
    pub length: f64,
    /// Distance from the joint to the center of mass along the link (m).
    pub com_offset: f64,
    /// Rotational inertia about the center of mass (kg m^2).
    pub inertia: f64,
}

/// Per-joint motion limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    /// Position range (rad).
    pub q_min: f64,
    pub q_max: f64,
    /// Velocity magnitude bound (rad/s).
    pub dq_max: f64,
    /// Acceleration magnitude bound (rad/s^2).
    pub ddq_max: f64,
}

impl JointLimits {
    /// Midpoint of the position range.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.q_min + self.q_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelKind {
    /// Closed-form single pendulum.
    OneLink,
    /// Closed-form two-link arm.
    TwoLink,
    /// Planar chain via recursive Newton-Euler.
    Chain,
}

/// Planar open-chain manipulator with revolute joints.
///
/// Joint angles are measured against the previous link; the first link's
/// zero angle points along +x and gravity acts along -y. With a point mass
/// at the tip of a unit link the gravity torque at q = 0 (horizontal) is
/// m g L.
#[derive(Debug, Clone)]
pub struct ManipulatorModel {
    links: Vec<LinkParams>,
    limits: Vec<JointLimits>,
    gravity_accel: f64,
    kind: ModelKind,
}

impl ManipulatorModel {
    /// Closed-form single pendulum.
    pub fn one_link(link: LinkParams, gravity_accel: f64, limits: JointLimits) -> Self {
        Self {
            links: vec![link],
            limits: vec![limits],
            gravity_accel,
            kind: ModelKind::OneLink,
        }
    }

    /// Closed-form two-link planar arm.
    pub fn two_link(links: [LinkParams; 2], gravity_accel: f64, limits: [JointLimits; 2]) -> Self {
        Self {
            links: links.to_vec(),
            limits: limits.to_vec(),
            gravity_accel,
            kind: ModelKind::TwoLink,
        }
    }

    /// n-link planar chain evaluated by recursive Newton-Euler.
    pub fn chain(links: Vec<LinkParams>, gravity_accel: f64, limits: Vec<JointLimits>) -> Self {
        assert_eq!(links.len(), limits.len(), "one limit set per link");
        assert!(!links.is_empty(), "chain needs at least one link");
        Self {
            links,
            limits,
            gravity_accel,
            kind: ModelKind::Chain,
        }
    }

    /// Number of joints.
    pub fn joints(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[LinkParams] {
        &self.links
    }

    pub fn limits(&self) -> &[JointLimits] {
        &self.limits
    }

    pub fn gravity_accel(&self) -> f64 {
        self.gravity_accel
    }

    fn check_dim(&self, v: &DVector<f64>, what: &'static str) -> Result<()> {
        if v.len() != self.joints() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.joints(),
                actual: v.len(),
            });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(what));
        }
        Ok(())
    }

    /// Joint-space inertia matrix M(q), symmetric positive definite.
    pub fn mass_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(q, "mass_matrix q")?;
        let n = self.joints();
        let m = match self.kind {
            ModelKind::OneLink => {
                let l = self.links[0];
                DMatrix::from_element(1, 1, l.inertia + l.mass * l.com_offset * l.com_offset)
            }
            ModelKind::TwoLink => {
                let [l1, l2] = [self.links[0], self.links[1]];
                let c2 = q[1].cos();
                let m11 = l1.inertia
                    + l2.inertia
                    + l1.mass * l1.com_offset * l1.com_offset
                    + l2.mass
                        * (l1.length * l1.length
                            + l2.com_offset * l2.com_offset
                            + 2.0 * l1.length * l2.com_offset * c2);
                let m12 = l2.inertia
                    + l2.mass * (l2.com_offset * l2.com_offset + l1.length * l2.com_offset * c2);
                let m22 = l2.inertia + l2.mass * l2.com_offset * l2.com_offset;
                DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22])
            }
            ModelKind::Chain => {
                let zero = DVector::zeros(n);
                let mut m = DMatrix::zeros(n, n);
                for j in 0..n {
                    let mut ddq = DVector::zeros(n);
                    ddq[j] = 1.0;
                    let col = self.rne(q, &zero, &ddq, 0.0);
                    m.set_column(j, &col);
                }
                // enforce exact symmetry against round-off in the two passes
                for i in 0..n {
                    for j in (i + 1)..n {
                        let s = 0.5 * (m[(i, j)] + m[(j, i)]);
                        m[(i, j)] = s;
                        m[(j, i)] = s;
                    }
                }
                m
            }
        };
        Ok(m)
    }

    /// Coriolis/centrifugal matrix C(q, dq) in Christoffel form, so that
    /// dM/dt - 2C is skew-symmetric.
    pub fn coriolis_matrix(&self, q: &DVector<f64>, dq: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(q, "coriolis_matrix q")?;
        self.check_dim(dq, "coriolis_matrix dq")?;
        let n = self.joints();
        let c = match self.kind {
            ModelKind::OneLink => DMatrix::zeros(1, 1),
            ModelKind::TwoLink => {
                let [l1, l2] = [self.links[0], self.links[1]];
                let h = -l2.mass * l1.length * l2.com_offset * q[1].sin();
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[h * dq[1], h * (dq[0] + dq[1]), -h * dq[0], 0.0],
                )
            }
            ModelKind::Chain => {
                // Christoffel symbols from central differences of M(q).
                let h = 1e-6;
                let mut dm = Vec::with_capacity(n);
                for k in 0..n {
                    let mut qp = q.clone();
                    let mut qm = q.clone();
                    qp[k] += h;
                    qm[k] -= h;
                    let mp = self.mass_matrix(&qp)?;
                    let mm = self.mass_matrix(&qm)?;
                    dm.push((mp - mm) / (2.0 * h));
                }
                let mut c = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut cij = 0.0;
                        for k in 0..n {
                            cij += 0.5
                                * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)])
                                * dq[k];
                        }
                        c[(i, j)] = cij;
                    }
                }
                c
            }
        };
        Ok(c)
    }

    /// Gravity torque vector g(q).
    pub fn gravity_vector(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(q, "gravity_vector q")?;
        let g = self.gravity_accel;
        let v = match self.kind {
            ModelKind::OneLink => {
                let l = self.links[0];
                DVector::from_element(1, l.mass * g * l.com_offset * q[0].cos())
            }
            ModelKind::TwoLink => {
                let [l1, l2] = [self.links[0], self.links[1]];
                let c1 = q[0].cos();
                let c12 = (q[0] + q[1]).cos();
                DVector::from_column_slice(&[
                    (l1.mass * l1.com_offset + l2.mass * l1.length) * g * c1
                        + l2.mass * l2.com_offset * g * c12,
                    l2.mass * l2.com_offset * g * c12,
                ])
            }
            ModelKind::Chain => {
                let n = self.joints();
                let zero = DVector::zeros(n);
                self.rne(q, &zero, &zero, g)
            }
        };
        Ok(v)
    }

    /// Coriolis + gravity bias torque C(q,dq) dq + g(q).
    ///
    /// For the chain this is a single Newton-Euler pass, much cheaper than
    /// assembling the Christoffel matrix.
    pub fn bias_torque(&self, q: &DVector<f64>, dq: &DVector<f64>) -> Result<DVector<f64>> {
        match self.kind {
            ModelKind::Chain => {
                self.check_dim(q, "bias_torque q")?;
                self.check_dim(dq, "bias_torque dq")?;
                let zero = DVector::zeros(self.joints());
                Ok(self.rne(q, dq, &zero, self.gravity_accel))
            }
            _ => {
                let c = self.coriolis_matrix(q, dq)?;
                Ok(c * dq + self.gravity_vector(q)?)
            }
        }
    }

    /// Nominal rigid-body torque M(q) ddq + C(q,dq) dq + g(q).
    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        dq: &DVector<f64>,
        ddq: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_dim(ddq, "inverse_dynamics ddq")?;
        let m = self.mass_matrix(q)?;
        Ok(m * ddq + self.bias_torque(q, dq)?)
    }

    /// Generalized momentum p = M(q) dq.
    pub fn generalized_momentum(&self, q: &DVector<f64>, dq: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(dq, "generalized_momentum dq")?;
        Ok(self.mass_matrix(q)? * dq)
    }

    /// Momentum-dynamics input u = C(q,dq)^T dq - g(q) + tau_m.
    pub fn momentum_input(
        &self,
        q: &DVector<f64>,
        dq: &DVector<f64>,
        tau_m: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_dim(tau_m, "momentum_input tau_m")?;
        let c = self.coriolis_matrix(q, dq)?;
        Ok(c.transpose() * dq - self.gravity_vector(q)? + tau_m)
    }

    /// Forward joint accelerations from applied torques.
    ///
    /// Solves M(q) ddq = tau_applied - C dq - g for the plant integrator.
    pub fn forward_dynamics(
        &self,
        q: &DVector<f64>,
        dq: &DVector<f64>,
        tau_applied: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let m = self.mass_matrix(q)?;
        let rhs = tau_applied - self.bias_torque(q, dq)?;
        m.cholesky()
            .ok_or(Error::IllConditioned("mass matrix"))
            .map(|chol| chol.solve(&rhs))
    }

    /// Planar recursive Newton-Euler: torques required for (q, dq, ddq)
    /// under gravitational acceleration `g` (pass 0 to disable gravity).
    fn rne(&self, q: &DVector<f64>, dq: &DVector<f64>, ddq: &DVector<f64>, g: f64) -> DVector<f64> {
        let n = self.joints();
        let mut phi = vec![0.0; n]; // absolute link angles
        let mut omega = vec![0.0; n];
        let mut alpha = vec![0.0; n];
        let mut joint_acc = vec![[0.0, 0.0]; n]; // acceleration of joint points
        let mut com_acc = vec![[0.0, 0.0]; n];
        let mut d = vec![[0.0, 0.0]; n]; // joint -> next joint
        let mut c = vec![[0.0, 0.0]; n]; // joint -> center of mass

        let (mut acc_prev, mut phi_prev, mut omega_prev, mut alpha_prev) =
            ([0.0, g], 0.0, 0.0, 0.0);
        for i in 0..n {
            phi[i] = phi_prev + q[i];
            omega[i] = omega_prev + dq[i];
            alpha[i] = alpha_prev + ddq[i];
            let (s, co) = phi[i].sin_cos();
            let link = self.links[i];
            d[i] = [link.length * co, link.length * s];
            c[i] = [link.com_offset * co, link.com_offset * s];
            joint_acc[i] = acc_prev;
            // a = a_joint + alpha x r + omega x (omega x r), planar form
            let w2 = omega[i] * omega[i];
            com_acc[i] = [
                joint_acc[i][0] - alpha[i] * c[i][1] - w2 * c[i][0],
                joint_acc[i][1] + alpha[i] * c[i][0] - w2 * c[i][1],
            ];
            acc_prev = [
                joint_acc[i][0] - alpha[i] * d[i][1] - w2 * d[i][0],
                joint_acc[i][1] + alpha[i] * d[i][0] - w2 * d[i][1],
            ];
            phi_prev = phi[i];
            omega_prev = omega[i];
            alpha_prev = alpha[i];
        }

        let mut tau = DVector::zeros(n);
        let mut f_next = [0.0, 0.0];
        let mut n_next = 0.0;
        for i in (0..n).rev() {
            let link = self.links[i];
            let fi = [link.mass * com_acc[i][0], link.mass * com_acc[i][1]];
            let ni = link.inertia * alpha[i];
            let moment = ni
                + n_next
                + (c[i][0] * fi[1] - c[i][1] * fi[0])
                + (d[i][0] * f_next[1] - d[i][1] * f_next[0]);
            tau[i] = moment;
            f_next = [fi[0] + f_next[0], fi[1] + f_next[1]];
            n_next = moment;
        }
        tau
    }

    /// Planar task Jacobian: rows (x_tip, y_tip) for n = 2 and
    /// (x_tip, y_tip, orientation) for n >= 3.
    pub fn jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(q, "jacobian q")?;
        let n = self.joints();
        if n < 2 {
            return Err(Error::SingularConfiguration(
                "planar wrench mapping needs at least 2 joints".into(),
            ));
        }
        let m = if n == 2 { 2 } else { 3 };
        // joint positions and tip
        let mut joints = vec![[0.0, 0.0]; n];
        let mut phi = 0.0;
        let mut pos = [0.0, 0.0];
        for i in 0..n {
            joints[i] = pos;
            phi += q[i];
            pos = [
                pos[0] + self.links[i].length * phi.cos(),
                pos[1] + self.links[i].length * phi.sin(),
            ];
        }
        let mut jac = DMatrix::zeros(m, n);
        for k in 0..n {
            let r = [pos[0] - joints[k][0], pos[1] - joints[k][1]];
            jac[(0, k)] = -r[1];
            jac[(1, k)] = r[0];
            if m == 3 {
                jac[(2, k)] = 1.0;
            }
        }
        Ok(jac)
    }

    /// Least-squares Cartesian wrench F solving J^T F = tau, reported as a
    /// six-axis vector (Fx, Fy, Fz, Mx, My, Mz) with out-of-plane axes zero.
    pub fn cartesian_wrench(&self, q: &DVector<f64>, tau: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(tau, "cartesian_wrench tau")?;
        let jac = self.jacobian(q)?;
        let m = jac.nrows();
        let gram = &jac * jac.transpose();
        // rank check before solving the normal equations
        let svd = gram.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !smin.is_finite() || smin <= 1e-10 * smax.max(1e-300) {
            return Err(Error::SingularConfiguration(format!(
                "task Jacobian rank-deficient (singular value ratio {:.3e})",
                smin / smax
            )));
        }
        let f = gram
            .cholesky()
            .ok_or(Error::IllConditioned("Jacobian Gram matrix"))?
            .solve(&(&jac * tau));
        let mut out = DVector::zeros(6);
        out[0] = f[0];
        out[1] = f[1];
        if m == 3 {
            out[5] = f[2];
        }
        Ok(out)
    }
}
