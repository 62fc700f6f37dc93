//! Rigid-contact dynamics, the whole-body discrete step and stance exchange.

use nalgebra::{DVector, Matrix2, SMatrix, SVector, Vector2, Vector3};

use super::kinematics::{Config, WalkerModel, ACTUATED_OFFSET};
use crate::error::{Error, Result};
use crate::trajectory::DynamicalSystem;

/// Contact systems with a larger condition number are rejected.
pub const MAX_CONTACT_CONDITION: f64 = 1e12;

/// Whole-body state `(q, q̇)`.
pub const STATE_DIM: usize = 12;
pub const CONTROL_DIM: usize = 3;

pub fn split_state(x: &DVector<f64>) -> (Config, Config) {
    (
        Config::from_column_slice(&x.as_slice()[..6]),
        Config::from_column_slice(&x.as_slice()[6..12]),
    )
}

pub fn join_state(q: &Config, v: &Config) -> DVector<f64> {
    DVector::from_iterator(STATE_DIM, q.iter().chain(v.iter()).copied())
}

pub fn control3(u: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(u[0], u[1], u[2])
}

/// Accelerations and stance-foot force from the rigid-contact KKT system
/// `H q̈ + C = B u + J_cᵀ λ`, `J_c q̈ + J̇_c q̇ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSolution {
    pub acceleration: Config,
    pub force: Vector2<f64>,
}

impl WalkerModel {
    fn generalized_torque(&self, u: &Vector3<f64>) -> Config {
        let mut tau = Config::zeros();
        for i in 0..3 {
            tau[ACTUATED_OFFSET + i] = u[i];
        }
        tau
    }

    /// The contact-force map `g_λ(q, q̇, u)` with its consistent `q̈`.
    ///
    /// Solved through the Schur complement `Λ = J H⁻¹ Jᵀ`.
    pub fn contact_solve(&self, q: &Config, v: &Config, u: &Vector3<f64>) -> Result<ContactSolution> {
        let chol = self.mass_matrix(q).cholesky().ok_or(Error::SingularMassMatrix)?;
        let j = self.stance_foot.jacobian(q);
        let free = chol.solve(&(self.generalized_torque(u) - self.bias_forces(q, v)));
        let hinv_jt: SMatrix<f64, 6, 2> = chol.solve(&j.transpose());
        let lambda_mat: Matrix2<f64> = j * hinv_jt;
        let condition = super::kinematics::spd2_condition(&lambda_mat);
        if !(condition <= MAX_CONTACT_CONDITION) {
            return Err(Error::IllConditionedContact { condition });
        }
        let rhs = -self.stance_foot.bias_acceleration(q, v) - j * free;
        let force = lambda_mat
            .cholesky()
            .ok_or(Error::IllConditionedContact { condition })?
            .solve(&rhs);
        Ok(ContactSolution {
            acceleration: free + hinv_jt * force,
            force,
        })
    }

    /// Accelerations without contact.
    pub fn free_acceleration(&self, q: &Config, v: &Config, u: &Vector3<f64>) -> Result<Config> {
        let chol = self.mass_matrix(q).cholesky().ok_or(Error::SingularMassMatrix)?;
        Ok(chol.solve(&(self.generalized_torque(u) - self.bias_forces(q, v))))
    }

    /// One contact-free semi-implicit Euler step.
    pub fn free_step(&self, q: &Config, v: &Config, u: &Vector3<f64>, dt: f64) -> Result<(Config, Config)> {
        let v_next = v + self.free_acceleration(q, v, u)? * dt;
        Ok((q + v_next * dt, v_next))
    }

    /// Moves the base so the stance foot sits at `foot` with zero velocity;
    /// angles and angular rates are kept.
    pub fn anchor(&self, q: &Config, v: &Config, foot: &Vector2<f64>) -> (Config, Config) {
        let offset = self.stance_foot.relative(q);
        let mut q = *q;
        q[0] = foot.x - offset.x;
        q[1] = foot.y - offset.y;
        let j = self.stance_foot.jacobian(&q);
        let mut v = *v;
        v[0] = 0.0;
        v[1] = 0.0;
        let foot_velocity = j * v;
        v[0] = -foot_velocity.x;
        v[1] = -foot_velocity.y;
        (q, v)
    }

    /// Torques and force holding `q` at rest, by least squares on
    /// `B u + J_cᵀ λ = C(q, 0)`. Exact only when the CoM is above the foot.
    pub fn static_hold(&self, q: &Config) -> (Vector3<f64>, Vector2<f64>) {
        let mut a = SMatrix::<f64, 6, 5>::zeros();
        for i in 0..3 {
            a[(ACTUATED_OFFSET + i, i)] = 1.0;
        }
        let jt = self.stance_foot.jacobian(q).transpose();
        a.fixed_view_mut::<6, 2>(0, 3).copy_from(&jt);
        let rhs = self.bias_forces(q, &Config::zeros());
        let sol = a.svd(true, true).solve(&rhs, 1e-12).expect("SVD with both factors");
        (Vector3::new(sol[0], sol[1], sol[2]), Vector2::new(sol[3], sol[4]))
    }

    /// Rotates the whole body about the stance foot until the CoM is directly
    /// above it.
    pub fn balance(&self, q: &Config) -> Config {
        let foot = self.stance_foot.position(q);
        let mut q = *q;
        for _ in 0..50 {
            let err = self.com_position(&q).x - foot.x;
            if err.abs() < 1e-14 {
                break;
            }
            // Rotating about the foot moves the CoM horizontally by −(c_z − p_z) per radian.
            let lever = self.com_position(&q).y - foot.y;
            q[2] += err / lever;
            q = self.anchor(&q, &Config::zeros(), &foot).0;
        }
        q
    }

    /// Exchanges stance and swing legs: relabels coordinates, then removes the
    /// new stance foot's velocity with the inelastic (mass-weighted) projection.
    pub fn swap_stance(&self, q: &Config, v: &Config) -> Result<(Config, Config)> {
        let relabel = |x: &Config| Config::from_row_slice(&[x[0], x[1], x[2] + x[3], -x[3], x[5], x[4]]);
        let q_new = relabel(q);
        let v_new = relabel(v);
        let chol = self.mass_matrix(&q_new).cholesky().ok_or(Error::SingularMassMatrix)?;
        let j = self.stance_foot.jacobian(&q_new);
        let hinv_jt: SMatrix<f64, 6, 2> = chol.solve(&j.transpose());
        let lambda_mat: Matrix2<f64> = j * hinv_jt;
        let impulse = lambda_mat
            .cholesky()
            .ok_or(Error::IllConditionedContact {
                condition: super::kinematics::spd2_condition(&lambda_mat),
            })?
            .solve(&(j * v_new));
        Ok((q_new, v_new - hinv_jt * impulse))
    }
}

/// Whole-body single-stance dynamics: contact-consistent semi-implicit Euler
/// with the base re-anchored to the fixed stance foot after each step.
#[derive(Debug, Clone)]
pub struct WalkerDynamics {
    pub model: WalkerModel,
    pub stance_foot: Vector2<f64>,
    pub dt: f64,
}

impl WalkerDynamics {
    /// Next state and the contact force acting during the step.
    pub fn advance(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DVector<f64>, Vector2<f64>)> {
        let (q, v) = split_state(x);
        let sol = self.model.contact_solve(&q, &v, &control3(u))?;
        let v_next = v + sol.acceleration * self.dt;
        let q_next = q + v_next * self.dt;
        let (q_next, v_next) = self.model.anchor(&q_next, &v_next, &self.stance_foot);
        Ok((join_state(&q_next, &v_next), sol.force))
    }
}

impl DynamicalSystem for WalkerDynamics {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }
    fn control_dim(&self) -> usize {
        CONTROL_DIM
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        // A failed contact solve poisons the rollout, which DDP rejects.
        self.advance(x, u)
            .map(|(next, _)| next)
            .unwrap_or_else(|_| DVector::from_element(STATE_DIM, f64::NAN))
    }
}

/// Acceleration-level contact violation `J_c q̈ + J̇_c q̇`.
pub fn contact_residual(model: &WalkerModel, q: &Config, v: &Config, qdd: &Config) -> Vector2<f64> {
    model.stance_foot.jacobian(q) * qdd + model.stance_foot.bias_acceleration(q, v)
}

/// Cross-checks the planar floating-base rows: returns
/// `(m c̈ − λ − m g, L̇ − (p − c) × λ)` with `c̈` and `L̇` from the contact
/// solution.
pub fn decomposition_defect(model: &WalkerModel, q: &Config, v: &Config, sol: &ContactSolution) -> SVector<f64, 3> {
    let m = model.total_mass();
    let c = model.com_position(q);
    let p = model.stance_foot.position(q);
    // d/dt (A_g q̇) = A_g q̈ + (∂(A_g q̇)/∂q) q̇, the latter by central differences.
    let h = 1e-6;
    let ag = |q: &Config| model.centroidal_momentum_matrix(q) * v;
    let rate =
        model.centroidal_momentum_matrix(q) * sol.acceleration + (ag(&(q + v * h)) - ag(&(q - v * h))) / (2.0 * h);
    let linear = Vector2::new(rate[0], rate[1]) - sol.force - model.gravity() * m;
    let angular = rate[2] - super::kinematics::cross2(&(p - c), &sol.force);
    SVector::<f64, 3>::new(linear.x, linear.y, angular)
}
