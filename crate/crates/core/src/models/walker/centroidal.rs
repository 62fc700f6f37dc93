//! Planar centroidal model: CoM, body orientation and a single contact force.
//!
//! State `(c_x, c_z, θ, ċ_x, ċ_z, θ̇)`, control `λ = (λ_x, λ_z)` applied at a
//! fixed contact point `p`:
//! `m c̈ = λ + m g`, `I θ̈ = (p − c) × λ`, integrated with semi-implicit Euler.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::kinematics::cross2;
use crate::ddp::{DdpProblem, StageDerivatives, TerminalDerivatives};
use crate::error::Result;
use crate::trajectory::DynamicalSystem;

pub const STATE_DIM: usize = 6;
pub const CONTROL_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidalDynamics {
    pub mass: f64,
    /// Rotational inertia about the CoM, constant over one walking step.
    pub inertia: f64,
    pub gravity: f64,
    pub contact: Vector2<f64>,
    pub dt: f64,
}

impl CentroidalDynamics {
    /// `(c̈, θ̈)` at CoM `c` under force `λ`.
    pub fn accelerations(&self, c: &Vector2<f64>, lambda: &Vector2<f64>) -> (Vector2<f64>, f64) {
        let cdd = lambda / self.mass + Vector2::new(0.0, -self.gravity);
        let thdd = cross2(&(self.contact - c), lambda) / self.inertia;
        (cdd, thdd)
    }
}

impl DynamicalSystem for CentroidalDynamics {
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
        let h = self.dt;
        let c = Vector2::new(x[0], x[1]);
        let (cdd, thdd) = self.accelerations(&c, &Vector2::new(u[0], u[1]));
        let vx = x[3] + h * cdd.x;
        let vz = x[4] + h * cdd.y;
        let w = x[5] + h * thdd;
        DVector::from_column_slice(&[x[0] + h * vx, x[1] + h * vz, x[2] + h * w, vx, vz, w])
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let h = self.dt;
        let (m, i) = (self.mass, self.inertia);
        let (lx, lz) = (u[0], u[1]);
        let (rx, rz) = (self.contact.x - x[0], self.contact.y - x[1]);
        // Rows of the velocity update, then positions add h times them.
        let mut fx = DMatrix::<f64>::identity(6, 6);
        let mut fu = DMatrix::<f64>::zeros(6, 2);
        fx[(5, 0)] = -h * lz / i;
        fx[(5, 1)] = h * lx / i;
        fu[(3, 0)] = h / m;
        fu[(4, 1)] = h / m;
        fu[(5, 0)] = -h * rz / i;
        fu[(5, 1)] = h * rx / i;
        for (pos, vel) in [(0, 3), (1, 4), (2, 5)] {
            for col in 0..6 {
                fx[(pos, col)] += h * fx[(vel, col)];
            }
            for col in 0..2 {
                fu[(pos, col)] = h * fu[(vel, col)];
            }
        }
        Ok((fx, fu))
    }
}

/// Centroidal local-cost weights: `w_λ ‖λ‖² + w_v ‖ċ‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentroidalWeights {
    pub force: f64,
    pub com_velocity: f64,
}

impl Default for CentroidalWeights {
    fn default() -> Self {
        Self {
            force: 1e-6,
            com_velocity: 1e-3,
        }
    }
}

impl CentroidalWeights {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            force: self.force * factor,
            com_velocity: self.com_velocity * factor,
        }
    }
}

pub struct CentroidalProblem {
    pub dynamics: CentroidalDynamics,
    pub weights: CentroidalWeights,
}

impl CentroidalProblem {
    fn velocity_cost(&self, x: &DVector<f64>) -> f64 {
        self.weights.com_velocity * (x[3] * x[3] + x[4] * x[4])
    }
}

impl DdpProblem for CentroidalProblem {
    fn system(&self) -> &dyn DynamicalSystem {
        &self.dynamics
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> f64 {
        self.weights.force * u.norm_squared() + self.velocity_cost(x)
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        self.velocity_cost(x)
    }

    fn stage_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> StageDerivatives {
        let mut d = StageDerivatives::zeros(STATE_DIM, CONTROL_DIM);
        let (wf, wv) = (self.weights.force, self.weights.com_velocity);
        d.lu = u * (2.0 * wf);
        d.luu = DMatrix::identity(2, 2) * (2.0 * wf);
        for i in [3, 4] {
            d.lx[i] = 2.0 * wv * x[i];
            d.lxx[(i, i)] = 2.0 * wv;
        }
        d
    }

    fn terminal_derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives {
        let mut d = TerminalDerivatives::zeros(STATE_DIM);
        let wv = self.weights.com_velocity;
        for i in [3, 4] {
            d.lx[i] = 2.0 * wv * x[i];
            d.lxx[(i, i)] = 2.0 * wv;
        }
        d
    }
}
